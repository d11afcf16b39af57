use super::params::{Bound, Init, ParamId, ParamStore, LEAKY_SLOPE};
use crate::autodiff::{Graph, Var};
use crate::error::Result;

#[derive(Clone, Debug)]
pub struct Conv {
    w: ParamId,
    b: ParamId,
    stride: usize,
    pad: usize,
}

impl Conv {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        let w = store.add(
            &format!("{name}.weight"),
            &[c_out, c_in, kernel],
            Init::Kaiming {
                fan_in: c_in * kernel,
            },
        );
        let b = store.add(&format!("{name}.bias"), &[c_out], Init::Constant(0.0));
        Conv { w, b, stride, pad }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        g.conv1d(x, p.var(self.w), Some(p.var(self.b)), self.stride, self.pad)
    }
}

#[derive(Clone, Debug)]
pub struct ConvTranspose {
    w: ParamId,
    b: ParamId,
    stride: usize,
    pad: usize,
}

impl ConvTranspose {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        let w = store.add(
            &format!("{name}.weight"),
            &[c_in, c_out, kernel],
            Init::Kaiming {
                fan_in: (c_in * kernel / stride).max(1),
            },
        );
        let b = store.add(&format!("{name}.bias"), &[c_out], Init::Constant(0.0));
        ConvTranspose { w, b, stride, pad }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        g.conv_transpose1d(x, p.var(self.w), Some(p.var(self.b)), self.stride, self.pad)
    }
}

#[derive(Clone, Debug)]
pub struct Dense {
    w: ParamId,
    b: ParamId,
}

impl Dense {
    pub fn new(store: &mut ParamStore, name: &str, fin: usize, fout: usize, bias_init: f64) -> Self {
        let w = store.add(
            &format!("{name}.weight"),
            &[fout, fin],
            Init::Kaiming { fan_in: fin },
        );
        let b = store.add(&format!("{name}.bias"), &[fout], Init::Constant(bias_init));
        Dense { w, b }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        g.linear(x, p.var(self.w), Some(p.var(self.b)))
    }
}

/// Three convolutions that shorten time by four:
/// kernel 4 stride 2, kernel 4 stride 2, kernel 3 stride 1.
#[derive(Clone, Debug)]
pub struct Encoder {
    layers: [Conv; 3],
}

impl Encoder {
    pub fn new(store: &mut ParamStore, name: &str, c_in: usize, hidden: usize, c_out: usize) -> Self {
        Encoder {
            layers: [
                Conv::new(store, &format!("{name}.0"), c_in, hidden, 4, 2, 1),
                Conv::new(store, &format!("{name}.1"), hidden, c_out, 4, 2, 1),
                Conv::new(store, &format!("{name}.2"), c_out, c_out, 3, 1, 1),
            ],
        }
    }

    /// Linear output (no activation after the last layer).
    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let h = self.layers[0].forward(g, p, x)?;
        let h = g.leaky_relu(h, LEAKY_SLOPE);
        let h = self.layers[1].forward(g, p, h)?;
        let h = g.leaky_relu(h, LEAKY_SLOPE);
        self.layers[2].forward(g, p, h)
    }
}

/// Mirror of [`Encoder`]: time grows by four.
#[derive(Clone, Debug)]
pub struct Decoder {
    first: Conv,
    up: [ConvTranspose; 2],
}

impl Decoder {
    pub fn new(store: &mut ParamStore, name: &str, c_in: usize, hidden: usize, c_out: usize) -> Self {
        Decoder {
            first: Conv::new(store, &format!("{name}.0"), c_in, c_in, 3, 1, 1),
            up: [
                ConvTranspose::new(store, &format!("{name}.1"), c_in, hidden, 4, 2, 1),
                ConvTranspose::new(store, &format!("{name}.2"), hidden, c_out, 4, 2, 1),
            ],
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, z: Var) -> Result<Var> {
        let h = self.first.forward(g, p, z)?;
        let h = g.leaky_relu(h, LEAKY_SLOPE);
        let h = self.up[0].forward(g, p, h)?;
        let h = g.leaky_relu(h, LEAKY_SLOPE);
        let h = self.up[1].forward(g, p, h)?;
        Ok(g.leaky_relu(h, LEAKY_SLOPE))
    }
}

/// Stack of same-length convolutions with kernel 3, each followed by a
/// leaky-ReLU.
#[derive(Clone, Debug)]
pub struct ConvStack {
    layers: Vec<Conv>,
}

impl ConvStack {
    pub fn new(store: &mut ParamStore, name: &str, c_in: usize, width: usize, depth: usize) -> Self {
        let layers = (0..depth)
            .map(|i| {
                let cin = if i == 0 { c_in } else { width };
                Conv::new(store, &format!("{name}.{i}"), cin, width, 3, 1, 1)
            })
            .collect();
        ConvStack { layers }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let mut h = x;
        for layer in &self.layers {
            let y = layer.forward(g, p, h)?;
            h = g.leaky_relu(y, LEAKY_SLOPE);
        }
        Ok(h)
    }
}

/// `act(conv(act(conv(x))) + proj(x))` with a 1x1 projection shortcut.
#[derive(Clone, Debug)]
pub struct ResidualBlock {
    conv1: Conv,
    conv2: Conv,
    skip: Conv,
}

impl ResidualBlock {
    pub fn new(store: &mut ParamStore, name: &str, c_in: usize, c_out: usize) -> Self {
        ResidualBlock {
            conv1: Conv::new(store, &format!("{name}.conv1"), c_in, c_out, 3, 1, 1),
            conv2: Conv::new(store, &format!("{name}.conv2"), c_out, c_out, 3, 1, 1),
            skip: Conv::new(store, &format!("{name}.skip"), c_in, c_out, 1, 1, 0),
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let h = self.conv1.forward(g, p, x)?;
        let h = g.leaky_relu(h, LEAKY_SLOPE);
        let h = self.conv2.forward(g, p, h)?;
        let s = self.skip.forward(g, p, x)?;
        let y = g.add(h, s)?;
        Ok(g.leaky_relu(y, LEAKY_SLOPE))
    }
}

/// Single-head temporal self-attention over a causal window, added back
/// onto its input.
#[derive(Clone, Debug)]
pub struct TemporalAttention {
    query: Conv,
    key: Conv,
    value: Conv,
    out: Conv,
    channels: usize,
    window: usize,
}

impl TemporalAttention {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize, window: usize) -> Self {
        let mk = |store: &mut ParamStore, part: &str| {
            Conv::new(store, &format!("{name}.{part}"), channels, channels, 1, 1, 0)
        };
        TemporalAttention {
            query: mk(store, "query"),
            key: mk(store, "key"),
            value: mk(store, "value"),
            out: mk(store, "out"),
            channels,
            window,
        }
    }

    /// `x: [B, C, T]` to `[B, C, T]`.
    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let q = self.query.forward(g, p, x)?;
        let k = self.key.forward(g, p, x)?;
        let v = self.value.forward(g, p, x)?;
        let qt = g.transpose_last(q)?;
        let scores = g.bmm(qt, k)?;
        let scores = g.scale(scores, 1.0 / (self.channels as f64).sqrt());
        let attn = g.masked_softmax(scores, self.window)?;
        let attn_t = g.transpose_last(attn)?;
        let mixed = g.bmm(v, attn_t)?;
        let o = self.out.forward(g, p, mixed)?;
        g.add(x, o)
    }
}
