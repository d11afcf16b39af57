use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Result, VtmError};

/// Negative slope used by every leaky-ReLU in the networks.
pub const LEAKY_SLOPE: f64 = 0.2;

/// Index of a tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(&self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Init {
    /// Kaiming-uniform for leaky-ReLU networks.
    Kaiming {
        fan_in: usize,
    },
    Constant(f64),
}

/// Named, ordered parameter tensors.
///
/// Each tensor draws its initial values from its own generator seeded by
/// the store seed and the parameter name, so adding or resizing one
/// parameter never changes the initial values of another.
#[derive(Clone, Debug)]
pub struct ParamStore {
    seed: u64,
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

/// FNV-1a over the name, mixed with the seed.
fn name_seed(seed: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        ParamStore {
            seed,
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Seed used by parameters added from now on.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }

    pub fn add(&mut self, name: &str, shape: &[usize], init: Init) -> ParamId {
        assert!(self.find(name).is_none(), "duplicate parameter {name}");
        let n: usize = shape.iter().product();
        let data = match init {
            Init::Constant(c) => vec![c; n],
            Init::Kaiming { fan_in } => {
                let gain = 2.0 / (1.0 + LEAKY_SLOPE * LEAKY_SLOPE);
                let bound = (3.0 * gain / fan_in.max(1) as f64).sqrt();
                let mut rng = ChaCha8Rng::seed_from_u64(name_seed(self.seed, name));
                let dist = Uniform::new_inclusive(-bound, bound);
                (0..n).map(|_| dist.sample(&mut rng)).collect()
            }
        };
        self.names.push(name.to_string());
        self.tensors
            .push(Tensor::new(shape.to_vec(), data).expect("shape matches"));
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.tensors.iter().map(Tensor::numel).collect()
    }

    /// Overwrites a parameter by name; the shape must match.
    pub fn assign(&mut self, name: &str, value: Tensor) -> Result<()> {
        let id = self
            .find(name)
            .ok_or_else(|| VtmError::Checkpoint(format!("unknown parameter {name}")))?;
        if self.tensors[id.0].shape() != value.shape() {
            return Err(VtmError::Checkpoint(format!(
                "parameter {name}: expected shape {:?}, found {:?}",
                self.tensors[id.0].shape(),
                value.shape()
            )));
        }
        self.tensors[id.0] = value;
        Ok(())
    }

    /// Places every parameter in `g`, tracked when `trainable` is set.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Bound {
        bind_tensors(g, &self.tensors, trainable)
    }
}

/// Binds tensors laid out like a store's parameters, for example perturbed
/// copies during gradient checks.
pub fn bind_tensors(g: &mut Graph, tensors: &[Tensor], trainable: bool) -> Bound {
    let vars = tensors
        .iter()
        .map(|t| {
            if trainable {
                g.variable(t.clone())
            } else {
                g.constant(t.clone())
            }
        })
        .collect();
    Bound { vars }
}

/// Graph handles of a bound [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Gradient of every parameter after `g.backward`, zero where none flowed.
    pub fn gradients(&self, g: &mut Graph) -> Vec<Vec<f64>> {
        self.vars
            .iter()
            .map(|&v| {
                let n = g.value(v).numel();
                g.take_grad(v).unwrap_or_else(|| vec![0.0; n])
            })
            .collect()
    }
}
