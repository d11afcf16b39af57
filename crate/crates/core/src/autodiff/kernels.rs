//! Loop kernels for 1D convolution and batched matrix products.
//!
//! Every kernel accumulates in a fixed order so results are bitwise
//! reproducible.

#[derive(Clone, Copy, Debug)]
pub struct ConvGeom {
    pub batch: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub t_in: usize,
    pub t_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

/// Output indices `o` with `0 <= o * stride + k - pad < t_in`.
#[inline]
fn valid_range(k: usize, g: &ConvGeom) -> (usize, usize) {
    let (s, p) = (g.stride as isize, g.pad as isize);
    let k = k as isize;
    let lo = if p > k { (p - k + s - 1) / s } else { 0 };
    let hi_incl = (g.t_in as isize - 1 + p - k).div_euclid(s);
    let hi = (hi_incl + 1).clamp(0, g.t_out as isize);
    (lo.min(hi) as usize, hi as usize)
}

/// `y[b, co, o] = bias[co] + sum x[b, ci, o*s + k - p] * w[co, ci, k]`.
pub fn conv1d_forward(x: &[f64], w: &[f64], bias: Option<&[f64]>, g: &ConvGeom) -> Vec<f64> {
    let mut y = vec![0.0; g.batch * g.c_out * g.t_out];
    for b in 0..g.batch {
        for co in 0..g.c_out {
            let yr = &mut y[(b * g.c_out + co) * g.t_out..][..g.t_out];
            if let Some(bias) = bias {
                yr.fill(bias[co]);
            }
            for ci in 0..g.c_in {
                let xr = &x[(b * g.c_in + ci) * g.t_in..][..g.t_in];
                let wr = &w[(co * g.c_in + ci) * g.kernel..][..g.kernel];
                for (k, &wv) in wr.iter().enumerate() {
                    let (lo, hi) = valid_range(k, g);
                    if lo >= hi {
                        continue;
                    }
                    let start = lo * g.stride + k - g.pad;
                    if g.stride == 1 {
                        for (yv, xv) in yr[lo..hi].iter_mut().zip(&xr[start..start + (hi - lo)]) {
                            *yv += wv * xv;
                        }
                    } else {
                        for (n, yv) in yr[lo..hi].iter_mut().enumerate() {
                            *yv += wv * xr[start + n * g.stride];
                        }
                    }
                }
            }
        }
    }
    y
}

/// Accumulates input, kernel and bias gradients of [`conv1d_forward`].
pub fn conv1d_backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    g: &ConvGeom,
    mut dx: Option<&mut [f64]>,
    mut dw: Option<&mut [f64]>,
    db: Option<&mut [f64]>,
) {
    if let Some(db) = db {
        for b in 0..g.batch {
            for co in 0..g.c_out {
                db[co] += dy[(b * g.c_out + co) * g.t_out..][..g.t_out].iter().sum::<f64>();
            }
        }
    }
    for b in 0..g.batch {
        for co in 0..g.c_out {
            let dyr = &dy[(b * g.c_out + co) * g.t_out..][..g.t_out];
            for ci in 0..g.c_in {
                let xoff = (b * g.c_in + ci) * g.t_in;
                let woff = (co * g.c_in + ci) * g.kernel;
                for k in 0..g.kernel {
                    let (lo, hi) = valid_range(k, g);
                    if lo >= hi {
                        continue;
                    }
                    let start = lo * g.stride + k - g.pad;
                    let n = hi - lo;
                    if let Some(dw) = dw.as_deref_mut() {
                        let xr = &x[xoff..xoff + g.t_in];
                        let mut acc = 0.0;
                        if g.stride == 1 {
                            for (d, xv) in dyr[lo..hi].iter().zip(&xr[start..start + n]) {
                                acc += d * xv;
                            }
                        } else {
                            for (i, d) in dyr[lo..hi].iter().enumerate() {
                                acc += d * xr[start + i * g.stride];
                            }
                        }
                        dw[woff + k] += acc;
                    }
                    if let Some(dx) = dx.as_deref_mut() {
                        let wv = w[woff + k];
                        let dxr = &mut dx[xoff..xoff + g.t_in];
                        if g.stride == 1 {
                            for (xv, d) in dxr[start..start + n].iter_mut().zip(&dyr[lo..hi]) {
                                *xv += wv * d;
                            }
                        } else {
                            for (i, d) in dyr[lo..hi].iter().enumerate() {
                                dxr[start + i * g.stride] += wv * d;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Transposed convolution with kernels laid out `[c_in, c_out, k]`:
/// `y[b, co, i*s + k - p] += x[b, ci, i] * w[ci, co, k]`.
///
/// `g.t_in`/`g.t_out` refer to this op's input and output lengths.
pub fn conv_transpose1d_forward(x: &[f64], w: &[f64], bias: Option<&[f64]>, g: &ConvGeom) -> Vec<f64> {
    let mut y = vec![0.0; g.batch * g.c_out * g.t_out];
    // The transposed op is the adjoint of a conv from t_out to t_in.
    let adj = ConvGeom {
        t_in: g.t_out,
        t_out: g.t_in,
        ..*g
    };
    for b in 0..g.batch {
        for co in 0..g.c_out {
            let yr = &mut y[(b * g.c_out + co) * g.t_out..][..g.t_out];
            if let Some(bias) = bias {
                yr.fill(bias[co]);
            }
            for ci in 0..g.c_in {
                let xr = &x[(b * g.c_in + ci) * g.t_in..][..g.t_in];
                let wr = &w[(ci * g.c_out + co) * g.kernel..][..g.kernel];
                for (k, &wv) in wr.iter().enumerate() {
                    let (lo, hi) = valid_range(k, &adj);
                    if lo >= hi {
                        continue;
                    }
                    let start = lo * g.stride + k - g.pad;
                    if g.stride == 1 {
                        for (yv, xv) in yr[start..start + (hi - lo)].iter_mut().zip(&xr[lo..hi]) {
                            *yv += wv * xv;
                        }
                    } else {
                        for (n, xv) in xr[lo..hi].iter().enumerate() {
                            yr[start + n * g.stride] += wv * xv;
                        }
                    }
                }
            }
        }
    }
    y
}

pub fn conv_transpose1d_backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    g: &ConvGeom,
    mut dx: Option<&mut [f64]>,
    mut dw: Option<&mut [f64]>,
    db: Option<&mut [f64]>,
) {
    if let Some(db) = db {
        for b in 0..g.batch {
            for co in 0..g.c_out {
                db[co] += dy[(b * g.c_out + co) * g.t_out..][..g.t_out].iter().sum::<f64>();
            }
        }
    }
    let adj = ConvGeom {
        t_in: g.t_out,
        t_out: g.t_in,
        ..*g
    };
    for b in 0..g.batch {
        for ci in 0..g.c_in {
            let xoff = (b * g.c_in + ci) * g.t_in;
            for co in 0..g.c_out {
                let dyr = &dy[(b * g.c_out + co) * g.t_out..][..g.t_out];
                let woff = (ci * g.c_out + co) * g.kernel;
                for k in 0..g.kernel {
                    let (lo, hi) = valid_range(k, &adj);
                    if lo >= hi {
                        continue;
                    }
                    let start = lo * g.stride + k - g.pad;
                    let n = hi - lo;
                    if let Some(dw) = dw.as_deref_mut() {
                        let xr = &x[xoff..xoff + g.t_in];
                        let mut acc = 0.0;
                        if g.stride == 1 {
                            for (xv, d) in xr[lo..hi].iter().zip(&dyr[start..start + n]) {
                                acc += xv * d;
                            }
                        } else {
                            for (i, xv) in xr[lo..hi].iter().enumerate() {
                                acc += xv * dyr[start + i * g.stride];
                            }
                        }
                        dw[woff + k] += acc;
                    }
                    if let Some(dx) = dx.as_deref_mut() {
                        let wv = w[woff + k];
                        let dxr = &mut dx[xoff..xoff + g.t_in];
                        if g.stride == 1 {
                            for (xv, d) in dxr[lo..hi].iter_mut().zip(&dyr[start..start + n]) {
                                *xv += wv * d;
                            }
                        } else {
                            for (i, xv) in dxr[lo..hi].iter_mut().enumerate() {
                                *xv += wv * dyr[start + i * g.stride];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// `c[b] = a[b] @ bm[b]` for `a: [B, M, K]`, `bm: [B, K, N]`.
pub fn bmm(a: &[f64], bm: &[f64], batch: usize, m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; batch * m * n];
    for b in 0..batch {
        for i in 0..m {
            let cr = &mut c[(b * m + i) * n..][..n];
            for kk in 0..k {
                let av = a[(b * m + i) * k + kk];
                let br = &bm[(b * k + kk) * n..][..n];
                for (cv, bv) in cr.iter_mut().zip(br) {
                    *cv += av * bv;
                }
            }
        }
    }
    c
}
