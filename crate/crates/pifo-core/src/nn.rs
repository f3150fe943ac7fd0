//! Named parameter storage, initialization, and the dense/convolution layer
//! kernels shared by the forward pass and the tape's backward pass.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;
use crate::{CoreError, Result};

// ───────────────────────── parameter sets ─────────────────────────

/// One named parameter tensor and its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

/// An insertion-ordered collection of named parameters.
///
/// Iteration order is the insertion order, which makes everything derived
/// from a parameter set (checkpoint bytes, optimizer traversal) deterministic.
/// Gradients always have the shape of their value and start zeroed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    entries: Vec<ParamEntry>,
}

impl ParamSet {
    pub fn new() -> ParamSet {
        ParamSet::default()
    }

    /// Appends a parameter, rejecting duplicate names.
    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<usize> {
        if self.index_of(name).is_some() {
            return Err(CoreError::State(format!("duplicate parameter name {name:?}")));
        }
        let grad = Tensor::zeros(value.dims());
        self.entries.push(ParamEntry {
            name: name.to_string(),
            value,
            grad,
        });
        Ok(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn entry(&self, index: usize) -> &ParamEntry {
        &self.entries[index]
    }

    pub fn entry_mut(&mut self, index: usize) -> &mut ParamEntry {
        &mut self.entries[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamEntry> {
        self.entries.iter()
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            for g in e.grad.data_mut() {
                *g = 0.0;
            }
        }
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    /// A new set holding clones of all entries of `sets`, in order.
    pub fn merged(sets: &[&ParamSet]) -> Result<ParamSet> {
        let mut out = ParamSet::new();
        for set in sets {
            for e in set.iter() {
                out.insert(&e.name, e.value.clone())?;
            }
        }
        Ok(out)
    }

    /// Clones the entries whose names start with `prefix`, preserving order.
    pub fn extract_prefix(&self, prefix: &str) -> ParamSet {
        let mut out = ParamSet::new();
        for e in self.entries.iter().filter(|e| e.name.starts_with(prefix)) {
            out.insert(&e.name, e.value.clone())
                .expect("source set has unique names");
        }
        out
    }
}

// ───────────────────────── initialization ─────────────────────────

/// How a parameter tensor is filled at initialization time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform in `(-sqrt(1/fan_in), sqrt(1/fan_in))` where `fan_in` is the
    /// product of all dimensions past the first (inputs per output unit).
    FanInUniform,
    Zero,
    Const(f64),
}

/// Declaration of one parameter to create.
#[derive(Debug, Clone)]
pub struct ParamSpec {
    pub name: String,
    pub dims: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    pub fn new(name: &str, dims: &[usize], init: Init) -> ParamSpec {
        ParamSpec {
            name: name.to_string(),
            dims: dims.to_vec(),
            init,
        }
    }
}

/// Builds a parameter set from `specs`, drawing every random element from a
/// single ChaCha stream seeded with `seed`, in declaration order and
/// row-major element order.
pub fn init_params(specs: &[ParamSpec], seed: u64) -> Result<ParamSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ParamSet::new();
    for spec in specs {
        let tensor = match spec.init {
            Init::Zero => Tensor::zeros(&spec.dims),
            Init::Const(v) => Tensor::full(&spec.dims, v),
            Init::FanInUniform => {
                let fan_in: usize = spec.dims[1..].iter().product::<usize>().max(1);
                let bound = libm::sqrt(1.0 / fan_in as f64);
                let mut t = Tensor::zeros(&spec.dims);
                for v in t.data_mut() {
                    *v = (2.0 * rng.random::<f64>() - 1.0) * bound;
                }
                t
            }
        };
        out.insert(&spec.name, tensor)?;
    }
    Ok(out)
}

// ───────────────────────── layer kernels ─────────────────────────

fn dims2(t: &Tensor, op: &'static str) -> Result<(usize, usize)> {
    match t.dims() {
        [a, b] => Ok((*a, *b)),
        _ => Err(CoreError::Shape {
            op,
            lhs: t.dims().to_vec(),
            rhs: vec![0, 0],
        }),
    }
}

/// Rows/width view of a 1-d (single sample) or 2-d (batch) tensor.
fn as_batch(t: &Tensor, op: &'static str) -> Result<(usize, usize)> {
    match t.dims() {
        [n] => Ok((1, *n)),
        [b, n] => Ok((*b, *n)),
        _ => Err(CoreError::Shape {
            op,
            lhs: t.dims().to_vec(),
            rhs: Vec::new(),
        }),
    }
}

/// Affine layer `y = x W^T + b` with `w: [out, in]`, `b: [out]` and `x`
/// either `[in]` or `[batch, in]`.
///
/// Each output element starts from its bias and accumulates products in
/// ascending input order, which pins the floating-point result exactly.
pub fn dense(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (wo, wi) = dims2(w, "dense")?;
    if b.dims() != [wo] {
        return Err(CoreError::Shape {
            op: "dense",
            lhs: w.dims().to_vec(),
            rhs: b.dims().to_vec(),
        });
    }
    let (rows, cols) = as_batch(x, "dense")?;
    if cols != wi {
        return Err(CoreError::Shape {
            op: "dense",
            lhs: x.dims().to_vec(),
            rhs: w.dims().to_vec(),
        });
    }
    let mut out = if x.rank() == 1 {
        Tensor::zeros(&[wo])
    } else {
        Tensor::zeros(&[rows, wo])
    };
    let xd = x.data();
    let wd = w.data();
    let bd = b.data();
    let od = out.data_mut();
    for r in 0..rows {
        let xrow = &xd[r * wi..(r + 1) * wi];
        let orow = &mut od[r * wo..(r + 1) * wo];
        for o in 0..wo {
            let wrow = &wd[o * wi..(o + 1) * wi];
            let mut acc = bd[o];
            for i in 0..wi {
                acc += wrow[i] * xrow[i];
            }
            orow[o] = acc;
        }
    }
    Ok(out)
}

/// Gradients of [`dense`] given upstream `gy` (same shape as the output).
/// Returns `(gx, gw, gb)`; `gx` is skipped unless `need_gx`.
pub fn dense_backward(
    x: &Tensor,
    w: &Tensor,
    gy: &Tensor,
    need_gx: bool,
) -> Result<(Option<Tensor>, Tensor, Tensor)> {
    let (wo, wi) = dims2(w, "dense_backward")?;
    let (rows, _) = as_batch(x, "dense_backward")?;
    let (grows, gcols) = as_batch(gy, "dense_backward")?;
    if grows != rows || gcols != wo {
        return Err(CoreError::Shape {
            op: "dense_backward",
            lhs: gy.dims().to_vec(),
            rhs: w.dims().to_vec(),
        });
    }
    let xd = x.data();
    let wd = w.data();
    let gyd = gy.data();
    let mut gw = Tensor::zeros(&[wo, wi]);
    let mut gb = Tensor::zeros(&[wo]);
    let gwd = gw.data_mut();
    let gbd = gb.data_mut();
    for r in 0..rows {
        let xrow = &xd[r * wi..(r + 1) * wi];
        let grow = &gyd[r * wo..(r + 1) * wo];
        for o in 0..wo {
            let g = grow[o];
            gbd[o] += g;
            let gwrow = &mut gwd[o * wi..(o + 1) * wi];
            for i in 0..wi {
                gwrow[i] += g * xrow[i];
            }
        }
    }
    let gx = if need_gx {
        let mut gx = Tensor::zeros(x.dims());
        let gxd = gx.data_mut();
        for r in 0..rows {
            let grow = &gyd[r * wo..(r + 1) * wo];
            let gxrow = &mut gxd[r * wi..(r + 1) * wi];
            for o in 0..wo {
                let g = grow[o];
                let wrow = &wd[o * wi..(o + 1) * wi];
                for i in 0..wi {
                    gxrow[i] += g * wrow[i];
                }
            }
        }
        Some(gx)
    } else {
        None
    };
    Ok((gx, gw, gb))
}

/// Shape bookkeeping shared by the convolution kernels.
struct ConvDims {
    batch: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    batched: bool,
}

fn conv_dims(x: &Tensor, k: &Tensor, b: &Tensor, stride: usize) -> Result<ConvDims> {
    if stride == 0 {
        return Err(CoreError::Config("conv2d stride must be at least 1".into()));
    }
    let (cout, cin, kh, kw) = match k.dims() {
        [a, b, c, d] => (*a, *b, *c, *d),
        _ => {
            return Err(CoreError::Shape {
                op: "conv2d",
                lhs: k.dims().to_vec(),
                rhs: vec![0, 0, 0, 0],
            })
        }
    };
    if b.dims() != [cout] {
        return Err(CoreError::Shape {
            op: "conv2d",
            lhs: k.dims().to_vec(),
            rhs: b.dims().to_vec(),
        });
    }
    let (batch, xc, h, w, batched) = match x.dims() {
        [c, h, w] => (1, *c, *h, *w, false),
        [n, c, h, w] => (*n, *c, *h, *w, true),
        _ => {
            return Err(CoreError::Shape {
                op: "conv2d",
                lhs: x.dims().to_vec(),
                rhs: k.dims().to_vec(),
            })
        }
    };
    if xc != cin || h < kh || w < kw {
        return Err(CoreError::Shape {
            op: "conv2d",
            lhs: x.dims().to_vec(),
            rhs: k.dims().to_vec(),
        });
    }
    Ok(ConvDims {
        batch,
        cin,
        h,
        w,
        cout,
        kh,
        kw,
        oh: (h - kh) / stride + 1,
        ow: (w - kw) / stride + 1,
        batched,
    })
}

/// Valid (unpadded) 2-d cross-correlation with a square stride.
///
/// `x: [cin, h, w]` or `[batch, cin, h, w]`, `k: [cout, cin, kh, kw]`,
/// `b: [cout]`; the output spatial size is `(h - kh)/stride + 1` squared off
/// per axis. Each output element starts from its bias and accumulates taps in
/// ascending `(cin, ky, kx)` order, which pins the floating-point result.
pub fn conv2d(x: &Tensor, k: &Tensor, b: &Tensor, stride: usize) -> Result<Tensor> {
    let d = conv_dims(x, k, b, stride)?;
    let mut out = if d.batched {
        Tensor::zeros(&[d.batch, d.cout, d.oh, d.ow])
    } else {
        Tensor::zeros(&[d.cout, d.oh, d.ow])
    };
    let xd = x.data();
    let kd = k.data();
    let bd = b.data();
    let od = out.data_mut();
    let in_plane = d.h * d.w;
    let out_plane = d.oh * d.ow;
    for n in 0..d.batch {
        let xs = &xd[n * d.cin * in_plane..(n + 1) * d.cin * in_plane];
        let os = &mut od[n * d.cout * out_plane..(n + 1) * d.cout * out_plane];
        for co in 0..d.cout {
            os[co * out_plane..(co + 1) * out_plane].fill(bd[co]);
        }
        for co in 0..d.cout {
            for ci in 0..d.cin {
                for ky in 0..d.kh {
                    for kx in 0..d.kw {
                        let wv = kd[((co * d.cin + ci) * d.kh + ky) * d.kw + kx];
                        for oy in 0..d.oh {
                            let iy = oy * stride + ky;
                            let xrow = &xs[ci * in_plane + iy * d.w + kx..];
                            let orow = &mut os[(co * d.oh + oy) * d.ow..(co * d.oh + oy + 1) * d.ow];
                            for (ox, ov) in orow.iter_mut().enumerate() {
                                *ov += wv * xrow[ox * stride];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of [`conv2d`] given upstream `gy` (same shape as the output).
/// Returns `(gx, gk, gb)`; `gx` is skipped unless `need_gx`.
pub fn conv2d_backward(
    x: &Tensor,
    k: &Tensor,
    stride: usize,
    gy: &Tensor,
    need_gx: bool,
) -> Result<(Option<Tensor>, Tensor, Tensor)> {
    let bias = Tensor::zeros(&[k.dims()[0]]);
    let d = conv_dims(x, k, &bias, stride)?;
    let expect: &[usize] = &[d.batch, d.cout, d.oh, d.ow];
    let gy_ok = if d.batched {
        gy.dims() == expect
    } else {
        gy.dims() == &expect[1..]
    };
    if !gy_ok {
        return Err(CoreError::Shape {
            op: "conv2d_backward",
            lhs: gy.dims().to_vec(),
            rhs: expect.to_vec(),
        });
    }
    let xd = x.data();
    let kd = k.data();
    let gyd = gy.data();
    let mut gk = Tensor::zeros(k.dims());
    let mut gb = Tensor::zeros(&[d.cout]);
    let mut gx = if need_gx { Some(Tensor::zeros(x.dims())) } else { None };
    let gkd = gk.data_mut();
    let gbd = gb.data_mut();
    let in_plane = d.h * d.w;
    let out_plane = d.oh * d.ow;
    for n in 0..d.batch {
        let xs = &xd[n * d.cin * in_plane..(n + 1) * d.cin * in_plane];
        let gys = &gyd[n * d.cout * out_plane..(n + 1) * d.cout * out_plane];
        for co in 0..d.cout {
            let mut acc = 0.0;
            for g in &gys[co * out_plane..(co + 1) * out_plane] {
                acc += *g;
            }
            gbd[co] += acc;
        }
        for co in 0..d.cout {
            for ci in 0..d.cin {
                for ky in 0..d.kh {
                    for kx in 0..d.kw {
                        let mut acc = 0.0;
                        for oy in 0..d.oh {
                            let iy = oy * stride + ky;
                            let xrow = &xs[ci * in_plane + iy * d.w + kx..];
                            let grow = &gys[(co * d.oh + oy) * d.ow..(co * d.oh + oy + 1) * d.ow];
                            for (ox, gv) in grow.iter().enumerate() {
                                acc += gv * xrow[ox * stride];
                            }
                        }
                        gkd[((co * d.cin + ci) * d.kh + ky) * d.kw + kx] += acc;
                    }
                }
            }
        }
        if let Some(gx) = gx.as_mut() {
            let gxd = gx.data_mut();
            let gxs = &mut gxd[n * d.cin * in_plane..(n + 1) * d.cin * in_plane];
            for co in 0..d.cout {
                for ci in 0..d.cin {
                    for ky in 0..d.kh {
                        for kx in 0..d.kw {
                            let wv = kd[((co * d.cin + ci) * d.kh + ky) * d.kw + kx];
                            for oy in 0..d.oh {
                                let iy = oy * stride + ky;
                                let grow =
                                    &gys[(co * d.oh + oy) * d.ow..(co * d.oh + oy + 1) * d.ow];
                                let gxrow = &mut gxs[ci * in_plane + iy * d.w + kx..];
                                for (ox, gv) in grow.iter().enumerate() {
                                    gxrow[ox * stride] += wv * gv;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((gx, gk, gb))
}

// ───────────────────────── activations ─────────────────────────

pub fn tanh_t(x: &Tensor) -> Tensor {
    x.map(libm::tanh)
}

pub fn relu_t(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

pub fn sigmoid_t(x: &Tensor) -> Tensor {
    x.map(sigmoid)
}

/// Numerically stable logistic function; stays in `[0, 1]` for all inputs.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}
