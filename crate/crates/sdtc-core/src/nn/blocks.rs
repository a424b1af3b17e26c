//! Neural building blocks: linear, conv, layer norm, attention, FFN, patch
//! embedding. Blocks hold parameter names; values come from a [`Bound`] view.

use std::rc::Rc;

use super::params::{scoped, Bound, Init, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Affine map on the last axis.
pub struct Linear {
    pub w: String,
    pub b: String,
    pub c_in: usize,
    pub c_out: usize,
}

impl Linear {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        prefix: &str,
        c_in: usize,
        c_out: usize,
    ) -> Result<Self> {
        Ok(Linear {
            w: store.add(
                &scoped(prefix, "w"),
                &[c_in, c_out],
                Init::XavierUniform {
                    fan_in: c_in,
                    fan_out: c_out,
                },
            )?,
            b: store.add(&scoped(prefix, "b"), &[c_out], Init::Zeros)?,
            c_in,
            c_out,
        })
    }

    pub fn forward<S: Scalar>(&self, p: &Bound<S>, x: &Tensor<S>) -> Result<Tensor<S>> {
        let dims = x.dims();
        let last = *dims.last().unwrap();
        if last != self.c_in {
            return Err(Error::dimension(
                "linear",
                format!("input {} has last extent {last}, expected {}", x.shape(), self.c_in),
            ));
        }
        let rows: usize = dims[..dims.len() - 1].iter().product();
        let flat = x.reshape(&[rows, self.c_in])?;
        let out = flat.matmul(p.get(&self.w)?)?.add(p.get(&self.b)?)?;
        let mut out_dims = dims.to_vec();
        *out_dims.last_mut().unwrap() = self.c_out;
        out.reshape(&out_dims)
    }
}

/// Square 2D convolution, stride 1, zero padding `(k-1)/2`. Odd `k` only.
pub struct Conv2dLayer {
    pub w: String,
    pub b: String,
    pub k: usize,
}

impl Conv2dLayer {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        prefix: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
    ) -> Result<Self> {
        if k % 2 == 0 {
            return Err(Error::contract(format!(
                "conv kernel size must be odd, got {k} for {prefix}"
            )));
        }
        let fan = c_in * k * k;
        Ok(Conv2dLayer {
            w: store.add(
                &scoped(prefix, "w"),
                &[c_out, c_in, k, k],
                Init::XavierUniform {
                    fan_in: fan,
                    fan_out: c_out * k * k,
                },
            )?,
            b: store.add(&scoped(prefix, "b"), &[c_out], Init::Zeros)?,
            k,
        })
    }

    pub fn forward<S: Scalar>(&self, p: &Bound<S>, x: &Tensor<S>) -> Result<Tensor<S>> {
        x.conv2d(p.get(&self.w)?, p.get(&self.b)?)
    }
}

/// Last-axis normalization to mean 0 / variance 1, then learned affine.
pub struct LayerNorm {
    pub gamma: String,
    pub beta: String,
    pub c: usize,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

impl LayerNorm {
    pub fn new<S: Scalar>(store: &mut ParamStore<S>, prefix: &str, c: usize) -> Result<Self> {
        if c < 2 {
            return Err(Error::contract(format!(
                "layer_norm needs at least 2 channels, got {c}"
            )));
        }
        Ok(LayerNorm {
            gamma: store.add(&scoped(prefix, "gamma"), &[c], Init::Ones)?,
            beta: store.add(&scoped(prefix, "beta"), &[c], Init::Zeros)?,
            c,
        })
    }

    pub fn forward<S: Scalar>(&self, p: &Bound<S>, x: &Tensor<S>) -> Result<Tensor<S>> {
        let last = x.shape().rank() - 1;
        if x.dims()[last] != self.c {
            return Err(Error::dimension(
                "layer_norm",
                format!("input {} has last extent {}, expected {}", x.shape(), x.dims()[last], self.c),
            ));
        }
        let mean = x.mean_axis(last)?;
        let centered = x.sub(&mean)?;
        let var = centered.mul(&centered)?.mean_axis(last)?;
        let denom = var.add_scalar(S::from_f64(LAYER_NORM_EPS))?.sqrt()?;
        let normed = centered.div(&denom)?;
        normed.mul(p.get(&self.gamma)?)?.add(p.get(&self.beta)?)
    }
}

/// Multi-head self-attention over a token matrix (N, C).
///
/// Carries no positional information: permuting the input tokens permutes
/// the outputs identically.
pub struct Mhsa {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    pub heads: usize,
    pub c: usize,
}

impl Mhsa {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        prefix: &str,
        c: usize,
        heads: usize,
    ) -> Result<Self> {
        if heads == 0 || c % heads != 0 {
            return Err(Error::contract(format!(
                "mhsa channels {c} not divisible by heads {heads}"
            )));
        }
        Ok(Mhsa {
            q: Linear::new(store, &scoped(prefix, "wq"), c, c)?,
            k: Linear::new(store, &scoped(prefix, "wk"), c, c)?,
            v: Linear::new(store, &scoped(prefix, "wv"), c, c)?,
            o: Linear::new(store, &scoped(prefix, "wo"), c, c)?,
            heads,
            c,
        })
    }

    pub fn forward<S: Scalar>(&self, p: &Bound<S>, x: &Tensor<S>) -> Result<Tensor<S>> {
        if x.shape().rank() != 2 || x.dims()[1] != self.c {
            return Err(Error::dimension(
                "mhsa",
                format!("expected (N, {}), got {}", self.c, x.shape()),
            ));
        }
        let q = self.q.forward(p, x)?;
        let k = self.k.forward(p, x)?;
        let v = self.v.forward(p, x)?;
        let dh = self.c / self.heads;
        let scale = S::from_f64(1.0 / (dh as f64).sqrt());
        let mut head_outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = q.slice(1, h * dh, dh)?;
            let kh = k.slice(1, h * dh, dh)?;
            let vh = v.slice(1, h * dh, dh)?;
            let scores = qh.matmul(&kh.transpose()?)?.mul_scalar(scale)?;
            let attn = scores.softmax(1)?;
            head_outs.push(attn.matmul(&vh)?);
        }
        let refs: Vec<&Tensor<S>> = head_outs.iter().collect();
        let merged = Tensor::concat(&refs, 1)?;
        self.o.forward(p, &merged)
    }
}

/// Two-layer feed-forward network with GELU, hidden width `expansion * c`.
pub struct Ffn {
    lin1: Linear,
    lin2: Linear,
}

impl Ffn {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        prefix: &str,
        c: usize,
        expansion: usize,
    ) -> Result<Self> {
        let hidden = expansion * c;
        Ok(Ffn {
            lin1: Linear::new(store, &scoped(prefix, "lin1"), c, hidden)?,
            lin2: Linear::new(store, &scoped(prefix, "lin2"), hidden, c)?,
        })
    }

    pub fn forward<S: Scalar>(&self, p: &Bound<S>, x: &Tensor<S>) -> Result<Tensor<S>> {
        self.lin2.forward(p, &self.lin1.forward(p, x)?.gelu()?)
    }
}

/// Non-overlapping patch projection of an RGB frame to a token grid.
pub struct PatchEmbed {
    proj: Linear,
    pub patch: usize,
    pub c: usize,
}

impl PatchEmbed {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        prefix: &str,
        patch: usize,
        c: usize,
    ) -> Result<Self> {
        Ok(PatchEmbed {
            proj: Linear::new(store, &scoped(prefix, "proj"), 3 * patch * patch, c)?,
            patch,
            c,
        })
    }

    /// (3, H, W) -> (L, C) with L = (H/p)(W/p). H and W must be multiples of p.
    pub fn forward<S: Scalar>(&self, p: &Bound<S>, frame: &Tensor<S>) -> Result<Tensor<S>> {
        let dims = frame.dims();
        if frame.shape().rank() != 3 || dims[0] != 3 {
            return Err(Error::dimension(
                "patch_embed",
                format!("expected (3, H, W), got {}", frame.shape()),
            ));
        }
        let (h, w) = (dims[1], dims[2]);
        let pt = self.patch;
        if h % pt != 0 || w % pt != 0 {
            return Err(Error::contract(format!(
                "patch size {pt} must divide frame extents {h}x{w}"
            )));
        }
        let (gr, gc) = (h / pt, w / pt);
        let l = gr * gc;
        let mut map = Vec::with_capacity(l * 3 * pt * pt);
        for gy in 0..gr {
            for gx in 0..gc {
                for ci in 0..3 {
                    for py in 0..pt {
                        for px in 0..pt {
                            map.push(ci * h * w + (gy * pt + py) * w + (gx * pt + px));
                        }
                    }
                }
            }
        }
        let patches = frame.gather(Rc::new(map), &[l, 3 * pt * pt])?;
        self.proj.forward(p, &patches)
    }
}

/// Pre-norm transformer block: `x + attn(ln1(x))`, then `x + ffn(ln2(x))`.
pub struct TransformerBlock {
    ln1: LayerNorm,
    attn: Mhsa,
    ln2: LayerNorm,
    ffn: Ffn,
}

impl TransformerBlock {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        prefix: &str,
        c: usize,
        heads: usize,
        expansion: usize,
    ) -> Result<Self> {
        Ok(TransformerBlock {
            ln1: LayerNorm::new(store, &scoped(prefix, "ln1"), c)?,
            attn: Mhsa::new(store, &scoped(prefix, "attn"), c, heads)?,
            ln2: LayerNorm::new(store, &scoped(prefix, "ln2"), c)?,
            ffn: Ffn::new(store, &scoped(prefix, "ffn"), c, expansion)?,
        })
    }

    pub fn forward<S: Scalar>(&self, p: &Bound<S>, x: &Tensor<S>) -> Result<Tensor<S>> {
        let x = x.add(&self.attn.forward(p, &self.ln1.forward(p, x)?)?)?;
        x.add(&self.ffn.forward(p, &self.ln2.forward(p, &x)?)?)
    }
}
