//! Positional encodings: a fixed sine-cosine spatial table and a learnable
//! temporal table, each independently toggleable.

use super::params::{scoped, Bound, Init, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

const PE_BASE: f64 = 10_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpatialPeMode {
    /// Factorized over the token grid: first C/2 channels encode the patch
    /// row, last C/2 the patch column.
    TwoD,
    /// Standard 1D ladder over the flattened token index.
    OneD,
}

fn ladder_into(table: &mut [f64], pos: f64, d: usize) {
    debug_assert!(d % 2 == 0 && table.len() == d);
    for i in 0..d / 2 {
        let omega = PE_BASE.powf(-((2 * i) as f64) / d as f64);
        table[2 * i] = (pos * omega).sin();
        table[2 * i + 1] = (pos * omega).cos();
    }
}

/// Spatial sine-cosine table of shape (L, C) for an `rows x cols` token grid
/// (`L = rows * cols`). Deterministic in its arguments.
pub fn sincos_spatial<S: Scalar>(
    rows: usize,
    cols: usize,
    c: usize,
    mode: SpatialPeMode,
) -> Result<Tensor<S>> {
    if c % 2 != 0 {
        return Err(Error::contract(format!(
            "spatial encoding needs even channel count, got {c}"
        )));
    }
    if mode == SpatialPeMode::TwoD && c % 4 != 0 {
        return Err(Error::contract(format!(
            "2D spatial encoding needs channels divisible by 4, got {c}"
        )));
    }
    let l = rows * cols;
    let mut data = vec![0.0f64; l * c];
    match mode {
        SpatialPeMode::TwoD => {
            let half = c / 2;
            for gy in 0..rows {
                for gx in 0..cols {
                    let base = (gy * cols + gx) * c;
                    ladder_into(&mut data[base..base + half], gy as f64, half);
                    ladder_into(&mut data[base + half..base + c], gx as f64, half);
                }
            }
        }
        SpatialPeMode::OneD => {
            for li in 0..l {
                let base = li * c;
                ladder_into(&mut data[base..base + c], li as f64, c);
            }
        }
    }
    Tensor::from_vec(&[l, c], data.into_iter().map(S::from_f64).collect())
}

/// The two token-position encodings from the embedding stage.
pub struct PositionalEncodings {
    /// Constant (L, C) table; not a parameter.
    spatial: Option<Tensor<f64>>,
    /// Learnable (T_max, C) table name; `None` when the temporal encoding is
    /// disabled at construction.
    temporal: Option<String>,
    pub t_max: usize,
    pub c: usize,
}

impl PositionalEncodings {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        prefix: &str,
        rows: usize,
        cols: usize,
        c: usize,
        t_max: usize,
        mode: SpatialPeMode,
        spatial_on: bool,
        temporal_on: bool,
    ) -> Result<Self> {
        let spatial = if spatial_on {
            Some(sincos_spatial::<f64>(rows, cols, c, mode)?)
        } else {
            None
        };
        let temporal = if temporal_on {
            Some(store.add(
                &scoped(prefix, "temporal"),
                &[t_max, c],
                Init::Uniform { a: 0.02 },
            )?)
        } else {
            None
        };
        Ok(PositionalEncodings {
            spatial,
            temporal,
            t_max,
            c,
        })
    }

    /// tokens[t, l] + spatial[l] + temporal[t], per the enabled toggles.
    pub fn add_to<S: Scalar>(&self, p: &Bound<S>, tokens: &Tensor<S>) -> Result<Tensor<S>> {
        if tokens.shape().rank() != 3 {
            return Err(Error::dimension(
                "add_positional",
                format!("expected (T, L, C), got {}", tokens.shape()),
            ));
        }
        let t = tokens.dims()[0];
        if t > self.t_max {
            return Err(Error::contract(format!(
                "sequence length {t} exceeds temporal table capacity {}",
                self.t_max
            )));
        }
        let mut out = tokens.clone();
        if let Some(spatial) = &self.spatial {
            out = out.add(&spatial.cast::<S>())?;
        }
        if let Some(name) = &self.temporal {
            let table = p.get(name)?;
            let rows = table.slice(0, 0, t)?.reshape(&[t, 1, self.c])?;
            out = out.add(&rows)?;
        }
        Ok(out)
    }
}
