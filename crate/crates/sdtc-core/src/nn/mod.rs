//! Parameter storage and reusable network blocks.

mod blocks;
mod params;
mod posenc;

pub use blocks::{
    Conv2dLayer, Ffn, LayerNorm, Linear, Mhsa, PatchEmbed, TransformerBlock, LAYER_NORM_EPS,
};
pub use params::{scoped, Bound, Init, ParamStore};
pub use posenc::{sincos_spatial, PositionalEncodings, SpatialPeMode};

#[cfg(test)]
mod tests;
