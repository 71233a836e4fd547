//! Forward numerical core of the recurrent disparity network.
//!
//! Features on the 1/8 grid feed an all-pairs cost volume, which is pooled
//! into four levels. Each iteration looks up a local window of costs around
//! the current estimate, runs a convolutional GRU, and adds the head's output
//! to the coarse disparity. Every iterate is upsampled to full resolution.

mod gru;
mod tensor;
mod volume;
pub mod weights;

pub use gru::{gru_step, upsample_disparity, GruDims, GruState, GruWeights};
pub use tensor::{sigmoid, Conv3x3, Tensor3};
pub use volume::{
    build_cost_volume, lookup, lookup_channels, lookup_offsets, pool_pyramid, search_range_pixels, toy_features,
    CostVolumePyramid, FeatureMap, COST_LEVELS, DEFAULT_FEATURE_CHANNELS, DEFAULT_LOOKUP_RADIUS, FEATURE_STRIDE,
};
pub use weights::{decode_weights, encode_weights, load_weights, save_weights};

use crate::error::{Error, Result};
use crate::raster::{DisparityMap, Image};

/// Default number of refinement iterations.
pub const DEFAULT_ITERATIONS: usize = 8;

/// Coarse and full-resolution estimates after every iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub coarse: Vec<DisparityMap>,
    pub full: Vec<DisparityMap>,
}

/// Runs `iterations` refinement steps from a zero estimate.
pub fn optstereo_forward_detailed(
    left: &Image,
    right: &Image,
    w: &GruWeights,
    iterations: usize,
) -> Result<ForwardOutput> {
    if iterations == 0 {
        return Err(Error::param("iterations", "must be at least 1"));
    }
    left.ensure_same_size(right)?;
    w.validate()?;
    let dims = w.dims;
    let fl = toy_features(left, dims.feature_channels)?;
    let fr = toy_features(right, dims.feature_channels)?;
    let pyr = pool_pyramid(&build_cost_volume(&fl, &fr)?)?;
    let mut state = GruState::initial(fl.height(), fl.width(), dims.hidden)?;
    let mut out = ForwardOutput {
        coarse: Vec::with_capacity(iterations),
        full: Vec::with_capacity(iterations),
    };
    for _ in 0..iterations {
        let m_l = lookup(&pyr, &state.d_s, dims.lookup_radius)?;
        state = gru_step(&state, &m_l, &fl, w)?;
        out.full.push(upsample_disparity(&state.d_s, w)?);
        out.coarse.push(state.d_s.clone());
    }
    Ok(out)
}

/// Full-resolution estimates `D^1..D^N`.
pub fn optstereo_forward(left: &Image, right: &Image, w: &GruWeights, iterations: usize) -> Result<Vec<DisparityMap>> {
    Ok(optstereo_forward_detailed(left, right, w, iterations)?.full)
}
