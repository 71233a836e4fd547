//! Convolutional GRU refinement, update head, and x8 upsampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::{sigmoid, Conv3x3, Tensor3};
use super::volume::{lookup_channels, DEFAULT_FEATURE_CHANNELS, DEFAULT_LOOKUP_RADIUS, FEATURE_STRIDE};
use crate::error::{Error, Result};
use crate::pyramid::linear_taps;
use crate::raster::DisparityMap;

/// Channel widths of the refinement network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GruDims {
    pub hidden: usize,
    pub feature_channels: usize,
    pub head_hidden: usize,
    pub lookup_radius: usize,
}

impl Default for GruDims {
    fn default() -> Self {
        Self {
            hidden: 128,
            feature_channels: DEFAULT_FEATURE_CHANNELS,
            head_hidden: 96,
            lookup_radius: DEFAULT_LOOKUP_RADIUS,
        }
    }
}

impl GruDims {
    /// Channels of `x = [d_s, M_l, F_l]`.
    pub fn input_channels(&self) -> usize {
        1 + lookup_channels(self.lookup_radius) + self.feature_channels
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.feature_channels == 0 || self.head_hidden == 0 || self.lookup_radius == 0 {
            return Err(Error::param("gru dims", format!("all widths must be positive, got {self:?}")));
        }
        Ok(())
    }
}

/// Every kernel of the refinement network.
#[derive(Debug, Clone, PartialEq)]
pub struct GruWeights {
    pub dims: GruDims,
    pub conv_z: Conv3x3,
    pub conv_r: Conv3x3,
    pub conv_h: Conv3x3,
    pub head1: Conv3x3,
    pub head2: Conv3x3,
    pub up1: Conv3x3,
    pub up2: Conv3x3,
}

impl GruWeights {
    /// All kernels and biases zero, including the upsampling convolutions.
    pub fn zeros(dims: GruDims) -> Result<Self> {
        dims.validate()?;
        let gate_in = dims.hidden + dims.input_channels();
        Ok(Self {
            dims,
            conv_z: Conv3x3::zeros(dims.hidden, gate_in),
            conv_r: Conv3x3::zeros(dims.hidden, gate_in),
            conv_h: Conv3x3::zeros(dims.hidden, gate_in),
            head1: Conv3x3::zeros(dims.head_hidden, dims.hidden),
            head2: Conv3x3::zeros(1, dims.head_hidden),
            up1: Conv3x3::zeros(1, 1),
            up2: Conv3x3::zeros(1, 1),
        })
    }

    /// Uniform weights in `±gain / sqrt(fan_in)` with identity upsampling
    /// convolutions.
    pub fn random(dims: GruDims, seed: u64, gain: f64) -> Result<Self> {
        if !(gain.is_finite() && gain >= 0.0) {
            return Err(Error::param("gain", format!("must be finite and non-negative, got {gain}")));
        }
        let mut w = Self::zeros(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for conv in [&mut w.conv_z, &mut w.conv_r, &mut w.conv_h, &mut w.head1, &mut w.head2] {
            let bound = gain / ((conv.in_channels * 9) as f64).sqrt();
            if bound == 0.0 {
                continue;
            }
            for v in conv.weight.iter_mut().chain(conv.bias.iter_mut()) {
                *v = rng.gen_range(-bound..bound);
            }
        }
        w.up1 = Conv3x3::identity();
        w.up2 = Conv3x3::identity();
        Ok(w)
    }

    /// In order: z, r, h gates, the two head layers, the two upsampling layers.
    pub fn convs(&self) -> [&Conv3x3; 7] {
        [
            &self.conv_z,
            &self.conv_r,
            &self.conv_h,
            &self.head1,
            &self.head2,
            &self.up1,
            &self.up2,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        let d = &self.dims;
        let gate_in = d.hidden + d.input_channels();
        let expected = [
            (d.hidden, gate_in),
            (d.hidden, gate_in),
            (d.hidden, gate_in),
            (d.head_hidden, d.hidden),
            (1, d.head_hidden),
            (1, 1),
            (1, 1),
        ];
        for (conv, (o, i)) in self.convs().into_iter().zip(expected) {
            conv.validate()?;
            if conv.out_channels != o || conv.in_channels != i {
                return Err(Error::Shape(format!(
                    "kernel {}->{} where {i}->{o} was expected",
                    conv.in_channels, conv.out_channels
                )));
            }
        }
        Ok(())
    }
}

/// Hidden state and current coarse disparity.
#[derive(Debug, Clone, PartialEq)]
pub struct GruState {
    pub h: Tensor3,
    pub d_s: DisparityMap,
    pub iteration: usize,
}

impl GruState {
    /// `h = 0`, `d_s = 0`, iteration 0.
    pub fn initial(height: usize, width: usize, hidden: usize) -> Result<Self> {
        Ok(Self {
            h: Tensor3::zeros(height, width, hidden),
            d_s: DisparityMap::filled(height, width, 0.0)?,
            iteration: 0,
        })
    }
}

fn disparity_tensor(d: &DisparityMap) -> Result<Tensor3> {
    if d.valid_count() != d.len() {
        return Err(Error::OutOfRange("coarse disparity must be dense".into()));
    }
    Ok(Tensor3::from_raw(
        d.height(),
        d.width(),
        1,
        d.values().iter().map(|&v| f64::from(v)).collect(),
    ))
}

fn to_disparity(t: &Tensor3) -> Result<DisparityMap> {
    let values: Vec<f32> = t.data().iter().map(|&v| v as f32).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::OutOfRange("disparity update overflowed".into()));
    }
    DisparityMap::dense(t.height(), t.width(), values)
}

/// One refinement iteration.
///
/// `x = [d_s, M_l, F_l]`; `z, r = σ(conv([h, x]))`;
/// `h̃ = tanh(conv([r ⊙ h, x]))`; `h' = (1 - z) ⊙ h + z ⊙ h̃`; then
/// `d_s' = d_s + head2(relu(head1(h')))`.
pub fn gru_step(state: &GruState, m_l: &Tensor3, f_l: &Tensor3, w: &GruWeights) -> Result<GruState> {
    let d = &w.dims;
    if state.h.channels() != d.hidden {
        return Err(Error::Shape(format!(
            "hidden state has {} channels, weights expect {}",
            state.h.channels(),
            d.hidden
        )));
    }
    let ds = disparity_tensor(&state.d_s)?;
    let x = Tensor3::concat(&[&ds, m_l, f_l])?;
    if x.channels() != d.input_channels() {
        return Err(Error::Shape(format!(
            "gru input has {} channels, weights expect {}",
            x.channels(),
            d.input_channels()
        )));
    }
    let hx = Tensor3::concat(&[&state.h, &x])?;
    let z = w.conv_z.apply(&hx)?.map(sigmoid);
    let r = w.conv_r.apply(&hx)?.map(sigmoid);
    let rh = r.zip_map(&state.h, |a, b| a * b)?;
    let h_tilde = w.conv_h.apply(&Tensor3::concat(&[&rh, &x])?)?.map(f64::tanh);
    let data = (0..z.data().len())
        .map(|n| {
            let (zv, hv, tv) = (z.data()[n], state.h.data()[n], h_tilde.data()[n]);
            // Keep rounding from stepping outside the segment [h, h̃].
            ((1.0 - zv) * hv + zv * tv).clamp(hv.min(tv), hv.max(tv))
        })
        .collect();
    let h = Tensor3::from_raw(z.height(), z.width(), z.channels(), data);
    let delta = w.head2.apply(&w.head1.apply(&h)?.map(|v| v.max(0.0)))?;
    let next = ds.zip_map(&delta, |a, b| a + b)?;
    Ok(GruState {
        h,
        d_s: to_disparity(&next)?,
        iteration: state.iteration + 1,
    })
}

/// Bilinear x8 upsampling (half-pixel centres, edge clamped) of `8 * d_s`,
/// followed by the two upsampling convolutions.
pub fn upsample_disparity(d_s: &DisparityMap, w: &GruWeights) -> Result<DisparityMap> {
    let src = disparity_tensor(d_s)?;
    let (h, wd) = (src.height(), src.width());
    let (oh, ow) = (h * FEATURE_STRIDE, wd * FEATURE_STRIDE);
    let s = FEATURE_STRIDE as f64;
    let cols: Vec<_> = (0..ow).map(|o| linear_taps((o as f64 + 0.5) / s - 0.5, wd)).collect();
    let mut data = Vec::with_capacity(oh * ow);
    for oi in 0..oh {
        let (r0, r1, fy) = linear_taps((oi as f64 + 0.5) / s - 0.5, h);
        for &(c0, c1, fx) in &cols {
            let top = src.get(r0, c0, 0) * (1.0 - fx) + src.get(r0, c1, 0) * fx;
            let bottom = src.get(r1, c0, 0) * (1.0 - fx) + src.get(r1, c1, 0) * fx;
            data.push(s * (top * (1.0 - fy) + bottom * fy));
        }
    }
    let up = Tensor3::from_raw(oh, ow, 1, data);
    to_disparity(&w.up2.apply(&w.up1.apply(&up)?)?)
}
