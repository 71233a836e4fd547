use rayon::prelude::*;

use crate::error::{Error, Result};

/// Dense `height x width x channels` tensor, channel-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Shape(format!(
                "tensor dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::BufferLength {
                expected: height * width * channels,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::OutOfRange("tensor entries must be finite".into()));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for i in 0..height {
            for j in 0..width {
                for c in 0..channels {
                    data.push(f(i, j, c));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    pub(crate) fn from_raw(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width * channels);
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, c: usize) -> f64 {
        self.data[(i * self.width + j) * self.channels + c]
    }

    #[inline]
    pub fn pixel(&self, i: usize, j: usize) -> &[f64] {
        let start = (i * self.width + j) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn same_grid(&self, other: &Tensor3) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// Channel concatenation of tensors on the same grid.
    pub fn concat(parts: &[&Tensor3]) -> Result<Tensor3> {
        let first = parts.first().ok_or(Error::Empty("nothing to concatenate"))?;
        if let Some(p) = parts.iter().find(|p| !p.same_grid(first)) {
            return Err(Error::Shape(format!(
                "cannot concatenate {}x{} with {}x{}",
                first.height, first.width, p.height, p.width
            )));
        }
        let channels: usize = parts.iter().map(|p| p.channels).sum();
        let mut data = Vec::with_capacity(first.height * first.width * channels);
        for i in 0..first.height {
            for j in 0..first.width {
                for p in parts {
                    data.extend_from_slice(p.pixel(i, j));
                }
            }
        }
        Ok(Tensor3::from_raw(first.height, first.width, channels, data))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor3 {
        Tensor3::from_raw(
            self.height,
            self.width,
            self.channels,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn zip_map(&self, other: &Tensor3, f: impl Fn(f64, f64) -> f64) -> Result<Tensor3> {
        if !self.same_grid(other) || self.channels != other.channels {
            return Err(Error::Shape("element-wise operands differ in shape".into()));
        }
        Ok(Tensor3::from_raw(
            self.height,
            self.width,
            self.channels,
            self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        ))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// 3x3 convolution, stride 1, zero padding, output the same size as input.
///
/// Weights are stored `[out][in][ky][kx]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3x3 {
    pub out_channels: usize,
    pub in_channels: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv3x3 {
    pub fn zeros(out_channels: usize, in_channels: usize) -> Self {
        Self {
            out_channels,
            in_channels,
            weight: vec![0.0; out_channels * in_channels * 9],
            bias: vec![0.0; out_channels],
        }
    }

    /// Single-channel kernel with 1 at the centre.
    pub fn identity() -> Self {
        let mut c = Self::zeros(1, 1);
        c.weight[4] = 1.0;
        c
    }

    pub fn new(out_channels: usize, in_channels: usize, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        let conv = Self {
            out_channels,
            in_channels,
            weight,
            bias,
        };
        conv.validate()?;
        Ok(conv)
    }

    pub fn validate(&self) -> Result<()> {
        if self.out_channels == 0 || self.in_channels == 0 {
            return Err(Error::Shape("convolution needs positive channel counts".into()));
        }
        if self.weight.len() != self.out_channels * self.in_channels * 9 || self.bias.len() != self.out_channels {
            return Err(Error::Shape(format!(
                "convolution {}->{} has {} weights and {} biases",
                self.in_channels,
                self.out_channels,
                self.weight.len(),
                self.bias.len()
            )));
        }
        if self.weight.iter().chain(&self.bias).any(|v| !v.is_finite()) {
            return Err(Error::OutOfRange("convolution parameters must be finite".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn w(&self, o: usize, c: usize, ky: usize, kx: usize) -> f64 {
        self.weight[((o * self.in_channels + c) * 3 + ky) * 3 + kx]
    }

    pub fn apply(&self, input: &Tensor3) -> Result<Tensor3> {
        if input.channels != self.in_channels {
            return Err(Error::Shape(format!(
                "convolution expects {} input channels, got {}",
                self.in_channels, input.channels
            )));
        }
        let (h, w) = (input.height, input.width);
        let (cin, cout) = (self.in_channels, self.out_channels);
        // Repack to [ky][kx][out][in] so each tap is a contiguous dot product.
        let mut packed = vec![0.0; 9 * cout * cin];
        for o in 0..cout {
            for c in 0..cin {
                for k in 0..9 {
                    packed[(k * cout + o) * cin + c] = self.weight[(o * cin + c) * 9 + k];
                }
            }
        }
        let rows: Vec<Vec<f64>> = (0..h)
            .into_par_iter()
            .map(|i| {
                let mut row = vec![0.0; w * cout];
                for j in 0..w {
                    let out = &mut row[j * cout..(j + 1) * cout];
                    out.copy_from_slice(&self.bias);
                    for ky in 0..3 {
                        let y = i as isize + ky as isize - 1;
                        if y < 0 || y >= h as isize {
                            continue;
                        }
                        for kx in 0..3 {
                            let x = j as isize + kx as isize - 1;
                            if x < 0 || x >= w as isize {
                                continue;
                            }
                            let src = input.pixel(y as usize, x as usize);
                            let taps = &packed[(ky * 3 + kx) * cout * cin..(ky * 3 + kx + 1) * cout * cin];
                            for (o, acc) in out.iter_mut().enumerate() {
                                let wrow = &taps[o * cin..(o + 1) * cin];
                                *acc += wrow.iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
                            }
                        }
                    }
                }
                row
            })
            .collect();
        Ok(Tensor3::from_raw(h, w, cout, rows.concat()))
    }
}
