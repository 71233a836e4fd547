use crate::error::{Error, Result};
use crate::raster::{DisparityMap, Image};

/// Jet-style ramp: dark blue at 0, dark red at 1. Never black.
fn ramp(t: f32) -> [f32; 3] {
    let ch = |c: f32| (1.5 - (4.0 * t - c).abs()).clamp(0.0, 1.0);
    [ch(3.0), ch(2.0), ch(1.0)]
}

/// Renders a disparity map as RGB for inspection; invalid pixels are black and
/// values are saturated at `max_d`.
pub fn colorize_disparity(d: &DisparityMap, max_d: f32) -> Result<Image> {
    if !(max_d > 0.0 && max_d.is_finite()) {
        return Err(Error::param("max_d", format!("must be positive, got {max_d}")));
    }
    let mut data = Vec::with_capacity(d.len() * 3);
    for (&v, &ok) in d.values().iter().zip(d.mask()) {
        if ok {
            data.extend_from_slice(&ramp((v / max_d).clamp(0.0, 1.0)));
        } else {
            data.extend_from_slice(&[0.0; 3]);
        }
    }
    Image::new(d.height(), d.width(), 3, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_invalid_is_black() {
        let img = colorize_disparity(&DisparityMap::invalid(3, 4), 10.0).unwrap();
        assert!(img.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_max_is_endpoint_color() {
        let d = DisparityMap::filled(2, 2, 10.0).unwrap();
        let img = colorize_disparity(&d, 10.0).unwrap();
        for px in img.data().chunks_exact(3) {
            assert_eq!(px, &ramp(1.0));
        }
        assert_ne!(ramp(0.0), [0.0; 3]);
    }

    #[test]
    fn rendering_depends_only_on_masked_values() {
        let a = DisparityMap::new(1, 2, vec![1.0, 2.0], vec![true, false]).unwrap();
        let b = DisparityMap::new(1, 2, vec![1.0, 5.0], vec![true, false]).unwrap();
        assert_eq!(
            colorize_disparity(&a, 4.0).unwrap(),
            colorize_disparity(&b, 4.0).unwrap()
        );
    }

    #[test]
    fn rejects_nonpositive_max() {
        assert!(colorize_disparity(&DisparityMap::invalid(1, 1), 0.0).is_err());
    }
}
