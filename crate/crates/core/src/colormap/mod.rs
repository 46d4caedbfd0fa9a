//! Per-camera affine color maps `c' = W c + T` for harmonizing the colors of
//! several views against a reference, with the L1 + SSIM loss used to fit
//! them and the image metrics it relies on.

mod fit;
mod image;
pub mod metrics;

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

pub use self::image::Image;
pub use fit::{
    color_loss, continuity_report, fit_color_map, harmonize_multiview, ColorFit, ContinuityReport,
    FitOptions, DEFAULT_LAMBDA1,
};
pub use metrics::{psnr, ssim};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ColorError {
    #[error("image dimensions differ: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("image {dims:?} is smaller than the {min}x{min} SSIM window")]
    ImageTooSmall { dims: (usize, usize), min: usize },
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("reference camera `{0}` not among the inputs")]
    MissingReference(String),
    #[error("{0}")]
    Io(String),
    #[error("malformed color map file: {0}")]
    Format(String),
}

/// `c' = matrix * c + offset` on RGB triples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineColorMap {
    pub matrix: Matrix3<f64>,
    pub offset: Vector3<f64>,
}

impl Default for AffineColorMap {
    fn default() -> Self {
        Self::identity()
    }
}

impl AffineColorMap {
    pub fn new(matrix: Matrix3<f64>, offset: Vector3<f64>) -> Self {
        Self { matrix, offset }
    }

    pub fn identity() -> Self {
        Self {
            matrix: Matrix3::identity(),
            offset: Vector3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.matrix.iter().chain(self.offset.iter()).all(|v| v.is_finite())
    }

    /// Maps one color without clamping.
    pub fn map_color(&self, c: [f64; 3]) -> [f64; 3] {
        let m = &self.matrix;
        let mut out = [0.0; 3];
        for (r, o) in out.iter_mut().enumerate() {
            *o = m[(r, 0)] * c[0] + m[(r, 1)] * c[1] + m[(r, 2)] * c[2] + self.offset[r];
        }
        out
    }

    /// `self` after `first`: `(W2 W1, W2 T1 + T2)`.
    pub fn compose(&self, first: &AffineColorMap) -> AffineColorMap {
        AffineColorMap {
            matrix: self.matrix * first.matrix,
            offset: self.matrix * first.offset + self.offset,
        }
    }

    pub fn inverse(&self) -> Option<AffineColorMap> {
        let inv = self.matrix.try_inverse()?;
        Some(AffineColorMap {
            matrix: inv,
            offset: -(inv * self.offset),
        })
    }

    /// Frobenius distance over all twelve parameters.
    pub fn distance(&self, other: &AffineColorMap) -> f64 {
        ((self.matrix - other.matrix).norm_squared() + (self.offset - other.offset).norm_squared())
            .sqrt()
    }

    pub(crate) fn to_params(self) -> [f64; 12] {
        let mut p = [0.0; 12];
        for r in 0..3 {
            for c in 0..3 {
                p[r * 3 + c] = self.matrix[(r, c)];
            }
            p[9 + r] = self.offset[r];
        }
        p
    }

    pub(crate) fn from_params(p: &[f64; 12]) -> Self {
        Self {
            matrix: Matrix3::from_row_slice(&p[..9]),
            offset: Vector3::new(p[9], p[10], p[11]),
        }
    }
}

/// Applies `map` to every pixel and clamps the result to `[0, 1]`.
pub fn apply_color_map(map: &AffineColorMap, img: &Image) -> Image {
    let pixels = img
        .pixels()
        .iter()
        .map(|p| map.map_color(*p).map(|v| v.clamp(0.0, 1.0)))
        .collect();
    Image::from_raw_clamped(img.width(), img.height(), pixels)
}

#[derive(Serialize, Deserialize)]
struct MapFile {
    camera: Vec<MapEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapEntry {
    id: String,
    matrix: [[f64; 3]; 3],
    offset: [f64; 3],
}

/// Serializes camera maps as `[[camera]]` tables with `id`, `matrix` (rows)
/// and `offset`.
pub fn maps_to_string(maps: &[(String, AffineColorMap)]) -> String {
    let file = MapFile {
        camera: maps
            .iter()
            .map(|(id, m)| MapEntry {
                id: id.clone(),
                matrix: [0, 1, 2].map(|r| [0, 1, 2].map(|c| m.matrix[(r, c)])),
                offset: [m.offset[0], m.offset[1], m.offset[2]],
            })
            .collect(),
    };
    toml::to_string(&file).expect("plain numeric tables always serialize")
}

pub fn maps_from_str(text: &str) -> Result<Vec<(String, AffineColorMap)>, ColorError> {
    let file: MapFile = toml::from_str(text).map_err(|e| ColorError::Format(e.to_string()))?;
    file.camera
        .into_iter()
        .map(|e| {
            let map = AffineColorMap {
                matrix: Matrix3::from_fn(|r, c| e.matrix[r][c]),
                offset: Vector3::from(e.offset),
            };
            if map.is_finite() {
                Ok((e.id, map))
            } else {
                Err(ColorError::Format(format!("non-finite map for `{}`", e.id)))
            }
        })
        .collect()
}

pub fn write_maps(path: &Path, maps: &[(String, AffineColorMap)]) -> Result<(), ColorError> {
    std::fs::write(path, maps_to_string(maps))
        .map_err(|e| ColorError::Io(format!("{}: {e}", path.display())))
}

pub fn read_maps(path: &Path) -> Result<Vec<(String, AffineColorMap)>, ColorError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ColorError::Io(format!("{}: {e}", path.display())))?;
    maps_from_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gradient_image() -> Image {
        Image::from_fn(20, 12, |x, y| [x as f64 / 19.0, y as f64 / 11.0, 0.37])
    }

    #[test]
    fn identity_is_bit_exact() {
        let img = gradient_image();
        assert_eq!(apply_color_map(&AffineColorMap::identity(), &img), img);
    }

    #[test]
    fn channel_swap_turns_red_blue() {
        let swap = AffineColorMap::new(
            Matrix3::new(0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0),
            Vector3::zeros(),
        );
        let red = Image::filled(3, 3, [1.0, 0.0, 0.0]);
        assert_eq!(apply_color_map(&swap, &red), Image::filled(3, 3, [0.0, 0.0, 1.0]));
    }

    #[test]
    fn offset_clamps_at_one() {
        let m = AffineColorMap::new(Matrix3::identity(), Vector3::repeat(0.5));
        let out = apply_color_map(&m, &Image::filled(4, 4, [0.8; 3]));
        assert_eq!(out, Image::filled(4, 4, [1.0; 3]));
    }

    #[test]
    fn serialization_round_trip() {
        let m = AffineColorMap::new(
            Matrix3::new(1.1, 0.02, -0.03, 0.0, 0.9, 0.01, 0.05, 0.0, 1.0),
            Vector3::new(0.01, -0.02, 0.03),
        );
        let maps = vec![("cam00".to_string(), AffineColorMap::identity()), ("cam01".to_string(), m)];
        let text = maps_to_string(&maps);
        assert_eq!(maps_from_str(&text).unwrap(), maps);
        assert!(maps_from_str("camera = 3").is_err());
    }

    #[test]
    fn inverse_composes_to_identity() {
        let m = AffineColorMap::new(
            Matrix3::new(1.1, 0.02, -0.03, 0.0, 0.9, 0.01, 0.05, 0.0, 1.0),
            Vector3::new(0.01, -0.02, 0.03),
        );
        let id = m.inverse().unwrap().compose(&m);
        assert!(id.distance(&AffineColorMap::identity()) < 1e-14);
    }

    fn near_identity() -> impl Strategy<Value = AffineColorMap> {
        (proptest::array::uniform9(-0.05..0.05f64), proptest::array::uniform3(-0.02..0.02f64)).prop_map(
            |(w, t)| {
                let mut m = Matrix3::from_row_slice(&w);
                m += Matrix3::identity();
                AffineColorMap::new(m, Vector3::from(t))
            },
        )
    }

    proptest! {
        #[test]
        fn composition_matches_sequential_application(m1 in near_identity(), m2 in near_identity()) {
            // values in [0.35, 0.63] keep both stages away from the clamp
            let img = Image::from_fn(8, 8, |x, y| [0.35 + 0.04 * x as f64, 0.35 + 0.04 * y as f64, 0.5]);
            let seq = apply_color_map(&m2, &apply_color_map(&m1, &img));
            let once = apply_color_map(&m2.compose(&m1), &img);
            for (a, b) in seq.pixels().iter().zip(once.pixels()) {
                for c in 0..3 {
                    prop_assert!((a[c] - b[c]).abs() < 1e-12);
                }
            }
        }
    }
}
