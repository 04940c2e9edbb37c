//! Seeded synthetic multispectral scenes with known ground truth.
//!
//! Classes occupy contiguous row-major blocks whose sizes follow the class
//! fractions. Each pixel value is an independent normal draw keyed on
//! `(seed, pixel index, band index)`, so the output does not depend on the
//! order in which pixels are visited.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::raster::{LabelRaster, MultibandImage};

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("class {label} has {got} bands, expected {expected}")]
    BandCountMismatch { label: u16, expected: usize, got: usize },
    #[error("invalid scene spec: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneClass {
    pub label: u16,
    pub mean: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Share of the scene's pixels, in (0, 1].
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub classes: Vec<SceneClass>,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
}

impl SceneSpec {
    pub fn band_count(&self) -> usize {
        self.classes.first().map_or(0, |c| c.mean.len())
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let invalid = |msg: String| Err(SceneError::Invalid(msg));
        if self.classes.is_empty() {
            return invalid("at least one class is required".into());
        }
        if self.width == 0 || self.height == 0 {
            return invalid(format!(
                "dimensions must be positive, got {}x{}",
                self.width, self.height
            ));
        }
        let bands = self.band_count();
        if bands == 0 {
            return invalid("classes must have at least one band".into());
        }
        let mut seen = Vec::new();
        for c in &self.classes {
            if c.label == 0 {
                return invalid("label 0 is reserved for unclassified".into());
            }
            if seen.contains(&c.label) {
                return invalid(format!("duplicate label {}", c.label));
            }
            seen.push(c.label);
            for len in [c.mean.len(), c.sigma.len()] {
                if len != bands {
                    return Err(SceneError::BandCountMismatch {
                        label: c.label,
                        expected: bands,
                        got: len,
                    });
                }
            }
            if c.sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                return invalid(format!("class {} has a negative or non-finite sigma", c.label));
            }
            if c.mean.iter().any(|m| !m.is_finite()) {
                return invalid(format!("class {} has a non-finite mean", c.label));
            }
            if !(c.fraction > 0.0 && c.fraction <= 1.0) {
                return invalid(format!(
                    "class {} fraction {} outside (0, 1]",
                    c.label, c.fraction
                ));
            }
        }
        let total: f64 = self.classes.iter().map(|c| c.fraction).sum();
        if (total - 1.0).abs() > 1e-9 {
            return invalid(format!("fractions sum to {total}, expected 1"));
        }
        Ok(())
    }

    /// Pixel index at which each class block ends (exclusive), in class order.
    fn block_ends(&self) -> Vec<usize> {
        let n = self.width * self.height;
        let mut cum = 0.0;
        let mut ends: Vec<usize> = self
            .classes
            .iter()
            .map(|c| {
                cum += c.fraction;
                ((cum * n as f64).round() as usize).min(n)
            })
            .collect();
        if let Some(last) = ends.last_mut() {
            *last = n;
        }
        ends
    }
}

/// Standard normal deviate for one (seed, pixel, band) cell.
fn keyed_normal(seed: u64, pixel: u64, band: u64) -> f64 {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&pixel.to_le_bytes());
    key[16..24].copy_from_slice(&band.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    StandardNormal.sample(&mut rng)
}

pub fn generate_scene(spec: &SceneSpec) -> Result<(MultibandImage, LabelRaster), SceneError> {
    spec.validate()?;
    let n = spec.width * spec.height;
    let ends = spec.block_ends();

    let mut class_of = Vec::with_capacity(n);
    let mut start = 0;
    for (ci, &end) in ends.iter().enumerate() {
        class_of.extend(std::iter::repeat_n(ci, end.saturating_sub(start)));
        start = start.max(end);
    }

    let bands: Vec<Vec<f64>> = (0..spec.band_count())
        .into_par_iter()
        .map(|b| {
            class_of
                .iter()
                .enumerate()
                .map(|(p, &ci)| {
                    let class = &spec.classes[ci];
                    let z = keyed_normal(spec.seed, p as u64, b as u64);
                    class.mean[b] + class.sigma[b] * z
                })
                .collect()
        })
        .collect();

    let labels = class_of.iter().map(|&ci| spec.classes[ci].label).collect();
    let image = MultibandImage::new(spec.width, spec.height, bands)
        .map_err(|e| SceneError::Invalid(e.to_string()))?;
    let truth =
        LabelRaster::new(spec.width, spec.height, labels).map_err(|e| SceneError::Invalid(e.to_string()))?;
    Ok((image, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn class(label: u16, mean: &[f64], sigma: &[f64], fraction: f64) -> SceneClass {
        SceneClass {
            label,
            mean: mean.to_vec(),
            sigma: sigma.to_vec(),
            fraction,
        }
    }

    fn two_class(seed: u64, sigma: f64) -> SceneSpec {
        SceneSpec {
            classes: vec![
                class(1, &[10.0, 20.0, 30.0], &[sigma; 3], 0.5),
                class(2, &[50.0, 60.0, 70.0], &[sigma; 3], 0.5),
            ],
            width: 10,
            height: 10,
            seed,
        }
    }

    #[test]
    fn zero_sigma_reproduces_means() {
        let (img, truth) = generate_scene(&two_class(3, 0.0)).unwrap();
        for (p, &label) in truth.labels().iter().enumerate() {
            let want: &[f64] = if label == 1 {
                &[10.0, 20.0, 30.0]
            } else {
                &[50.0, 60.0, 70.0]
            };
            for (band, &w) in img.bands().iter().zip(want) {
                assert_eq!(band[p], w);
            }
        }
    }

    #[test]
    fn deterministic_for_same_seed() {
        let spec = two_class(42, 2.0);
        assert_eq!(generate_scene(&spec).unwrap(), generate_scene(&spec).unwrap());
        let other = generate_scene(&two_class(43, 2.0)).unwrap();
        assert_ne!(generate_scene(&spec).unwrap().0, other.0);
    }

    #[test]
    fn half_half_blocks() {
        let (_, truth) = generate_scene(&two_class(1, 1.0)).unwrap();
        let ones = truth.labels().iter().filter(|&&l| l == 1).count();
        assert_eq!(ones, 50);
        assert!(truth.labels()[..50].iter().all(|&l| l == 1));
        assert!(truth.labels()[50..].iter().all(|&l| l == 2));
    }

    #[test]
    fn uneven_fractions_cover_every_pixel() {
        let spec = SceneSpec {
            classes: vec![
                class(3, &[0.0], &[1.0], 0.3),
                class(9, &[0.0], &[1.0], 0.3),
                class(4, &[0.0], &[1.0], 0.4),
            ],
            width: 7,
            height: 3,
            seed: 0,
        };
        let (_, truth) = generate_scene(&spec).unwrap();
        assert_eq!(truth.labels().len(), 21);
        assert!(truth.labels().iter().all(|l| [3, 9, 4].contains(l)));
    }

    #[test]
    fn band_count_mismatch_rejected() {
        let mut spec = two_class(1, 1.0);
        spec.classes[1].mean.pop();
        assert_eq!(
            generate_scene(&spec).unwrap_err(),
            SceneError::BandCountMismatch {
                label: 2,
                expected: 3,
                got: 2
            }
        );
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = two_class(1, 1.0);
        spec.classes[1].fraction = 0.4;
        assert!(matches!(generate_scene(&spec), Err(SceneError::Invalid(_))));

        let mut spec = two_class(1, 1.0);
        spec.classes[1].label = 1;
        assert!(matches!(generate_scene(&spec), Err(SceneError::Invalid(_))));

        let mut spec = two_class(1, 1.0);
        spec.classes[0].label = 0;
        assert!(matches!(generate_scene(&spec), Err(SceneError::Invalid(_))));

        let mut spec = two_class(1, 1.0);
        spec.classes[0].sigma[0] = -1.0;
        assert!(matches!(generate_scene(&spec), Err(SceneError::Invalid(_))));
    }

    #[test]
    fn draws_look_standard_normal() {
        let n = 20_000;
        let draws: Vec<f64> = (0..n).map(|p| keyed_normal(7, p, 0)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.03, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }
}
