//! Synthetic stand-in for a biased face-attribute dataset.
//!
//! Each image is a flat 0.2 background with additive features: a horizontal
//! band for the protected attribute, a centered square for the target, and
//! one small corner marker per auxiliary attribute.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Dataset, Example};
use crate::nets::IMAGE_SIZE;
use crate::tensor::Tensor;
use crate::{Error, Result};

const BASE: f64 = 0.2;
const BAND_ROWS: std::ops::RangeInclusive<usize> = 2..=4;
const BAND_GAIN: f64 = 0.5;
const SQUARE: std::ops::RangeInclusive<usize> = 5..=10;
const SQUARE_GAIN: f64 = 0.4;
const MARKER_GAIN: f64 = 0.3;

/// Top-left corners of the 2×2 auxiliary markers. None overlaps the band,
/// the square, or another marker.
pub const MARKER_SLOTS: [(usize, usize); 8] = [(0, 0), (0, 14), (14, 0), (14, 14), (0, 7), (14, 7), (7, 0), (7, 14)];

/// Synthetic generation settings. Defaults reproduce the CelebA
/// Attractive-given-Male rates (67.91% for Male=0, 27.93% for Male=1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub p_y_given_s0: f64,
    pub p_y_given_s1: f64,
    /// Dependence strength `d_j` of each auxiliary attribute on the target:
    /// `a_j = y` with probability `(1 + d_j) / 2`.
    pub aux_spec: Vec<f64>,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_train: 4000,
            n_test: 1000,
            p_y_given_s0: 0.6791,
            p_y_given_s1: 0.2793,
            aux_spec: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
            noise_sigma: 0.1,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must lie in [0, 1], got {p}")))
            }
        };
        prob("p_y_given_s0", self.p_y_given_s0)?;
        prob("p_y_given_s1", self.p_y_given_s1)?;
        for (j, &d) in self.aux_spec.iter().enumerate() {
            prob(&format!("aux_spec[{j}]"), d)?;
        }
        if self.aux_spec.len() > MARKER_SLOTS.len() {
            return Err(Error::InvalidArgument(format!(
                "at most {} auxiliary attributes, got {}",
                MARKER_SLOTS.len(),
                self.aux_spec.len()
            )));
        }
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::InvalidArgument("n_train and n_test must be >= 1".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise_sigma must be non-negative, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }

    pub fn aux_names(&self) -> Vec<String> {
        (1..=self.aux_spec.len()).map(|j| format!("Aux{j}")).collect()
    }
}

/// Renders one image; identical arguments give identical pixels.
pub fn render_example(y: u8, s: u8, aux: &[u8], noise_sigma: f64, noise_seed: u64) -> Result<Tensor<f32>> {
    if y > 1 || s > 1 || aux.iter().any(|&a| a > 1) {
        return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
    }
    if aux.len() > MARKER_SLOTS.len() {
        return Err(Error::InvalidArgument(format!(
            "{} auxiliary attributes but only {} marker slots",
            aux.len(),
            MARKER_SLOTS.len()
        )));
    }
    let mut px = vec![BASE; IMAGE_SIZE * IMAGE_SIZE];
    if s == 1 {
        for r in BAND_ROWS {
            px[r * IMAGE_SIZE..(r + 1) * IMAGE_SIZE].iter_mut().for_each(|v| *v += BAND_GAIN);
        }
    }
    if y == 1 {
        for r in SQUARE {
            for c in SQUARE {
                px[r * IMAGE_SIZE + c] += SQUARE_GAIN;
            }
        }
    }
    for (&a, &(r0, c0)) in aux.iter().zip(&MARKER_SLOTS) {
        if a == 1 {
            for r in r0..r0 + 2 {
                for c in c0..c0 + 2 {
                    px[r * IMAGE_SIZE + c] += MARKER_GAIN;
                }
            }
        }
    }
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        px.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
    }
    let data = px.into_iter().map(|v| v.clamp(0.0, 1.0) as f32).collect();
    Tensor::new(vec![1, IMAGE_SIZE, IMAGE_SIZE], data)
}

fn generate_one(cfg: &GenConfig, example_seed: u64) -> Result<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(example_seed);
    let s = rng.random_bool(0.5) as u8;
    let p = if s == 0 { cfg.p_y_given_s0 } else { cfg.p_y_given_s1 };
    let y = rng.random_bool(p) as u8;
    let aux: Vec<u8> = cfg
        .aux_spec
        .iter()
        .map(|&d| {
            let agree = rng.random_bool((1.0 + d) / 2.0);
            if agree {
                y
            } else {
                1 - y
            }
        })
        .collect();
    let image = render_example(y, s, &aux, cfg.noise_sigma, rng.next_u64())?;
    Ok(Example { image, y, s, aux })
}

/// Generates `(train, test)`. Example `i` of the training split uses seed
/// `seed + i`; test example `i` uses `seed + n_train + i`.
pub fn synth_generate(cfg: &GenConfig) -> Result<(Dataset, Dataset)> {
    cfg.validate()?;
    let split = |offset: u64, n: usize| -> Result<Dataset> {
        let examples = (0..n)
            .into_par_iter()
            .map(|i| generate_one(cfg, cfg.seed.wrapping_add(offset).wrapping_add(i as u64)))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new("Attractive", "Male", cfg.aux_names(), examples)
    };
    Ok((split(0, cfg.n_train)?, split(cfg.n_train as u64, cfg.n_test)?))
}
