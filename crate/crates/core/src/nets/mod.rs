//! The miniature U-net reconstructor and the two-headed classifier.
//!
//! Both networks take `N×1×16×16` grayscale batches. The U-net keeps two
//! pooling levels with skip concatenations and a sigmoid output; the
//! classifier is a small conv/pool trunk with one sigmoid unit per head.
//!
//! ```text
//! U-net:  enc1 (1→8→8) ─────────────────────────────┐
//!           pool → enc2 (8→16→16) ───────────┐      │
//!                    pool → bottleneck (16→32→32)   │
//!                    up+conv 32→16, concat ──┘      │
//!                    dec2 (32→16→16)                │
//!           up+conv 16→8, concat ───────────────────┘
//!           dec1 (16→8→8) → 1×1 head (8→1) → sigmoid
//! ```

mod checkpoint;
mod params;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::tensor::{Real, Tape, Tensor, Var};
use crate::{Error, Result};

pub use params::{Bound, ParamSet};

/// Side length of the square input images.
pub const IMAGE_SIZE: usize = 16;

#[derive(Clone, Copy, Debug)]
enum Layer {
    Conv { c_in: usize, c_out: usize, k: usize },
    Dense { f_in: usize, f_out: usize },
}

impl Layer {
    fn shapes(self) -> (Vec<usize>, Vec<usize>) {
        match self {
            Layer::Conv { c_in, c_out, k } => (vec![c_out, c_in, k, k], vec![c_out]),
            Layer::Dense { f_in, f_out } => (vec![f_in, f_out], vec![f_out]),
        }
    }

    fn fan_in(self) -> usize {
        match self {
            Layer::Conv { c_in, k, .. } => c_in * k * k,
            Layer::Dense { f_in, .. } => f_in,
        }
    }
}

const fn conv(c_in: usize, c_out: usize, k: usize) -> Layer {
    Layer::Conv { c_in, c_out, k }
}

const UNET_LAYERS: [(&str, Layer); 13] = [
    ("enc1.conv1", conv(1, 8, 3)),
    ("enc1.conv2", conv(8, 8, 3)),
    ("enc2.conv1", conv(8, 16, 3)),
    ("enc2.conv2", conv(16, 16, 3)),
    ("bottleneck.conv1", conv(16, 32, 3)),
    ("bottleneck.conv2", conv(32, 32, 3)),
    ("dec2.up", conv(32, 16, 3)),
    ("dec2.conv1", conv(32, 16, 3)),
    ("dec2.conv2", conv(16, 16, 3)),
    ("dec1.up", conv(16, 8, 3)),
    ("dec1.conv1", conv(16, 8, 3)),
    ("dec1.conv2", conv(8, 8, 3)),
    ("head", conv(8, 1, 1)),
];

/// Flattened width of the classifier trunk: 16 channels at 4×4.
const TRUNK_FEATURES: usize = 16 * 4 * 4;
const HIDDEN: usize = 32;

fn classifier_layers(heads: usize) -> [(&'static str, Layer); 4] {
    [
        ("conv1", conv(1, 8, 3)),
        ("conv2", conv(8, 16, 3)),
        ("dense1", Layer::Dense { f_in: TRUNK_FEATURES, f_out: HIDDEN }),
        ("head", Layer::Dense { f_in: HIDDEN, f_out: heads }),
    ]
}

fn expected_shapes(layers: &[(&str, Layer)]) -> Vec<(String, Vec<usize>)> {
    layers
        .iter()
        .flat_map(|&(name, layer)| {
            let (w, b) = layer.shapes();
            [(format!("{name}.weight"), w), (format!("{name}.bias"), b)]
        })
        .collect()
}

/// He-normal weights (`sd = sqrt(2 / fan_in)`) and zero biases, drawn in layer order.
fn init_layers(layers: &[(&str, Layer)], seed: u64) -> ParamSet<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = ParamSet::new();
    for &(name, layer) in layers {
        let (ws, bs) = layer.shapes();
        let sd = (2.0 / layer.fan_in() as f64).sqrt() as f32;
        let normal = Normal::new(0.0f32, sd).expect("positive standard deviation");
        let w = Tensor::from_fn(&ws, |_| normal.sample(&mut rng));
        set.push(format!("{name}.weight"), w);
        set.push(format!("{name}.bias"), Tensor::zeros(&bs));
    }
    set
}

fn check_batch<T: Real>(t: &Tensor<T>) -> Result<usize> {
    match t.dims4()? {
        [n, 1, IMAGE_SIZE, IMAGE_SIZE] => Ok(n),
        other => Err(Error::Shape(format!(
            "expected N×1×{IMAGE_SIZE}×{IMAGE_SIZE} images, got {other:?}"
        ))),
    }
}

fn conv_layer<T: Real>(tape: &mut Tape<T>, p: &Bound, name: &str, x: Var, pad: usize) -> Result<Var> {
    let w = p.get(&format!("{name}.weight"))?;
    let b = p.get(&format!("{name}.bias"))?;
    tape.conv2d(x, w, b, pad)
}

fn conv_relu<T: Real>(tape: &mut Tape<T>, p: &Bound, name: &str, x: Var) -> Result<Var> {
    let y = conv_layer(tape, p, name, x, 1)?;
    tape.relu(y)
}

fn dense<T: Real>(tape: &mut Tape<T>, p: &Bound, name: &str, x: Var) -> Result<Var> {
    let w = p.get(&format!("{name}.weight"))?;
    let b = p.get(&format!("{name}.bias"))?;
    tape.affine(x, w, b)
}

/// Reconstructor parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct UNetParams {
    params: ParamSet<f32>,
}

impl UNetParams {
    pub fn init(seed: u64) -> Self {
        UNetParams {
            params: init_layers(&UNET_LAYERS, seed),
        }
    }

    pub fn expected_shapes() -> Vec<(String, Vec<usize>)> {
        expected_shapes(&UNET_LAYERS)
    }

    /// Wraps a parameter set after checking it against the architecture.
    pub fn from_params(params: ParamSet<f32>) -> Result<Self> {
        params.check_layout(&Self::expected_shapes())?;
        Ok(UNetParams { params })
    }

    pub fn params(&self) -> &ParamSet<f32> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<f32> {
        &mut self.params
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        self.params.save(path)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_params(ParamSet::load(path)?)
    }

    /// Forward pass without gradient tracking.
    pub fn reconstruct(&self, batch: &Tensor<f32>) -> Result<Tensor<f32>> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let x = tape.constant(batch.clone());
        let y = unet_forward(&mut tape, &bound, x)?;
        Ok(tape.value(y)?.clone())
    }
}

/// Records the U-net on `tape`. Output has the input's shape, values in (0, 1).
pub fn unet_forward<T: Real>(tape: &mut Tape<T>, p: &Bound, x: Var) -> Result<Var> {
    check_batch(tape.value(x)?)?;
    let e1 = conv_relu(tape, p, "enc1.conv1", x)?;
    let e1 = conv_relu(tape, p, "enc1.conv2", e1)?;
    let p1 = tape.maxpool2d(e1)?;
    let e2 = conv_relu(tape, p, "enc2.conv1", p1)?;
    let e2 = conv_relu(tape, p, "enc2.conv2", e2)?;
    let p2 = tape.maxpool2d(e2)?;
    let b = conv_relu(tape, p, "bottleneck.conv1", p2)?;
    let b = conv_relu(tape, p, "bottleneck.conv2", b)?;

    let u2 = tape.upsample_nearest(b)?;
    let u2 = conv_relu(tape, p, "dec2.up", u2)?;
    let c2 = tape.concat_channels(e2, u2)?;
    let d2 = conv_relu(tape, p, "dec2.conv1", c2)?;
    let d2 = conv_relu(tape, p, "dec2.conv2", d2)?;

    let u1 = tape.upsample_nearest(d2)?;
    let u1 = conv_relu(tape, p, "dec1.up", u1)?;
    let c1 = tape.concat_channels(e1, u1)?;
    let d1 = conv_relu(tape, p, "dec1.conv1", c1)?;
    let d1 = conv_relu(tape, p, "dec1.conv2", d1)?;

    let out = conv_layer(tape, p, "head", d1, 0)?;
    tape.sigmoid(out)
}

/// Frozen-capable classifier with `heads` sigmoid outputs.
///
/// The de-biasing classifier has two heads: column 0 is `P(y=1|x)`,
/// column 1 is `P(s=1|x)`. Attribute classifiers use a single head.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierParams {
    params: ParamSet<f32>,
    heads: usize,
    frozen: bool,
}

impl ClassifierParams {
    /// Two-headed classifier.
    pub fn init(seed: u64) -> Self {
        Self::init_with_heads(seed, 2)
    }

    pub fn init_with_heads(seed: u64, heads: usize) -> Self {
        ClassifierParams {
            params: init_layers(&classifier_layers(heads), seed),
            heads,
            frozen: false,
        }
    }

    pub fn expected_shapes(heads: usize) -> Vec<(String, Vec<usize>)> {
        expected_shapes(&classifier_layers(heads))
    }

    /// Wraps a parameter set; the head count is read from `head.weight`.
    pub fn from_params(params: ParamSet<f32>, frozen: bool) -> Result<Self> {
        let heads = params
            .get("head.weight")
            .ok_or_else(|| Error::MissingParam("head.weight".into()))?
            .shape()
            .get(1)
            .copied()
            .ok_or_else(|| Error::Shape("head.weight must be 2-D".into()))?;
        if heads == 0 {
            return Err(Error::Shape("classifier needs at least one head".into()));
        }
        params.check_layout(&Self::expected_shapes(heads))?;
        Ok(ClassifierParams { params, heads, frozen })
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(mut self) -> Self {
        self.frozen = true;
        self
    }

    pub fn params(&self) -> &ParamSet<f32> {
        &self.params
    }

    /// Mutable access for training; fails once frozen.
    pub fn params_mut(&mut self) -> Result<&mut ParamSet<f32>> {
        if self.frozen {
            return Err(Error::Frozen);
        }
        Ok(&mut self.params)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        self.params.save(path)
    }

    /// Loads a checkpoint. Saved classifiers are pre-trained, so the result is frozen.
    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_params(ParamSet::load(path)?, true)
    }

    /// `N×heads` probabilities without gradient tracking.
    pub fn predict(&self, batch: &Tensor<f32>) -> Result<Tensor<f32>> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let x = tape.constant(batch.clone());
        let y = classifier_forward(&mut tape, &bound, x)?;
        Ok(tape.value(y)?.clone())
    }
}

/// Records the classifier on `tape`, returning `N×heads` probabilities.
/// Gradients reach `x` whether or not the parameters are tracked.
pub fn classifier_forward<T: Real>(tape: &mut Tape<T>, p: &Bound, x: Var) -> Result<Var> {
    check_batch(tape.value(x)?)?;
    let h = conv_relu(tape, p, "conv1", x)?;
    let h = tape.maxpool2d(h)?;
    let h = conv_relu(tape, p, "conv2", h)?;
    let h = tape.maxpool2d(h)?;
    let h = tape.flatten(h)?;
    let h = dense(tape, p, "dense1", h)?;
    let h = tape.relu(h)?;
    let logits = dense(tape, p, "head", h)?;
    tape.sigmoid(logits)
}

/// Splits two-headed output into `(h1, h2)` length-N vectors.
pub fn split_heads<T: Real>(tape: &mut Tape<T>, probs: Var) -> Result<(Var, Var)> {
    Ok((tape.column(probs, 0)?, tape.column(probs, 1)?))
}

#[cfg(test)]
mod tests;
