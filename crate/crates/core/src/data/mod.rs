//! Datasets of 16×16 grayscale images with binary target, protected and
//! auxiliary labels, plus synthetic generation and CelebA-style ingestion.

mod celeba;
mod synth;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::nets::IMAGE_SIZE;
use crate::tensor::Tensor;
use crate::{Error, Result};

pub use celeba::{
    load_attr_file, load_dataset_dir, load_pgm_dataset, read_pgm, save_dataset, write_attr_file, write_pgm,
    AttrTable, ATTR_FILE_NAME,
};
pub use synth::{render_example, synth_generate, GenConfig, MARKER_SLOTS};

/// One labelled image.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    /// `1×16×16`, values in [0, 1].
    pub image: Tensor<f32>,
    pub y: u8,
    pub s: u8,
    pub aux: Vec<u8>,
}

/// Which label of an [`Example`] to read.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelColumn {
    Target,
    Protected,
    Aux(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub target_name: String,
    pub protected_name: String,
    pub aux_names: Vec<String>,
    examples: Vec<Example>,
}

impl Dataset {
    pub fn new(
        target_name: impl Into<String>,
        protected_name: impl Into<String>,
        aux_names: Vec<String>,
        examples: Vec<Example>,
    ) -> Result<Self> {
        for (i, ex) in examples.iter().enumerate() {
            if ex.image.shape() != [1, IMAGE_SIZE, IMAGE_SIZE] {
                return Err(Error::Shape(format!("example {i}: image shape {:?}", ex.image.shape())));
            }
            if ex.aux.len() != aux_names.len() {
                return Err(Error::Shape(format!(
                    "example {i}: {} aux labels for {} aux columns",
                    ex.aux.len(),
                    aux_names.len()
                )));
            }
            if ex.y > 1 || ex.s > 1 || ex.aux.iter().any(|&a| a > 1) {
                return Err(Error::InvalidArgument(format!("example {i}: labels must be 0 or 1")));
            }
        }
        Ok(Dataset {
            target_name: target_name.into(),
            protected_name: protected_name.into(),
            aux_names,
            examples,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    /// Stacks the selected images into an `N×1×16×16` batch.
    pub fn images(&self, indices: &[usize]) -> Tensor<f32> {
        let mut data = Vec::with_capacity(indices.len() * IMAGE_SIZE * IMAGE_SIZE);
        for &i in indices {
            data.extend_from_slice(self.examples[i].image.data());
        }
        Tensor::new(vec![indices.len(), 1, IMAGE_SIZE, IMAGE_SIZE], data).expect("images are 1×16×16")
    }

    pub fn label(&self, i: usize, column: LabelColumn) -> u8 {
        let ex = &self.examples[i];
        match column {
            LabelColumn::Target => ex.y,
            LabelColumn::Protected => ex.s,
            LabelColumn::Aux(j) => ex.aux[j],
        }
    }

    pub fn labels(&self, column: LabelColumn) -> Vec<u8> {
        (0..self.len()).map(|i| self.label(i, column)).collect()
    }

    pub fn column_name(&self, column: LabelColumn) -> &str {
        match column {
            LabelColumn::Target => &self.target_name,
            LabelColumn::Protected => &self.protected_name,
            LabelColumn::Aux(j) => &self.aux_names[j],
        }
    }

    /// Selected labels as a float vector.
    pub fn label_tensor(&self, column: LabelColumn, indices: &[usize]) -> Tensor<f32> {
        let data = indices.iter().map(|&i| self.label(i, column) as f32).collect();
        Tensor::new(vec![indices.len()], data).expect("vector shape")
    }

    /// Same labels, images replaced one-for-one.
    pub fn with_images(&self, images: Vec<Tensor<f32>>) -> Result<Self> {
        if images.len() != self.len() {
            return Err(Error::Shape(format!(
                "{} replacement images for {} examples",
                images.len(),
                self.len()
            )));
        }
        let examples = self
            .examples
            .iter()
            .zip(images)
            .map(|(ex, image)| Example { image, ..ex.clone() })
            .collect();
        Dataset::new(
            self.target_name.clone(),
            self.protected_name.clone(),
            self.aux_names.clone(),
            examples,
        )
    }
}

/// Shuffled index batches. Seeded Fisher–Yates over `0..len`, chunked; a
/// trailing batch smaller than 2 is dropped.
pub fn batch_iter(dataset: &Dataset, batch_size: usize, shuffle_seed: u64) -> Result<Vec<Vec<usize>>> {
    batch_indices(dataset.len(), batch_size, shuffle_seed)
}

pub fn batch_indices(len: usize, batch_size: usize, shuffle_seed: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size < 2 {
        return Err(Error::InvalidArgument(format!("batch size must be >= 2, got {batch_size}")));
    }
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
    Ok(order
        .chunks(batch_size)
        .filter(|c| c.len() >= 2)
        .map(<[usize]>::to_vec)
        .collect())
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
