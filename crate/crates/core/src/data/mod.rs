//! Dataset ingestion, subset sampling, run configuration and on-disk
//! artifacts.

pub mod artifact;
pub mod config;
pub mod idx;

use crate::error::{Error, Result};
use crate::rng::{SeededRng, Stream};
use crate::tensor::Tensor;

pub use artifact::{load_logic, load_model, save_logic, save_model, Artifacts, FORMAT_VERSION};
pub use config::RunConfig;
pub use idx::{images_to_idx, labels_to_idx, load_idx, parse_idx};

/// One grayscale image with pixels in `[0, 1]`, stored as a `[1, rows, cols]`
/// tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImage {
    pub pixels: Tensor,
    pub label: usize,
    /// Position in the file it was read from.
    pub source_index: usize,
}

impl LabeledImage {
    pub fn new(pixels: Tensor, label: usize, source_index: usize) -> Result<Self> {
        if pixels.shape().len() != 3 || pixels.shape()[0] != 1 {
            return Err(Error::shape("LabeledImage", pixels.shape(), &[1, 0, 0]));
        }
        if let Some(p) = pixels.data().iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidArgument(format!("pixel value {p} outside [0, 1]")));
        }
        Ok(Self {
            pixels,
            label,
            source_index,
        })
    }
}

/// `n` items drawn without replacement: a seeded Fisher-Yates shuffle of
/// the indices, truncated to `n`, on the [`Stream::Subset`] stream.
pub fn sample_subset<T: Clone>(data: &[T], n: usize, seed: u64) -> Result<Vec<T>> {
    if n > data.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot sample {n} items from a set of {}",
            data.len()
        )));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    SeededRng::for_stream(seed, Stream::Subset).shuffle(&mut order);
    Ok(order[..n].iter().map(|&i| data[i].clone()).collect())
}

/// Disjoint train and test sets drawn from one shuffle.
pub fn train_test_split<T: Clone>(data: &[T], train: usize, test: usize, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    let mut both = sample_subset(data, train + test, seed)?;
    let test_set = both.split_off(train);
    Ok((both, test_set))
}
