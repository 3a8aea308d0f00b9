use crate::data::{normalize, resize_bilinear, LabeledDataset, Rng};
use crate::tensor::Tensor;

/// A dataset resized to one resolution and normalized once, ready for
/// repeated epochs.
#[derive(Clone, Debug)]
pub struct PreparedDataset {
    pub resolution: usize,
    pub num_classes: usize,
    inputs: Vec<Vec<f32>>,
    labels: Vec<usize>,
}

impl PreparedDataset {
    pub fn new(dataset: &LabeledDataset, resolution: usize) -> Self {
        let (inputs, labels) = dataset
            .items
            .iter()
            .map(|s| {
                let img = if s.image.width() == resolution && s.image.height() == resolution {
                    normalize(&s.image)
                } else {
                    normalize(&resize_bilinear(&s.image, resolution, resolution))
                };
                (img.into_data(), s.label)
            })
            .unzip();
        Self {
            resolution,
            num_classes: dataset.num_classes(),
            inputs,
            labels,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Stacks the given items into one (N, 3, R, R) tensor.
    pub fn gather(&self, indices: &[usize]) -> (Tensor<f32>, Vec<usize>) {
        let r = self.resolution;
        let mut data = Vec::with_capacity(indices.len() * 3 * r * r);
        for &i in indices {
            data.extend_from_slice(&self.inputs[i]);
        }
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        (Tensor::new([indices.len(), 3, r, r], data).expect("prepared inputs"), labels)
    }
}

#[derive(Clone, Debug)]
pub struct Batch {
    pub inputs: Tensor<f32>,
    pub labels: Vec<usize>,
    /// Positions of the batch items in the prepared dataset.
    pub indices: Vec<usize>,
}

/// Iterates over a dataset in batches of `batch_size`; the last batch may be
/// short. With `shuffle`, the order is a permutation seeded by `seed`.
pub fn batches(data: &PreparedDataset, batch_size: usize, shuffle: bool, seed: u64) -> Batches<'_> {
    assert!(batch_size >= 1, "batch_size must be >= 1");
    let mut order: Vec<usize> = (0..data.len()).collect();
    if shuffle {
        Rng::new(seed).shuffle(&mut order);
    }
    Batches {
        data,
        order,
        batch_size,
        pos: 0,
    }
}

pub struct Batches<'a> {
    data: &'a PreparedDataset,
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

impl Iterator for Batches<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let indices = self.order[self.pos..end].to_vec();
        self.pos = end;
        let (inputs, labels) = self.data.gather(&indices);
        Some(Batch { inputs, labels, indices })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.order.len() - self.pos).div_ceil(self.batch_size);
        (left, Some(left))
    }
}

impl ExactSizeIterator for Batches<'_> {}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_dataset;

    #[test]
    fn seventy_items_in_batches_of_32() {
        let d = PreparedDataset::new(&synth_dataset(35, 8, 1), 8);
        let sizes: Vec<usize> = batches(&d, 32, true, 0).map(|b| b.labels.len()).collect();
        assert_eq!(sizes, vec![32, 32, 6]);
    }

    #[test]
    fn unshuffled_preserves_order() {
        let d = PreparedDataset::new(&synth_dataset(3, 8, 1), 8);
        let idx: Vec<usize> = batches(&d, 4, false, 99).flat_map(|b| b.indices).collect();
        assert_eq!(idx, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn epochs_permute_differently_with_same_multiset() {
        let d = PreparedDataset::new(&synth_dataset(10, 8, 1), 8);
        let a: Vec<usize> = batches(&d, 3, true, 5).flat_map(|b| b.indices).collect();
        let b: Vec<usize> = batches(&d, 3, true, 6).flat_map(|b| b.indices).collect();
        assert_ne!(a, b);
        let (mut sa, mut sb) = (a.clone(), b.clone());
        sa.sort();
        sb.sort();
        assert_eq!(sa, sb);
        assert_eq!(sa, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn resizes_to_target_resolution() {
        let d = PreparedDataset::new(&synth_dataset(1, 20, 1), 8);
        let b = batches(&d, 8, false, 0).next().unwrap();
        assert_eq!(b.inputs.shape(), [2, 3, 8, 8]);
        assert_eq!(b.labels, vec![0, 1]);
    }
}
