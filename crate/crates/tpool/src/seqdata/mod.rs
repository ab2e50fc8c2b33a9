//! Sequence data model: frame-wise feature matrices, aligned label
//! sequences, datasets with cross-validation folds, file ingestion and a
//! synthetic generator for covariance-separable sequences.

mod io;
mod synth;

pub use io::{
    load_features, load_folds, load_labels, store_features, store_folds, store_labels,
    FeatureFormat,
};
pub use synth::{synth_covariance_dataset, SynthConfig};

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};

/// A temporal sequence of feature vectors, one row per frame (`T x d`).
///
/// Invariants enforced at construction: at least one frame, at least one
/// channel, every value finite.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    frames: Array2<f64>,
}

impl FeatureSequence {
    pub fn new(frames: Array2<f64>) -> Result<Self> {
        let (t, d) = frames.dim();
        if t == 0 || d == 0 {
            return Err(Error::Data(format!(
                "feature sequence must be at least 1x1, got {t}x{d}"
            )));
        }
        if let Some(((r, c), v)) = frames.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value {v} at frame {r}, channel {c}"
            )));
        }
        Ok(FeatureSequence { frames })
    }

    /// Wrap an array that is finite by construction (pooled or convolved
    /// output of validated inputs). Checked only in debug builds.
    pub(crate) fn from_raw(frames: Array2<f64>) -> Self {
        debug_assert!(frames.nrows() >= 1 && frames.ncols() >= 1);
        debug_assert!(frames.iter().all(|v| v.is_finite()));
        FeatureSequence { frames }
    }

    /// Number of frames `T`.
    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false // T >= 1 by construction
    }

    /// Number of channels `d`.
    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }

    pub fn frames(&self) -> &Array2<f64> {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> ArrayView1<'_, f64> {
        self.frames.row(t)
    }

    pub fn into_frames(self) -> Array2<f64> {
        self.frames
    }
}

/// Frame-wise class labels aligned with a [`FeatureSequence`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSequence {
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabelSequence {
    pub fn new(labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Data("label sequence must not be empty".into()));
        }
        if let Some((t, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::Data(format!(
                "label {l} at frame {t} is out of range for {num_classes} classes"
            )));
        }
        Ok(LabelSequence {
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false // length >= 1 by construction
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

/// One feature sequence with its aligned labels.
#[derive(Debug, Clone)]
pub struct Item {
    pub features: FeatureSequence,
    pub labels: LabelSequence,
}

/// A collection of labeled sequences partitioned into cross-validation
/// folds. All items share the channel count and the class vocabulary; the
/// folds are disjoint and cover every item.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub items: Vec<Item>,
    pub num_classes: usize,
    pub folds: Vec<Vec<usize>>,
}

impl Dataset {
    pub fn new(items: Vec<Item>, num_classes: usize, folds: Vec<Vec<usize>>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::Data("dataset must contain at least one item".into()));
        }
        let d = items[0].features.dim();
        for (i, item) in items.iter().enumerate() {
            if item.features.dim() != d {
                return Err(Error::Shape(format!(
                    "item {i} has {} channels, expected {d}",
                    item.features.dim()
                )));
            }
            if item.features.len() != item.labels.len() {
                return Err(Error::Shape(format!(
                    "item {i}: {} frames but {} labels",
                    item.features.len(),
                    item.labels.len()
                )));
            }
            if item.labels.num_classes() != num_classes {
                return Err(Error::Data(format!(
                    "item {i} labeled over {} classes, dataset has {num_classes}",
                    item.labels.num_classes()
                )));
            }
        }
        let mut seen = vec![false; items.len()];
        for fold in &folds {
            for &idx in fold {
                if idx >= items.len() {
                    return Err(Error::Data(format!(
                        "fold references item {idx}, dataset has {}",
                        items.len()
                    )));
                }
                if seen[idx] {
                    return Err(Error::Data(format!("item {idx} appears in two folds")));
                }
                seen[idx] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(Error::Data(format!("item {missing} is in no fold")));
        }
        Ok(Dataset {
            items,
            num_classes,
            folds,
        })
    }

    /// Channel count shared by all items.
    pub fn dim(&self) -> usize {
        self.items[0].features.dim()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Item indices belonging to the given folds, in ascending order.
    pub fn fold_items(&self, fold_ids: &[usize]) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        for &f in fold_ids {
            let fold = self
                .folds
                .get(f)
                .ok_or_else(|| Error::Config(format!("fold {f} does not exist")))?;
            out.extend_from_slice(fold);
        }
        out.sort_unstable();
        Ok(out)
    }
}

/// Keep every `factor`-th frame (indices `0, factor, 2·factor, …`) of an
/// aligned feature/label pair.
pub fn downsample(
    x: &FeatureSequence,
    y: &LabelSequence,
    factor: usize,
) -> Result<(FeatureSequence, LabelSequence)> {
    if factor < 1 {
        return Err(Error::Config("downsampling factor must be >= 1".into()));
    }
    if x.len() != y.len() {
        return Err(Error::Shape(format!(
            "{} frames but {} labels",
            x.len(),
            y.len()
        )));
    }
    let kept: Vec<usize> = (0..x.len()).step_by(factor).collect();
    let mut frames = Array2::zeros((kept.len(), x.dim()));
    let mut labels = Vec::with_capacity(kept.len());
    for (row, &src) in kept.iter().enumerate() {
        frames.row_mut(row).assign(&x.frame(src));
        labels.push(y.labels()[src]);
    }
    Ok((
        FeatureSequence::from_raw(frames),
        LabelSequence::new(labels, y.num_classes())?,
    ))
}
