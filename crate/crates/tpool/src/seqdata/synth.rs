//! Synthetic sequences whose classes share identical first-order statistics
//! and differ only in second-order structure.
//!
//! Each sequence alternates between two classes in random-length segments.
//! Frames of both classes are zero-mean with unit per-channel variance;
//! consecutive channel pairs `(0,1), (2,3), …` carry correlation `+rho` in
//! class 0 and `-rho` in class 1. A pooler limited to first-order
//! statistics sees two identical distributions; a second-order pooler can
//! separate them.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Dataset, FeatureSequence, Item, LabelSequence};
use crate::error::{Error, Result};
use crate::rng::CounterRng;

/// Parameters of the covariance-separable generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_sequences: usize,
    pub frames_per_sequence: usize,
    pub dim: usize,
    pub segment_len: (usize, usize),
    pub rho: f64,
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::Config(format!(
                "need at least 2 channels for pair correlations, got {}",
                self.dim
            )));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Config(format!(
                "rho must lie strictly inside (0, 1), got {}",
                self.rho
            )));
        }
        let (lo, hi) = self.segment_len;
        if lo < 1 || hi < lo {
            return Err(Error::Config(format!(
                "segment length range ({lo}, {hi}) is invalid"
            )));
        }
        if self.n_sequences < 1 || self.frames_per_sequence < 1 {
            return Err(Error::Config(
                "need at least one sequence and one frame".into(),
            ));
        }
        Ok(())
    }
}

// stream tags for per-sequence substreams
const STREAM_SEGMENTS: u64 = 0;
const STREAM_VALUES: u64 = 1;

/// Generate the dataset described by `cfg`; a pure function of the seed.
/// Items are split into five contiguous folds (fewer when there are fewer
/// items than folds).
pub fn synth_covariance_dataset(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let (lo, hi) = cfg.segment_len;
    let span = (hi - lo + 1) as u64;
    let mut items = Vec::with_capacity(cfg.n_sequences);
    for i in 0..cfg.n_sequences {
        let mut seg_rng = CounterRng::with_stream(cfg.seed, (i as u64) << 1 | STREAM_SEGMENTS);
        let mut val_rng = CounterRng::with_stream(cfg.seed, (i as u64) << 1 | STREAM_VALUES);

        let t = cfg.frames_per_sequence;
        let mut labels = Vec::with_capacity(t);
        let mut class = seg_rng.uniform_u64(2) as usize;
        while labels.len() < t {
            let run = lo as u64 + seg_rng.uniform_u64(span);
            for _ in 0..run.min((t - labels.len()) as u64) {
                labels.push(class);
            }
            class ^= 1;
        }

        let mut frames = Array2::zeros((t, cfg.dim));
        for (row, &label) in labels.iter().enumerate() {
            let r = if label == 0 { cfg.rho } else { -cfg.rho };
            let tail = 1.0 - r * r;
            let tail = tail.sqrt();
            let mut c = 0;
            while c + 1 < cfg.dim {
                let za = val_rng.normal();
                let zb = val_rng.normal();
                frames[[row, c]] = za;
                frames[[row, c + 1]] = r * za + tail * zb;
                c += 2;
            }
            if c < cfg.dim {
                frames[[row, c]] = val_rng.normal();
            }
        }

        items.push(Item {
            features: FeatureSequence::new(frames)?,
            labels: LabelSequence::new(labels, 2)?,
        });
    }

    let folds = contiguous_folds(cfg.n_sequences, 5);
    Dataset::new(items, 2, folds)
}

/// Split `0..n` into up to `k` contiguous, near-equal folds.
fn contiguous_folds(n: usize, k: usize) -> Vec<Vec<usize>> {
    let k = k.min(n);
    let mut folds = Vec::with_capacity(k);
    let base = n / k;
    let extra = n % k;
    let mut at = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push((at..at + size).collect());
        at += size;
    }
    folds
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_cfg() -> SynthConfig {
        SynthConfig {
            seed: 1,
            n_sequences: 4,
            frames_per_sequence: 100,
            dim: 2,
            segment_len: (10, 20),
            rho: 0.9,
        }
    }

    #[test]
    fn construction_matches_requested_shape() {
        let ds = synth_covariance_dataset(&base_cfg()).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.num_classes, 2);
        for item in &ds.items {
            assert_eq!(item.features.len(), 100);
            assert_eq!(item.features.dim(), 2);
        }
    }

    #[test]
    fn segments_alternate_within_length_range() {
        let ds = synth_covariance_dataset(&base_cfg()).unwrap();
        for item in &ds.items {
            let labels = item.labels.labels();
            let mut runs = Vec::new();
            let mut len = 1;
            for w in labels.windows(2) {
                if w[0] == w[1] {
                    len += 1;
                } else {
                    runs.push(len);
                    len = 1;
                }
            }
            runs.push(len);
            // every run except possibly the truncated last one is in range
            for &r in &runs[..runs.len() - 1] {
                assert!((10..=20).contains(&r), "run length {r}");
            }
            assert!(*runs.last().unwrap() <= 20);
        }
    }

    #[test]
    fn equal_seeds_give_identical_datasets() {
        let a = synth_covariance_dataset(&base_cfg()).unwrap();
        let b = synth_covariance_dataset(&base_cfg()).unwrap();
        for (ia, ib) in a.items.iter().zip(b.items.iter()) {
            assert_eq!(ia.features.frames(), ib.features.frames());
            assert_eq!(ia.labels.labels(), ib.labels.labels());
        }
        let mut cfg2 = base_cfg();
        cfg2.seed = 2;
        let c = synth_covariance_dataset(&cfg2).unwrap();
        assert_ne!(
            a.items[0].features.frames(),
            c.items[0].features.frames()
        );
    }

    #[test]
    fn per_class_moments_match_the_design() {
        // law-of-large-numbers oracle over >= 10^4 frames per class
        let cfg = SynthConfig {
            seed: 7,
            n_sequences: 3,
            frames_per_sequence: 12_000,
            dim: 3,
            segment_len: (10, 20),
            rho: 0.9,
        };
        let ds = synth_covariance_dataset(&cfg).unwrap();
        for class in 0..2 {
            let mut count = 0usize;
            let mut sums = [0.0f64; 3];
            let mut sq = [0.0f64; 3];
            let mut cross01 = 0.0f64;
            for item in &ds.items {
                for (t, &l) in item.labels.labels().iter().enumerate() {
                    if l != class {
                        continue;
                    }
                    count += 1;
                    let f = item.features.frame(t);
                    for c in 0..3 {
                        sums[c] += f[c];
                        sq[c] += f[c] * f[c];
                    }
                    cross01 += f[0] * f[1];
                }
            }
            assert!(count >= 10_000, "class {class} has only {count} frames");
            let n = count as f64;
            let mean: Vec<f64> = sums.iter().map(|s| s / n).collect();
            for (c, m) in mean.iter().enumerate() {
                assert!(m.abs() < 0.1, "class {class} channel {c} mean {m}");
            }
            let var: Vec<f64> = (0..3).map(|c| sq[c] / n - mean[c] * mean[c]).collect();
            for (c, v) in var.iter().enumerate() {
                assert!((v - 1.0).abs() < 0.1, "class {class} channel {c} var {v}");
            }
            let corr = (cross01 / n - mean[0] * mean[1]) / (var[0] * var[1]).sqrt();
            let expect = if class == 0 { 0.9 } else { -0.9 };
            assert!(
                (corr - expect).abs() < 0.05,
                "class {class} corr {corr}, expected {expect}"
            );
        }
    }

    #[test]
    fn invalid_rho_is_config_error() {
        let mut cfg = base_cfg();
        cfg.rho = 1.5;
        assert!(matches!(
            synth_covariance_dataset(&cfg),
            Err(Error::Config(_))
        ));
        cfg.rho = 0.0;
        assert!(synth_covariance_dataset(&cfg).is_err());
    }

    #[test]
    fn fold_partition_is_contiguous_and_balanced() {
        assert_eq!(
            contiguous_folds(50, 5).iter().map(Vec::len).collect::<Vec<_>>(),
            vec![10; 5]
        );
        assert_eq!(contiguous_folds(3, 5).len(), 3);
        let folds = contiguous_folds(11, 5);
        assert_eq!(folds.iter().map(Vec::len).sum::<usize>(), 11);
    }
}
