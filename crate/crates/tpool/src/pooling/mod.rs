//! Local temporal pooling operators.
//!
//! A pooling operator slides a window of `|N|` frames over the sequence and
//! emits one output frame per stride step. Besides plain channel-wise max
//! pooling, this module implements second-order (bilinear) poolers:
//!
//! * `coupled` — the weighted sum of per-frame outer products
//!   `vec(Σ_τ ω_τ x_τ ⊗ x_τ)`, entangling first and second order statistics;
//! * `decoupled` — a weighted local mean `μ = Σ_τ p_τ x_τ` concatenated with
//!   the weighted scatter `Σ_τ q_τ (x_τ−μ)⊗(x_τ−μ)` about it;
//! * `coupled_compact` / `decoupled_compact` — exact lower-dimensional
//!   re-parameterizations of the two forms above built from the
//!   half-vectorization [`hvec`]. They preserve every pairwise inner
//!   product (see [`kernel_coupled`] / [`kernel_decoupled`] for the direct
//!   kernel evaluations they are checked against) at roughly half the width.
//!
//! With uniform weights `1/|N|` the learnable forms reduce exactly to the
//! plain averaged versions. Out-of-range taps at the sequence edges
//! contribute nothing to any of the bilinear sums; max pooling instead
//! treats padded positions as zero values.
//!
//! All operators are pure functions evaluated in fixed tap order, so results
//! are bit-deterministic for fixed inputs.

mod backward;
mod forward;
mod kernel;

pub use backward::{
    backward_coupled, backward_coupled_compact, backward_decoupled, backward_decoupled_compact,
    backward_first_order_only, backward_max_pool, backward_second_order_only, DecoupledGrads,
};
pub use forward::{
    bilinear_coupled, bilinear_coupled_compact, bilinear_decoupled, bilinear_decoupled_compact,
    first_order_only, global_bilinear, max_pool, second_order_only,
};
pub use kernel::{kernel_coupled, kernel_decoupled};

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which statistic a pooling layer extracts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    Max,
    Coupled,
    Decoupled,
    CoupledCompact,
    DecoupledCompact,
}

impl PoolKind {
    pub const ALL: [PoolKind; 5] = [
        PoolKind::Max,
        PoolKind::Coupled,
        PoolKind::Decoupled,
        PoolKind::CoupledCompact,
        PoolKind::DecoupledCompact,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PoolKind::Max => "max",
            PoolKind::Coupled => "coupled",
            PoolKind::Decoupled => "decoupled",
            PoolKind::CoupledCompact => "coupled_compact",
            PoolKind::DecoupledCompact => "decoupled_compact",
        }
    }
}

impl std::str::FromStr for PoolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(PoolKind::Max),
            "coupled" => Ok(PoolKind::Coupled),
            "decoupled" => Ok(PoolKind::Decoupled),
            "coupled_compact" => Ok(PoolKind::CoupledCompact),
            "decoupled_compact" => Ok(PoolKind::DecoupledCompact),
            other => Err(Error::Config(format!("unknown pooling kind '{other}'"))),
        }
    }
}

/// Pooling layer configuration: operator kind, window `|N|`, stride and
/// whether the tap weights are trained or fixed at `1/|N|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolingConfig {
    pub kind: PoolKind,
    pub window: usize,
    pub stride: usize,
    pub learnable: bool,
}

impl PoolingConfig {
    pub fn new(kind: PoolKind, window: usize, stride: usize, learnable: bool) -> Result<Self> {
        let cfg = PoolingConfig {
            kind,
            window,
            stride,
            learnable,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.window % 2 == 0 {
            return Err(Error::Config(format!(
                "pooling window must be odd and >= 1, got {}",
                self.window
            )));
        }
        if self.stride == 0 {
            return Err(Error::Config("pooling stride must be >= 1".into()));
        }
        Ok(())
    }

    /// Half-width of the window.
    pub(crate) fn radius(&self) -> usize {
        (self.window - 1) / 2
    }

    /// Number of pooled output frames for an input of length `t`.
    pub fn output_len(&self, t: usize) -> usize {
        t.div_ceil(self.stride)
    }
}

/// Tap weights of a bilinear pooler. The coupled forms use a single filter
/// `ω`; the decoupled forms use `p` for the mean and `q` for the scatter.
/// Weights are unconstrained in sign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PoolingWeights {
    Coupled { omega: Vec<f64> },
    Decoupled { p: Vec<f64>, q: Vec<f64> },
}

impl PoolingWeights {
    /// Uniform `1/|N|` weights, the initialization at which the learnable
    /// poolers coincide with the plain averaged forms.
    pub fn uniform(kind: PoolKind, window: usize) -> PoolingWeights {
        let w = vec![1.0 / window as f64; window];
        match kind {
            PoolKind::Max | PoolKind::Coupled | PoolKind::CoupledCompact => {
                PoolingWeights::Coupled { omega: w }
            }
            PoolKind::Decoupled | PoolKind::DecoupledCompact => PoolingWeights::Decoupled {
                p: w.clone(),
                q: w,
            },
        }
    }

    pub(crate) fn omega(&self, window: usize) -> Result<&[f64]> {
        match self {
            PoolingWeights::Coupled { omega } if omega.len() == window => Ok(omega),
            PoolingWeights::Coupled { omega } => Err(Error::Config(format!(
                "omega has {} taps but window is {window}",
                omega.len()
            ))),
            PoolingWeights::Decoupled { .. } => Err(Error::Config(
                "coupled pooler needs omega weights, got decoupled p/q".into(),
            )),
        }
    }

    pub(crate) fn pq(&self, window: usize) -> Result<(&[f64], &[f64])> {
        match self {
            PoolingWeights::Decoupled { p, q } if p.len() == window && q.len() == window => {
                Ok((p, q))
            }
            PoolingWeights::Decoupled { p, q } => Err(Error::Config(format!(
                "p/q have {}/{} taps but window is {window}",
                p.len(),
                q.len()
            ))),
            PoolingWeights::Coupled { .. } => Err(Error::Config(
                "decoupled pooler needs p/q weights, got coupled omega".into(),
            )),
        }
    }
}

/// Output channel count of each pooling kind for `d` input channels.
pub fn output_dim(kind: PoolKind, d: usize) -> usize {
    match kind {
        PoolKind::Max => d,
        PoolKind::Coupled => d * d,
        PoolKind::Decoupled => d * (d + 1),
        PoolKind::CoupledCompact => d * (d + 1) / 2,
        PoolKind::DecoupledCompact => d * (d + 3) / 2,
    }
}

/// The window of frame indices centered at `t`, one entry per tap;
/// `None` marks out-of-range positions.
pub fn neighborhood(t: usize, window: usize, len: usize) -> Vec<Option<usize>> {
    let radius = (window - 1) / 2;
    (0..window)
        .map(|k| {
            let idx = t as isize + k as isize - radius as isize;
            if idx >= 0 && (idx as usize) < len {
                Some(idx as usize)
            } else {
                None
            }
        })
        .collect()
}

/// Iterate the valid taps of the window centered at `t`: `(tap, frame)`.
#[inline]
pub(crate) fn valid_taps(
    t: usize,
    window: usize,
    len: usize,
) -> impl Iterator<Item = (usize, usize)> {
    let radius = (window - 1) / 2;
    (0..window).filter_map(move |k| {
        let idx = t as isize + k as isize - radius as isize;
        if idx >= 0 && (idx as usize) < len {
            Some((k, idx as usize))
        } else {
            None
        }
    })
}

/// Asymmetry tolerance accepted by [`hvec`].
pub const HVEC_SYMMETRY_TOL: f64 = 1e-9;

/// Half-vectorization of a symmetric matrix: all diagonal entries first,
/// then the upper-triangular off-diagonals row by row, scaled by `√2`.
///
/// The scaling makes the map an isometry: `⟨hvec(A), hvec(B)⟩` equals the
/// Frobenius inner product `⟨vec(A), vec(B)⟩` for symmetric `A`, `B`, which
/// is what lets the compact poolers stand in for the full bilinear forms.
pub fn hvec(m: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    let (rows, cols) = m.dim();
    if rows != cols {
        return Err(Error::Shape(format!("hvec needs a square matrix, got {rows}x{cols}")));
    }
    for i in 0..rows {
        for j in (i + 1)..cols {
            if (m[[i, j]] - m[[j, i]]).abs() > HVEC_SYMMETRY_TOL {
                return Err(Error::Numeric(format!(
                    "hvec input asymmetric at ({i},{j}): {} vs {}",
                    m[[i, j]],
                    m[[j, i]]
                )));
            }
        }
    }
    let mut out = Vec::with_capacity(rows * (rows + 1) / 2);
    for i in 0..rows {
        out.push(m[[i, i]]);
    }
    let sqrt2 = std::f64::consts::SQRT_2;
    for i in 0..rows {
        for j in (i + 1)..cols {
            out.push(sqrt2 * m[[i, j]]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn neighborhood_pads_left_edge() {
        assert_eq!(neighborhood(0, 3, 5), vec![None, Some(0), Some(1)]);
    }

    #[test]
    fn neighborhood_interior_is_fully_valid() {
        assert_eq!(
            neighborhood(2, 5, 5),
            vec![Some(0), Some(1), Some(2), Some(3), Some(4)]
        );
    }

    #[test]
    fn neighborhood_pads_right_edge() {
        assert_eq!(neighborhood(4, 3, 5), vec![Some(3), Some(4), None]);
    }

    #[test]
    fn output_dims_match_published_figures_at_d128() {
        assert_eq!(output_dim(PoolKind::Coupled, 128), 16384);
        assert_eq!(output_dim(PoolKind::Decoupled, 128), 16512);
        assert_eq!(output_dim(PoolKind::CoupledCompact, 128), 8256);
        assert_eq!(output_dim(PoolKind::DecoupledCompact, 128), 8384);
        assert_eq!(output_dim(PoolKind::Max, 128), 128);
    }

    #[test]
    fn hvec_two_by_two() {
        let m = array![[1.0, 2.0], [2.0, 3.0]];
        let h = hvec(m.view()).unwrap();
        assert_eq!(h.len(), 3);
        assert_eq!(h[0], 1.0);
        assert_eq!(h[1], 3.0);
        assert!((h[2] - 2.0 * std::f64::consts::SQRT_2).abs() < 1e-15);
        // Frobenius identity: 1 + 9 + 8 = 18 = 1 + 4 + 4 + 9.
        let self_ip: f64 = h.iter().map(|v| v * v).sum();
        assert!((self_ip - 18.0).abs() < 1e-12);
    }

    #[test]
    fn hvec_identity_and_zero() {
        let eye = array![[1.0, 0.0], [0.0, 1.0]];
        assert_eq!(hvec(eye.view()).unwrap(), vec![1.0, 1.0, 0.0]);
        let zero = ndarray::Array2::<f64>::zeros((3, 3));
        assert_eq!(hvec(zero.view()).unwrap(), vec![0.0; 6]);
    }

    #[test]
    fn hvec_rejects_asymmetry() {
        let m = array![[1.0, 2.0], [2.1, 3.0]];
        assert!(matches!(hvec(m.view()), Err(Error::Numeric(_))));
    }

    #[test]
    fn config_rejects_even_window_and_zero_stride() {
        assert!(PoolingConfig::new(PoolKind::Max, 4, 2, false).is_err());
        assert!(PoolingConfig::new(PoolKind::Max, 0, 2, false).is_err());
        assert!(PoolingConfig::new(PoolKind::Max, 3, 0, false).is_err());
    }

    #[test]
    fn uniform_weights_sum_to_one() {
        match PoolingWeights::uniform(PoolKind::Decoupled, 5) {
            PoolingWeights::Decoupled { p, q } => {
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert_eq!(p, q);
            }
            _ => panic!("wrong variant"),
        }
    }

    #[test]
    fn weight_length_mismatch_is_config_error() {
        let w = PoolingWeights::Coupled { omega: vec![1.0; 3] };
        assert!(w.omega(5).is_err());
        assert!(w.pq(3).is_err());
    }
}
