//! Direct kernel evaluations of the bilinear forms.
//!
//! The pooled descriptors realize polynomial kernels: the inner product of
//! two coupled outputs equals a double sum of squared frame inner products
//! over the two neighborhoods, and the decoupled analogue adds the mean
//! inner product to the squared inner products of centered frames. These
//! functions evaluate those sums without forming any outer product, which
//! makes them independent oracles for the pooled representations.

use ndarray::ArrayView1;

use super::{valid_taps, PoolingWeights};
use crate::error::{Error, Result};
use crate::seqdata::FeatureSequence;

fn check_center(t: usize, len: usize) -> Result<()> {
    if t >= len {
        return Err(Error::Shape(format!(
            "center {t} is out of range for a length-{len} sequence"
        )));
    }
    Ok(())
}

fn check_window(window: usize) -> Result<()> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::Config(format!(
            "kernel window must be odd and >= 1, got {window}"
        )));
    }
    Ok(())
}

#[inline]
fn dot(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// `Σ_{τ∈N(i)} Σ_{τ'∈N(j)} ω_τ ω_τ' ⟨x_τ, x_τ'⟩²` — the inner product the
/// coupled bilinear outputs at centers `i` and `j` must reproduce.
pub fn kernel_coupled(
    x: &FeatureSequence,
    w: &PoolingWeights,
    i: usize,
    j: usize,
) -> Result<f64> {
    let len = x.len();
    check_center(i, len)?;
    check_center(j, len)?;
    let omega = match w {
        PoolingWeights::Coupled { omega } => omega.as_slice(),
        PoolingWeights::Decoupled { .. } => {
            return Err(Error::Config(
                "kernel_coupled needs omega weights, got decoupled p/q".into(),
            ))
        }
    };
    let window = omega.len();
    check_window(window)?;
    let mut acc = 0.0;
    for (k, tau) in valid_taps(i, window, len) {
        let row_i = x.frame(tau);
        let wk = omega[k];
        for (k2, tau2) in valid_taps(j, window, len) {
            let ip = dot(row_i, x.frame(tau2));
            acc += wk * omega[k2] * ip * ip;
        }
    }
    Ok(acc)
}

/// `⟨μ_i, μ_j⟩ + Σ Σ q_τ q_τ' ⟨x_τ − μ_i, x_τ' − μ_j⟩²` — the decoupled
/// counterpart of [`kernel_coupled`].
pub fn kernel_decoupled(
    x: &FeatureSequence,
    w: &PoolingWeights,
    i: usize,
    j: usize,
) -> Result<f64> {
    let len = x.len();
    check_center(i, len)?;
    check_center(j, len)?;
    let (p, q) = match w {
        PoolingWeights::Decoupled { p, q } if p.len() == q.len() => (p.as_slice(), q.as_slice()),
        PoolingWeights::Decoupled { p, q } => {
            return Err(Error::Config(format!(
                "p and q must have equal length, got {} and {}",
                p.len(),
                q.len()
            )))
        }
        PoolingWeights::Coupled { .. } => {
            return Err(Error::Config(
                "kernel_decoupled needs p/q weights, got coupled omega".into(),
            ))
        }
    };
    let window = p.len();
    check_window(window)?;
    let d = x.dim();

    let weighted_mean = |center: usize| -> Vec<f64> {
        let mut mu = vec![0.0; d];
        for (k, tau) in valid_taps(center, window, len) {
            let row = x.frame(tau);
            for (m, &v) in mu.iter_mut().zip(row.iter()) {
                *m += p[k] * v;
            }
        }
        mu
    };
    let mu_i = weighted_mean(i);
    let mu_j = weighted_mean(j);

    let mut acc: f64 = mu_i.iter().zip(mu_j.iter()).map(|(a, b)| a * b).sum();
    for (k, tau) in valid_taps(i, window, len) {
        let row_i = x.frame(tau);
        for (k2, tau2) in valid_taps(j, window, len) {
            let row_j = x.frame(tau2);
            let mut ip = 0.0;
            for c in 0..d {
                ip += (row_i[c] - mu_i[c]) * (row_j[c] - mu_j[c]);
            }
            acc += q[k] * q[k2] * ip * ip;
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn fs(frames: ndarray::Array2<f64>) -> FeatureSequence {
        FeatureSequence::new(frames).unwrap()
    }

    #[test]
    fn coupled_self_kernel_single_frame() {
        let x = fs(array![[1.0, 2.0]]);
        let w = PoolingWeights::Coupled { omega: vec![1.0] };
        let k = kernel_coupled(&x, &w, 0, 0).unwrap();
        assert!((k - 25.0).abs() < 1e-12); // <x,x>² = 5²
    }

    #[test]
    fn coupled_orthogonal_windows_vanish() {
        let x = fs(array![[1.0, 0.0], [0.0, 1.0]]);
        let w = PoolingWeights::Coupled { omega: vec![1.0] };
        assert_eq!(kernel_coupled(&x, &w, 0, 1).unwrap(), 0.0);
    }

    #[test]
    fn coupled_kernel_is_degree_four_homogeneous() {
        let base = array![[0.3, -0.7, 1.1], [0.2, 0.5, -0.4], [1.0, 0.0, 0.25]];
        let x = fs(base.clone());
        let x2 = fs(base.mapv(|v| 2.0 * v));
        let w = PoolingWeights::Coupled {
            omega: vec![0.4, -0.2, 0.8],
        };
        let k = kernel_coupled(&x, &w, 1, 2).unwrap();
        let k2 = kernel_coupled(&x2, &w, 1, 2).unwrap();
        assert!((k2 - 16.0 * k).abs() <= 1e-12 * (1.0 + k2.abs()));
    }

    #[test]
    fn decoupled_constant_window_reduces_to_mean_product() {
        let x = fs(array![[2.0, -1.0], [2.0, -1.0], [2.0, -1.0]]);
        let w = PoolingWeights::uniform(super::super::PoolKind::Decoupled, 3);
        let k = kernel_decoupled(&x, &w, 1, 1).unwrap();
        assert!((k - 5.0).abs() < 1e-12); // ⟨c, c⟩, scatter term vanishes
    }

    #[test]
    fn decoupled_hand_example_evaluates_to_six() {
        // two valid taps (0,0) and (2,2) with p = q = (·, ½, ½):
        // μ = (1,1), ⟨μ,μ⟩ = 2, scatter term = 4
        let x = fs(array![[0.0, 0.0], [2.0, 2.0]]);
        let w = PoolingWeights::Decoupled {
            p: vec![0.0, 0.5, 0.5],
            q: vec![0.0, 0.5, 0.5],
        };
        let k = kernel_decoupled(&x, &w, 0, 0).unwrap();
        assert!((k - 6.0).abs() < 1e-12);
    }

    #[test]
    fn all_zero_sequence_has_zero_kernel() {
        let x = fs(ndarray::Array2::zeros((4, 3)));
        let w = PoolingWeights::Decoupled {
            p: vec![0.2; 3],
            q: vec![0.7; 3],
        };
        assert_eq!(kernel_decoupled(&x, &w, 1, 3).unwrap(), 0.0);
    }

    #[test]
    fn out_of_range_center_is_rejected() {
        let x = fs(array![[1.0]]);
        let w = PoolingWeights::Coupled { omega: vec![1.0] };
        assert!(kernel_coupled(&x, &w, 0, 1).is_err());
    }
}
