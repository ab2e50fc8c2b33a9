//! Reverse-mode gradients of the pooling operators.
//!
//! Each `backward_*` takes the forward inputs plus the gradient of the loss
//! with respect to the pooled output and returns gradients with respect to
//! every input frame and every tap weight. The decoupled gradients include
//! the path through `μ` inside the centered terms `(x_τ − μ)`.

use ndarray::{Array2, ArrayView1, ArrayView2};

use super::forward::DecoupledPart;
use super::{output_dim, valid_taps, PoolKind, PoolingConfig, PoolingWeights};
use crate::error::{Error, Result};
use crate::seqdata::FeatureSequence;

/// Gradients of a decoupled pooler: input frames plus the `p` and `q` taps.
#[derive(Debug, Clone)]
pub struct DecoupledGrads {
    pub input: Array2<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

fn check_grad_shape(
    grad_out: ArrayView2<'_, f64>,
    t_in: usize,
    stride: usize,
    channels: usize,
) -> Result<()> {
    let expect = (t_in.div_ceil(stride), channels);
    if grad_out.dim() != expect {
        return Err(Error::Shape(format!(
            "grad_out is {:?}, expected {:?}",
            grad_out.dim(),
            expect
        )));
    }
    Ok(())
}

/// Max pooling routes each output gradient to the argmax tap; ties break
/// toward the earliest tap, and a padded zero that wins keeps the gradient
/// (nothing flows to the input).
pub fn backward_max_pool(
    x: &FeatureSequence,
    cfg: &PoolingConfig,
    grad_out: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    cfg.validate()?;
    let (t_in, d) = x.frames().dim();
    check_grad_shape(grad_out, t_in, cfg.stride, d)?;
    Ok(max_backward_raw(
        x.frames().view(),
        cfg.window,
        cfg.stride,
        grad_out,
    ))
}

pub(crate) fn max_backward_raw(
    x: ArrayView2<'_, f64>,
    window: usize,
    stride: usize,
    grad_out: ArrayView2<'_, f64>,
) -> Array2<f64> {
    let (t_in, d) = x.dim();
    let t_out = t_in.div_ceil(stride);
    let radius = (window - 1) / 2;
    let mut gx = Array2::zeros((t_in, d));
    for s in 0..t_out {
        let center = s * stride;
        for ch in 0..d {
            let mut best = f64::NEG_INFINITY;
            let mut src: Option<usize> = None;
            for k in 0..window {
                let idx = center as isize + k as isize - radius as isize;
                let (v, at) = if idx >= 0 && (idx as usize) < t_in {
                    (x[[idx as usize, ch]], Some(idx as usize))
                } else {
                    (0.0, None)
                };
                if v > best {
                    best = v;
                    src = at;
                }
            }
            if let Some(idx) = src {
                gx[[idx, ch]] += grad_out[[s, ch]];
            }
        }
    }
    gx
}

/// Gradients of [`super::bilinear_coupled`] with respect to the input
/// frames and the `ω` taps.
pub fn backward_coupled(
    x: &FeatureSequence,
    cfg: &PoolingConfig,
    w: &PoolingWeights,
    grad_out: ArrayView2<'_, f64>,
) -> Result<(Array2<f64>, Vec<f64>)> {
    backward_coupled_any(x, cfg, w, grad_out, PoolKind::Coupled)
}

/// Gradients of [`super::bilinear_coupled_compact`].
pub fn backward_coupled_compact(
    x: &FeatureSequence,
    cfg: &PoolingConfig,
    w: &PoolingWeights,
    grad_out: ArrayView2<'_, f64>,
) -> Result<(Array2<f64>, Vec<f64>)> {
    backward_coupled_any(x, cfg, w, grad_out, PoolKind::CoupledCompact)
}

fn backward_coupled_any(
    x: &FeatureSequence,
    cfg: &PoolingConfig,
    w: &PoolingWeights,
    grad_out: ArrayView2<'_, f64>,
    kind: PoolKind,
) -> Result<(Array2<f64>, Vec<f64>)> {
    cfg.validate()?;
    if cfg.kind != kind {
        return Err(Error::Config(format!(
            "backward for '{}' called with config kind '{}'",
            kind.as_str(),
            cfg.kind.as_str()
        )));
    }
    let (t_in, d) = x.frames().dim();
    check_grad_shape(grad_out, t_in, cfg.stride, output_dim(kind, d))?;
    let uniform = vec![1.0 / cfg.window as f64; cfg.window];
    let omega = if cfg.learnable {
        w.omega(cfg.window)?
    } else {
        &uniform
    };
    Ok(coupled_backward_raw(
        x.frames().view(),
        cfg.window,
        cfg.stride,
        omega,
        grad_out,
        kind == PoolKind::CoupledCompact,
    ))
}

/// Expand the per-frame output gradient into a full `d×d` matrix gradient.
/// For the compact layout the off-diagonal gradient is split evenly across
/// the two symmetric slots, absorbing the `√2` scaling.
fn expand_matrix_grad(g: &mut [f64], row: ArrayView1<'_, f64>, d: usize, compact: bool) {
    if !compact {
        for (o, &v) in g.iter_mut().zip(row.iter()) {
            *o = v;
        }
        return;
    }
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..d {
        g[i * d + i] = row[i];
    }
    let mut at = d;
    for i in 0..d {
        for j in (i + 1)..d {
            let half = inv_sqrt2 * row[at];
            g[i * d + j] = half;
            g[j * d + i] = half;
            at += 1;
        }
    }
}

pub(crate) fn coupled_backward_raw(
    x: ArrayView2<'_, f64>,
    window: usize,
    stride: usize,
    omega: &[f64],
    grad_out: ArrayView2<'_, f64>,
    compact: bool,
) -> (Array2<f64>, Vec<f64>) {
    let (t_in, d) = x.dim();
    let t_out = t_in.div_ceil(stride);
    let mut gx = Array2::zeros((t_in, d));
    let mut gw = vec![0.0; window];
    let mut g = vec![0.0; d * d];
    for s in 0..t_out {
        expand_matrix_grad(&mut g, grad_out.row(s), d, compact);
        for (k, idx) in valid_taps(s * stride, window, t_in) {
            let row = x.row(idx);
            let mut gxrow = gx.row_mut(idx);
            let mut quad = 0.0;
            for a in 0..d {
                let xa = row[a];
                let mut sym = 0.0;
                let mut gq = 0.0;
                for b in 0..d {
                    let xb = row[b];
                    sym += (g[a * d + b] + g[b * d + a]) * xb;
                    gq += g[a * d + b] * xb;
                }
                gxrow[a] += omega[k] * sym;
                quad += xa * gq;
            }
            gw[k] += quad;
        }
    }
    (gx, gw)
}

/// Gradients of [`super::bilinear_decoupled`].
pub fn backward_decoupled(
    x: &FeatureSequence,
    cfg: &PoolingConfig,
    w: &PoolingWeights,
    grad_out: ArrayView2<'_, f64>,
) -> Result<DecoupledGrads> {
    backward_decoupled_any(x, cfg, w, grad_out, DecoupledPart::Both, false, PoolKind::Decoupled)
}

/// Gradients of [`super::bilinear_decoupled_compact`].
pub fn backward_decoupled_compact(
    x: &FeatureSequence,
    cfg: &PoolingConfig,
    w: &PoolingWeights,
    grad_out: ArrayView2<'_, f64>,
) -> Result<DecoupledGrads> {
    backward_decoupled_any(
        x,
        cfg,
        w,
        grad_out,
        DecoupledPart::Both,
        true,
        PoolKind::DecoupledCompact,
    )
}

/// Gradients of [`super::first_order_only`]; `q` gradients are zero.
pub fn backward_first_order_only(
    x: &FeatureSequence,
    cfg: &PoolingConfig,
    w: &PoolingWeights,
    grad_out: ArrayView2<'_, f64>,
) -> Result<DecoupledGrads> {
    backward_decoupled_any(x, cfg, w, grad_out, DecoupledPart::MeanOnly, false, cfg.kind)
}

/// Gradients of [`super::second_order_only`]; `p` still receives gradient
/// through the mean inside the centered terms.
pub fn backward_second_order_only(
    x: &FeatureSequence,
    cfg: &PoolingConfig,
    w: &PoolingWeights,
    grad_out: ArrayView2<'_, f64>,
) -> Result<DecoupledGrads> {
    backward_decoupled_any(x, cfg, w, grad_out, DecoupledPart::ScatterOnly, false, cfg.kind)
}

#[allow(clippy::too_many_arguments)]
fn backward_decoupled_any(
    x: &FeatureSequence,
    cfg: &PoolingConfig,
    w: &PoolingWeights,
    grad_out: ArrayView2<'_, f64>,
    part: DecoupledPart,
    compact: bool,
    kind: PoolKind,
) -> Result<DecoupledGrads> {
    cfg.validate()?;
    if cfg.kind != kind
        || !matches!(cfg.kind, PoolKind::Decoupled | PoolKind::DecoupledCompact)
    {
        return Err(Error::Config(format!(
            "decoupled backward called with config kind '{}'",
            cfg.kind.as_str()
        )));
    }
    let (t_in, d) = x.frames().dim();
    let channels = match (part, compact) {
        (DecoupledPart::MeanOnly, _) => d,
        (DecoupledPart::ScatterOnly, _) => d * d,
        (DecoupledPart::Both, false) => d * (d + 1),
        (DecoupledPart::Both, true) => d * (d + 3) / 2,
    };
    check_grad_shape(grad_out, t_in, cfg.stride, channels)?;
    let uniform = vec![1.0 / cfg.window as f64; cfg.window];
    let (p, q) = if cfg.learnable {
        w.pq(cfg.window)?
    } else {
        (uniform.as_slice(), uniform.as_slice())
    };
    Ok(decoupled_backward_raw(
        x.frames().view(),
        cfg.window,
        cfg.stride,
        p,
        q,
        grad_out,
        part,
        compact,
    ))
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn decoupled_backward_raw(
    x: ArrayView2<'_, f64>,
    window: usize,
    stride: usize,
    p: &[f64],
    q: &[f64],
    grad_out: ArrayView2<'_, f64>,
    part: DecoupledPart,
    compact: bool,
) -> DecoupledGrads {
    let (t_in, d) = x.dim();
    let t_out = t_in.div_ceil(stride);
    let mut gx = Array2::zeros((t_in, d));
    let mut gp = vec![0.0; window];
    let mut gq = vec![0.0; window];

    let mut gmu = vec![0.0; d];
    let mut g = vec![0.0; d * d]; // scatter gradient, symmetric-expanded
    let mut mu = vec![0.0; d];
    let mut cq = vec![0.0; d]; // Σ_k q_k (x_k − μ)
    let mut a_vec = vec![0.0; d]; // (G + Gᵀ) · cq
    let mut c = vec![0.0; d];
    let mut sc = vec![0.0; d]; // (G + Gᵀ) · c

    for s in 0..t_out {
        let center = s * stride;
        let row_g = grad_out.row(s);
        match part {
            DecoupledPart::MeanOnly => {
                for (o, &v) in gmu.iter_mut().zip(row_g.iter()) {
                    *o = v;
                }
                g.fill(0.0);
            }
            DecoupledPart::ScatterOnly => {
                gmu.fill(0.0);
                expand_matrix_grad(&mut g, row_g, d, compact);
            }
            DecoupledPart::Both => {
                for (o, &v) in gmu.iter_mut().zip(row_g.iter().take(d)) {
                    *o = v;
                }
                expand_matrix_grad(&mut g, row_g.slice(ndarray::s![d..]), d, compact);
            }
        }

        // replay μ, then accumulate Σ q_k (x_k − μ)
        mu.fill(0.0);
        for (k, idx) in valid_taps(center, window, t_in) {
            let row = x.row(idx);
            let pk = p[k];
            for (m, &v) in mu.iter_mut().zip(row.iter()) {
                *m += pk * v;
            }
        }
        let scatter_active = part != DecoupledPart::MeanOnly;
        if scatter_active {
            cq.fill(0.0);
            for (k, idx) in valid_taps(center, window, t_in) {
                let row = x.row(idx);
                let qk = q[k];
                for (o, (&v, &m)) in cq.iter_mut().zip(row.iter().zip(mu.iter())) {
                    *o += qk * (v - m);
                }
            }
            for a in 0..d {
                let mut acc = 0.0;
                for b in 0..d {
                    acc += (g[a * d + b] + g[b * d + a]) * cq[b];
                }
                a_vec[a] = acc;
            }
        } else {
            a_vec.fill(0.0);
        }

        for (k, idx) in valid_taps(center, window, t_in) {
            let row = x.row(idx);
            let (pk, qk) = (p[k], q[k]);
            let mut gxrow = gx.row_mut(idx);
            if scatter_active {
                for (o, (&v, &m)) in c.iter_mut().zip(row.iter().zip(mu.iter())) {
                    *o = v - m;
                }
                let mut quad = 0.0;
                for a in 0..d {
                    let mut sym = 0.0;
                    let mut gq_acc = 0.0;
                    for b in 0..d {
                        sym += (g[a * d + b] + g[b * d + a]) * c[b];
                        gq_acc += g[a * d + b] * c[b];
                    }
                    sc[a] = sym;
                    quad += c[a] * gq_acc;
                }
                gq[k] += quad;
                let mut gp_dot = 0.0;
                for a in 0..d {
                    gxrow[a] += qk * sc[a] - pk * a_vec[a] + pk * gmu[a];
                    gp_dot += row[a] * (gmu[a] - a_vec[a]);
                }
                gp[k] += gp_dot;
            } else {
                let mut gp_dot = 0.0;
                for a in 0..d {
                    gxrow[a] += pk * gmu[a];
                    gp_dot += row[a] * gmu[a];
                }
                gp[k] += gp_dot;
            }
        }
    }

    DecoupledGrads {
        input: gx,
        p: gp,
        q: gq,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn fs(frames: Array2<f64>) -> FeatureSequence {
        FeatureSequence::new(frames).unwrap()
    }

    #[test]
    fn zero_grad_out_gives_zero_grads() {
        let x = fs(array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        let cfg = PoolingConfig::new(PoolKind::Coupled, 3, 2, true).unwrap();
        let w = PoolingWeights::Coupled { omega: vec![0.3, 0.5, 0.2] };
        let zeros = Array2::zeros((2, 4));
        let (gx, gw) = backward_coupled(&x, &cfg, &w, zeros.view()).unwrap();
        assert!(gx.iter().all(|&v| v == 0.0));
        assert!(gw.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn max_routes_to_argmax_earliest_on_tie() {
        // both frames hold the same maximum; the earlier one gets the gradient
        let x = fs(array![[2.0], [2.0], [1.0]]);
        let cfg = PoolingConfig::new(PoolKind::Max, 3, 1, false).unwrap();
        let go = array![[1.0], [1.0], [1.0]];
        let gx = backward_max_pool(&x, &cfg, go.view()).unwrap();
        // center 0: taps {pad,0,1} -> frame 0 wins; center 1: taps {0,1,2} -> frame 0;
        // center 2: taps {1,2,pad} -> frame 1
        assert_eq!(gx, array![[2.0], [1.0], [0.0]]);
    }

    #[test]
    fn max_padding_win_swallows_gradient() {
        let x = fs(array![[-1.0], [-2.0]]);
        let cfg = PoolingConfig::new(PoolKind::Max, 3, 2, false).unwrap();
        let go = array![[5.0]];
        let gx = backward_max_pool(&x, &cfg, go.view()).unwrap();
        assert!(gx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn coupled_window_one_hand_gradient() {
        // y = (x1², x1x2, x2x1, x2²); seed grad on y[0] only
        let x = fs(array![[3.0, 5.0]]);
        let cfg = PoolingConfig::new(PoolKind::Coupled, 1, 1, true).unwrap();
        let w = PoolingWeights::Coupled { omega: vec![1.0] };
        let go = array![[1.0, 0.0, 0.0, 0.0]];
        let (gx, gw) = backward_coupled(&x, &cfg, &w, go.view()).unwrap();
        assert_eq!(gx, array![[6.0, 0.0]]);
        assert_eq!(gw, vec![9.0]); // xᵀ G x = x1²
    }

    #[test]
    fn shape_mismatch_is_shape_error() {
        let x = fs(array![[1.0, 2.0]]);
        let cfg = PoolingConfig::new(PoolKind::Coupled, 1, 1, true).unwrap();
        let w = PoolingWeights::Coupled { omega: vec![1.0] };
        let bad = Array2::zeros((1, 3));
        assert!(matches!(
            backward_coupled(&x, &cfg, &w, bad.view()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn first_order_backward_has_zero_q_grads() {
        let x = fs(array![[1.0, 2.0], [3.0, 4.0]]);
        let cfg = PoolingConfig::new(PoolKind::Decoupled, 3, 2, true).unwrap();
        let w = PoolingWeights::Decoupled {
            p: vec![0.2, 0.3, 0.5],
            q: vec![0.1, 0.1, 0.8],
        };
        let go = array![[1.0, -1.0]];
        let g = backward_first_order_only(&x, &cfg, &w, go.view()).unwrap();
        assert!(g.q.iter().all(|&v| v == 0.0));
        assert!(g.p.iter().any(|&v| v != 0.0));
    }
}
