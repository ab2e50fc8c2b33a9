//! Forward evaluation of the pooling operators.
//!
//! Every operator walks the window taps in fixed temporal order, so the
//! accumulated sums are bit-deterministic. The compact variants accumulate
//! the full symmetric matrix and then apply the half-vectorization, which
//! makes them agree with `hvec` applied to the wide output down to the last
//! bit.

use ndarray::{Array1, Array2, ArrayView2};

use super::{output_dim, valid_taps, PoolKind, PoolingConfig, PoolingWeights};
use crate::error::{Error, Result};
use crate::seqdata::FeatureSequence;

fn ensure_kind(cfg: &PoolingConfig, allowed: &[PoolKind], op: &str) -> Result<()> {
    cfg.validate()?;
    if allowed.contains(&cfg.kind) {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{op} cannot run with pooling kind '{}'",
            cfg.kind.as_str()
        )))
    }
}

/// Resolve the effective tap weights: fixed `1/|N|` averaging when the
/// layer is non-learnable, the supplied filter otherwise.
fn effective_omega<'w>(
    cfg: &PoolingConfig,
    w: &'w PoolingWeights,
    uniform: &'w [f64],
) -> Result<&'w [f64]> {
    if cfg.learnable {
        w.omega(cfg.window)
    } else {
        Ok(uniform)
    }
}

fn effective_pq<'w>(
    cfg: &PoolingConfig,
    w: &'w PoolingWeights,
    uniform: &'w [f64],
) -> Result<(&'w [f64], &'w [f64])> {
    if cfg.learnable {
        w.pq(cfg.window)
    } else {
        Ok((uniform, uniform))
    }
}

fn uniform_taps(window: usize) -> Vec<f64> {
    vec![1.0 / window as f64; window]
}

/// Channel-wise windowed maximum. Padded positions compete as zeros, so a
/// window of all-negative values at a sequence edge pools to zero.
pub fn max_pool(x: &FeatureSequence, cfg: &PoolingConfig) -> Result<FeatureSequence> {
    ensure_kind(cfg, &[PoolKind::Max], "max_pool")?;
    Ok(FeatureSequence::from_raw(max_pool_raw(
        x.frames().view(),
        cfg.window,
        cfg.stride,
    )))
}

pub(crate) fn max_pool_raw(x: ArrayView2<'_, f64>, window: usize, stride: usize) -> Array2<f64> {
    let (t_in, d) = x.dim();
    let t_out = t_in.div_ceil(stride);
    let radius = (window - 1) / 2;
    let mut out = Array2::from_elem((t_out, d), f64::NEG_INFINITY);
    for s in 0..t_out {
        let center = s * stride;
        let mut row = out.row_mut(s);
        for k in 0..window {
            let idx = center as isize + k as isize - radius as isize;
            if idx >= 0 && (idx as usize) < t_in {
                let src = x.row(idx as usize);
                for (o, &v) in row.iter_mut().zip(src.iter()) {
                    if v > *o {
                        *o = v;
                    }
                }
            } else {
                for o in row.iter_mut() {
                    if 0.0 > *o {
                        *o = 0.0;
                    }
                }
            }
        }
    }
    out
}

/// The conventional global bilinear descriptor: `vec` of the mean outer
/// product over a set of feature vectors (one per row).
pub fn global_bilinear(vectors: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    let (n, d) = vectors.dim();
    if n == 0 {
        return Err(Error::Data("global_bilinear needs at least one vector".into()));
    }
    let mut m = vec![0.0; d * d];
    for row in vectors.rows() {
        for a in 0..d {
            let xa = row[a];
            for b in 0..d {
                m[a * d + b] += xa * row[b];
            }
        }
    }
    let scale = 1.0 / n as f64;
    m.iter_mut().for_each(|v| *v *= scale);
    Ok(Array1::from_vec(m))
}

/// Coupled bilinear pooling: output frame `s` is
/// `vec( Σ_{τ∈N(s·stride)} ω_τ x_τ ⊗ x_τ )`, row-major, `d²` channels.
pub fn bilinear_coupled(
    x: &FeatureSequence,
    cfg: &PoolingConfig,
    w: &PoolingWeights,
) -> Result<FeatureSequence> {
    ensure_kind(cfg, &[PoolKind::Coupled], "bilinear_coupled")?;
    let uniform = uniform_taps(cfg.window);
    let omega = effective_omega(cfg, w, &uniform)?;
    Ok(FeatureSequence::from_raw(coupled_raw(
        x.frames().view(),
        cfg.window,
        cfg.stride,
        omega,
        false,
    )))
}

/// Coupled bilinear pooling through the exact compact map: `d(d+1)/2`
/// channels with identical pairwise inner products.
pub fn bilinear_coupled_compact(
    x: &FeatureSequence,
    cfg: &PoolingConfig,
    w: &PoolingWeights,
) -> Result<FeatureSequence> {
    ensure_kind(cfg, &[PoolKind::CoupledCompact], "bilinear_coupled_compact")?;
    let uniform = uniform_taps(cfg.window);
    let omega = effective_omega(cfg, w, &uniform)?;
    Ok(FeatureSequence::from_raw(coupled_raw(
        x.frames().view(),
        cfg.window,
        cfg.stride,
        omega,
        true,
    )))
}

pub(crate) fn coupled_raw(
    x: ArrayView2<'_, f64>,
    window: usize,
    stride: usize,
    omega: &[f64],
    compact: bool,
) -> Array2<f64> {
    let (t_in, d) = x.dim();
    let t_out = t_in.div_ceil(stride);
    let channels = if compact { d * (d + 1) / 2 } else { d * d };
    let mut out = Array2::zeros((t_out, channels));
    let mut m = vec![0.0; d * d];
    for s in 0..t_out {
        m.fill(0.0);
        for (k, idx) in valid_taps(s * stride, window, t_in) {
            accumulate_outer(&mut m, x.row(idx), omega[k]);
        }
        write_matrix(out.row_mut(s).into_slice().expect("contiguous"), &m, d, compact);
    }
    out
}

/// `m += weight * row ⊗ row`, row-major.
#[inline]
pub(crate) fn accumulate_outer(m: &mut [f64], row: ndarray::ArrayView1<'_, f64>, weight: f64) {
    let d = row.len();
    for (a, &xa) in row.iter().enumerate() {
        let wa = weight * xa;
        let dst = &mut m[a * d..(a + 1) * d];
        for (o, &xb) in dst.iter_mut().zip(row.iter()) {
            *o += wa * xb;
        }
    }
}

/// Emit either the full row-major matrix or its half-vectorization
/// (diagonal first, then `√2`-scaled upper off-diagonals).
fn write_matrix(dst: &mut [f64], m: &[f64], d: usize, compact: bool) {
    if !compact {
        dst.copy_from_slice(m);
        return;
    }
    let sqrt2 = std::f64::consts::SQRT_2;
    for i in 0..d {
        dst[i] = m[i * d + i];
    }
    let mut at = d;
    for i in 0..d {
        for j in (i + 1)..d {
            dst[at] = sqrt2 * m[i * d + j];
            at += 1;
        }
    }
}

/// Which pieces of the decoupled form to emit.
#[derive(Clone, Copy, PartialEq, Eq)]
pub(crate) enum DecoupledPart {
    Both,
    MeanOnly,
    ScatterOnly,
}

/// Decoupled bilinear pooling: the weighted local mean `μ` concatenated
/// with `vec` of the weighted scatter about it, `d(d+1)` channels.
pub fn bilinear_decoupled(
    x: &FeatureSequence,
    cfg: &PoolingConfig,
    w: &PoolingWeights,
) -> Result<FeatureSequence> {
    ensure_kind(cfg, &[PoolKind::Decoupled], "bilinear_decoupled")?;
    decoupled_checked(x, cfg, w, DecoupledPart::Both, false)
}

/// Decoupled bilinear pooling through the compact map: `(μ, hvec(Σ))`,
/// `d(d+3)/2` channels.
pub fn bilinear_decoupled_compact(
    x: &FeatureSequence,
    cfg: &PoolingConfig,
    w: &PoolingWeights,
) -> Result<FeatureSequence> {
    ensure_kind(
        cfg,
        &[PoolKind::DecoupledCompact],
        "bilinear_decoupled_compact",
    )?;
    decoupled_checked(x, cfg, w, DecoupledPart::Both, true)
}

/// Only the first-order component `μ` of the decoupled form (`d` channels).
pub fn first_order_only(
    x: &FeatureSequence,
    cfg: &PoolingConfig,
    w: &PoolingWeights,
) -> Result<FeatureSequence> {
    ensure_kind(
        cfg,
        &[PoolKind::Decoupled, PoolKind::DecoupledCompact],
        "first_order_only",
    )?;
    decoupled_checked(x, cfg, w, DecoupledPart::MeanOnly, false)
}

/// Only the second-order component `vec(Σ)` of the decoupled form
/// (`d²` channels). The scatter is still taken about the `p`-weighted mean.
pub fn second_order_only(
    x: &FeatureSequence,
    cfg: &PoolingConfig,
    w: &PoolingWeights,
) -> Result<FeatureSequence> {
    ensure_kind(
        cfg,
        &[PoolKind::Decoupled, PoolKind::DecoupledCompact],
        "second_order_only",
    )?;
    decoupled_checked(x, cfg, w, DecoupledPart::ScatterOnly, false)
}

fn decoupled_checked(
    x: &FeatureSequence,
    cfg: &PoolingConfig,
    w: &PoolingWeights,
    part: DecoupledPart,
    compact: bool,
) -> Result<FeatureSequence> {
    let uniform = uniform_taps(cfg.window);
    let (p, q) = effective_pq(cfg, w, &uniform)?;
    Ok(FeatureSequence::from_raw(decoupled_raw(
        x.frames().view(),
        cfg.window,
        cfg.stride,
        p,
        q,
        part,
        compact,
    )))
}

pub(crate) fn decoupled_raw(
    x: ArrayView2<'_, f64>,
    window: usize,
    stride: usize,
    p: &[f64],
    q: &[f64],
    part: DecoupledPart,
    compact: bool,
) -> Array2<f64> {
    let (t_in, d) = x.dim();
    let t_out = t_in.div_ceil(stride);
    let channels = match (part, compact) {
        (DecoupledPart::MeanOnly, _) => d,
        (DecoupledPart::ScatterOnly, false) => d * d,
        (DecoupledPart::ScatterOnly, true) => d * (d + 1) / 2,
        (DecoupledPart::Both, false) => d * (d + 1),
        (DecoupledPart::Both, true) => d * (d + 3) / 2,
    };
    let mut out = Array2::zeros((t_out, channels));
    let mut mu = vec![0.0; d];
    let mut sig = vec![0.0; d * d];
    let mut centered = vec![0.0; d];
    for s in 0..t_out {
        let center = s * stride;
        mu.fill(0.0);
        for (k, idx) in valid_taps(center, window, t_in) {
            let row = x.row(idx);
            let pk = p[k];
            for (m, &v) in mu.iter_mut().zip(row.iter()) {
                *m += pk * v;
            }
        }
        let dst = out.row_mut(s).into_slice().expect("contiguous");
        if part != DecoupledPart::ScatterOnly {
            dst[..d].copy_from_slice(&mu);
            if part == DecoupledPart::MeanOnly {
                continue;
            }
        }
        sig.fill(0.0);
        for (k, idx) in valid_taps(center, window, t_in) {
            let row = x.row(idx);
            for (c, (&v, &m)) in row.iter().zip(mu.iter()).enumerate() {
                centered[c] = v - m;
            }
            let qk = q[k];
            for a in 0..d {
                let wa = qk * centered[a];
                let dst_row = &mut sig[a * d..(a + 1) * d];
                for (b, out) in dst_row.iter_mut().enumerate() {
                    *out += wa * centered[b];
                }
            }
        }
        let sig_dst = if part == DecoupledPart::Both {
            &mut dst[d..]
        } else {
            dst
        };
        write_matrix(sig_dst, &sig, d, compact);
    }
    out
}

/// Dispatch a pooling forward pass by config kind. Used by the network
/// layers; the standalone operators above are the spec-facing surface.
pub(crate) fn pool_forward(
    x: ArrayView2<'_, f64>,
    cfg: &PoolingConfig,
    w: Option<&PoolingWeights>,
) -> Result<Array2<f64>> {
    cfg.validate()?;
    let uniform = uniform_taps(cfg.window);
    match cfg.kind {
        PoolKind::Max => Ok(max_pool_raw(x, cfg.window, cfg.stride)),
        PoolKind::Coupled | PoolKind::CoupledCompact => {
            let omega = match (cfg.learnable, w) {
                (true, Some(w)) => w.omega(cfg.window)?,
                (true, None) => {
                    return Err(Error::Config("learnable pooling layer without weights".into()))
                }
                (false, _) => &uniform,
            };
            Ok(coupled_raw(
                x,
                cfg.window,
                cfg.stride,
                omega,
                cfg.kind == PoolKind::CoupledCompact,
            ))
        }
        PoolKind::Decoupled | PoolKind::DecoupledCompact => {
            let (p, q) = match (cfg.learnable, w) {
                (true, Some(w)) => w.pq(cfg.window)?,
                (true, None) => {
                    return Err(Error::Config("learnable pooling layer without weights".into()))
                }
                (false, _) => (uniform.as_slice(), uniform.as_slice()),
            };
            Ok(decoupled_raw(
                x,
                cfg.window,
                cfg.stride,
                p,
                q,
                DecoupledPart::Both,
                cfg.kind == PoolKind::DecoupledCompact,
            ))
        }
    }
}
