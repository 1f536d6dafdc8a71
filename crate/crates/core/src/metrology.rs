//! Quantum Fisher information and the gain figures built on it.

use serde::{Deserialize, Serialize};

use crate::dynamics::StateWithDerivative;
use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Real;

/// Pairs of eigenvalues whose sum is at or below this cutoff are dropped from the QFI sum.
pub const EIGEN_PAIR_CUTOFF: f64 = 1e-10;

/// Fraction of a QFI curve averaged to estimate its late-time plateau.
pub const PLATEAU_WINDOW: f64 = 0.2;

/// QFI of `ρ_ω` with respect to `ω`, with the default eigenvalue cutoff.
pub fn qfi<T: Real>(state: &StateWithDerivative<T>) -> T {
    qfi_with_cutoff(state, T::lit(EIGEN_PAIR_CUTOFF))
}

/// `I = 2 Σ_{l,m} |⟨ψ_l|∂ρ|ψ_m⟩|² / (p_l + p_m)` over pairs with `p_l + p_m > cutoff`.
///
/// Slightly negative eigenvalues left by numerical propagation are clamped to
/// zero and the spectrum is renormalized to unit trace first.
pub fn qfi_with_cutoff<T: Real>(state: &StateWithDerivative<T>, cutoff: T) -> T {
    if state.drho().iter().all(|x| x.re == T::zero() && x.im == T::zero()) {
        return T::zero();
    }
    let rho = linalg::hermitian_part(state.rho());
    let (mut p, v) = linalg::eigensystem_unchecked(&rho);
    p.iter_mut().for_each(|x| *x = x.max(T::zero()));
    let total = p.sum();
    if total > T::zero() {
        p /= total;
    }
    let d = v.adjoint() * state.drho() * &v;
    let n = p.len();
    let mut acc = T::zero();
    for l in 0..n {
        for m in 0..n {
            let s = p[l] + p[m];
            if s > cutoff {
                acc += d[(l, m)].norm_sqr() / s;
            }
        }
    }
    acc * T::lit(2.0)
}

/// QFI evaluated at a given time together with the derived precision figures.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QfiReport {
    pub qfi: f64,
    pub time: f64,
    /// `qfi / time`; absent at time zero.
    pub rescaled: Option<f64>,
    /// Cramér–Rao bound `1 / qfi` on the variance of a single-shot estimate.
    pub crlb_single_shot: Option<f64>,
}

impl QfiReport {
    pub fn new(qfi: f64, time: f64) -> Self {
        QfiReport {
            qfi,
            time,
            rescaled: (time > 0.0).then(|| qfi / time),
            crlb_single_shot: (qfi > 0.0).then(|| 1.0 / qfi),
        }
    }

    /// Variance bound `1 / (M I)` for `M` repetitions.
    pub fn crlb(&self, repetitions: u64) -> Option<f64> {
        (self.qfi > 0.0 && repetitions > 0).then(|| 1.0 / (repetitions as f64 * self.qfi))
    }
}

/// One sample of a QFI time series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QfiPoint {
    pub time: f64,
    pub qfi: f64,
}

/// Largest QFI value of a curve.
pub fn curve_max(curve: &[QfiPoint]) -> Result<f64> {
    curve
        .iter()
        .map(|p| p.qfi)
        .fold(None, |acc: Option<f64>, q| Some(acc.map_or(q, |a| a.max(q))))
        .ok_or(Error::EmptyCurve)
}

/// Largest `qfi / time` over the points with positive time.
pub fn max_rescaled(curve: &[QfiPoint]) -> Option<f64> {
    curve
        .iter()
        .filter(|p| p.time > 0.0)
        .map(|p| p.qfi / p.time)
        .fold(None, |acc: Option<f64>, q| Some(acc.map_or(q, |a| a.max(q))))
}

/// Mean of the final [`PLATEAU_WINDOW`] share of the curve.
pub fn plateau(curve: &[QfiPoint]) -> Result<f64> {
    if curve.len() < 5 {
        return Err(Error::InvalidParameter(format!(
            "curve of {} points is too short for a plateau window",
            curve.len()
        )));
    }
    let window = ((curve.len() as f64 * PLATEAU_WINDOW - 1e-9).ceil() as usize).max(1);
    let tail = &curve[curve.len() - window..];
    Ok(tail.iter().map(|p| p.qfi).sum::<f64>() / window as f64)
}

/// `Γ_unkicked`: optimized QFI at the horizon over the maximum QFI of the unkicked top.
pub fn gain_unkicked(rl_qfi_at_horizon: f64, top_curve: &[QfiPoint]) -> Result<f64> {
    let max = curve_max(top_curve)?;
    if !(max > 0.0) {
        return Err(Error::DegenerateReference(max));
    }
    Ok(rl_qfi_at_horizon / max)
}

/// `Γ_plateau`: optimized QFI at the horizon over the plateau of the periodically kicked top.
pub fn gain_plateau(rl_qfi_at_horizon: f64, kicked_curve: &[QfiPoint]) -> Result<f64> {
    let level = plateau(kicked_curve)?;
    if !(level >= 1e-12) {
        return Err(Error::DegenerateReference(level));
    }
    Ok(rl_qfi_at_horizon / level)
}
