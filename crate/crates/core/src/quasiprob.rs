//! Quasi-probability distributions on the sphere: the Husimi function and a
//! spin Wigner function built from the multipole expansion
//! `W(θ,φ) = √((2j+1)/4π) Σ_{K,Q} tr(ρ T†_{KQ}) Y_{KQ}(θ,φ)`.
//!
//! The prefactor makes `∫ W dΩ = 1`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::scalar::{Complex, Real};
use crate::spin::{husimi_value, CoherentStateParams, DensityMatrix, SpinQuantum};

type C64 = Complex<f64>;

fn factorial(n: i64) -> f64 {
    (2..=n).map(|k| k as f64).product()
}

/// Wigner 3j symbol with all arguments given as twice their value.
pub fn wigner_3j_twice(tj: [i64; 3], tm: [i64; 3]) -> f64 {
    let [j1, j2, j3] = tj;
    let [m1, m2, m3] = tm;
    if m1 + m2 + m3 != 0 {
        return 0.0;
    }
    if j3 < (j1 - j2).abs() || j3 > j1 + j2 || (j1 + j2 + j3) % 2 != 0 {
        return 0.0;
    }
    for (j, m) in [(j1, m1), (j2, m2), (j3, m3)] {
        if m.abs() > j || (j + m) % 2 != 0 {
            return 0.0;
        }
    }
    // switch to integers in units of one
    let h = |x: i64| x / 2;
    let delta = factorial(h(j1 + j2 - j3)) * factorial(h(j1 - j2 + j3)) * factorial(h(-j1 + j2 + j3))
        / factorial(h(j1 + j2 + j3) + 1);
    let norm = factorial(h(j1 + m1))
        * factorial(h(j1 - m1))
        * factorial(h(j2 + m2))
        * factorial(h(j2 - m2))
        * factorial(h(j3 + m3))
        * factorial(h(j3 - m3));
    let k_min = 0.max(h(j2 - j3 - m1)).max(h(j1 - j3 + m2));
    let k_max = h(j1 + j2 - j3).min(h(j1 - m1)).min(h(j2 + m2));
    let mut sum = 0.0;
    for k in k_min..=k_max {
        let denom = factorial(k)
            * factorial(h(j3 - j2 + m1) + k)
            * factorial(h(j3 - j1 - m2) + k)
            * factorial(h(j1 + j2 - j3) - k)
            * factorial(h(j1 - m1) - k)
            * factorial(h(j2 + m2) - k);
        sum += if k % 2 == 0 { 1.0 } else { -1.0 } / denom;
    }
    let phase_exp = h(j1 - j2 - m3);
    let phase = if phase_exp.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    phase * (delta * norm).sqrt() * sum
}

/// Irreducible tensor operator `T_{KQ}` on the spin-`j` space (basis ordered
/// by ascending `m`).
pub fn tensor_operator(spin: SpinQuantum, k: u32, q: i32) -> Result<CMatrix<f64>> {
    let tj = spin.twice_j() as i64;
    if k as i64 > tj || q.unsigned_abs() > k {
        return Err(Error::InvalidParameter(format!("no tensor operator T_({k},{q}) for j = {}", spin.j())));
    }
    let dim = spin.dim();
    let tk = 2 * k as i64;
    let tq = 2 * q as i64;
    let mut t = CMatrix::<f64>::zeros(dim, dim);
    let pref = (2.0 * k as f64 + 1.0).sqrt();
    for a in 0..dim {
        let tm = -tj + 2 * a as i64;
        let sign = if ((tj - tm) / 2) % 2 == 0 { 1.0 } else { -1.0 };
        for b in 0..dim {
            let tmp = -tj + 2 * b as i64;
            let c = wigner_3j_twice([tj, tk, tj], [-tm, tq, tmp]);
            if c != 0.0 {
                t[(a, b)] = C64::new(sign * pref * c, 0.0);
            }
        }
    }
    Ok(t)
}

/// Spherical harmonic `Y_{KQ}` with the Condon–Shortley phase.
pub fn spherical_harmonic(k: u32, q: i32, theta: f64, phi: f64) -> C64 {
    let m = q.unsigned_abs();
    if m > k {
        return C64::new(0.0, 0.0);
    }
    let x = theta.cos();
    let s = theta.sin().abs();
    // P_m^m = (−1)^m (2m−1)!! s^m
    let mut pmm = 1.0;
    for i in 1..=m {
        pmm *= -((2 * i - 1) as f64) * s;
    }
    let p = if k == m {
        pmm
    } else {
        let mut p_prev = pmm;
        let mut p_cur = x * (2 * m + 1) as f64 * pmm;
        for l in (m + 2)..=k {
            let next = ((2 * l - 1) as f64 * x * p_cur - (l + m - 1) as f64 * p_prev) / (l - m) as f64;
            p_prev = p_cur;
            p_cur = next;
        }
        p_cur
    };
    let norm = ((2 * k + 1) as f64 / (4.0 * PI) * factorial((k - m) as i64) / factorial((k + m) as i64)).sqrt();
    let y = C64::from_polar(norm * p, m as f64 * phi);
    if q >= 0 {
        y
    } else if m % 2 == 0 {
        y.conj()
    } else {
        -y.conj()
    }
}

fn to_c64<T: Real>(rho: &DensityMatrix<T>) -> CMatrix<f64> {
    rho.matrix().map(|z| C64::new(z.re.to_f64_lossy(), z.im.to_f64_lossy()))
}

/// Multipole coefficients `ρ_{KQ} = tr(ρ T†_{KQ})`, indexed `[K][Q + K]`.
pub fn multipoles<T: Real>(rho: &DensityMatrix<T>) -> Result<Vec<Vec<C64>>> {
    let spin = rho.spin()?;
    let r = to_c64(rho);
    let mut out = Vec::new();
    for k in 0..=spin.twice_j() {
        let mut row = Vec::new();
        for q in -(k as i32)..=(k as i32) {
            let t = tensor_operator(spin, k, q)?;
            row.push((&r * t.adjoint()).trace());
        }
        out.push(row);
    }
    Ok(out)
}

/// Evaluates the Wigner function at one point.
pub fn wigner_value<T: Real>(rho: &DensityMatrix<T>, theta: f64, phi: f64) -> Result<f64> {
    let spin = rho.spin()?;
    let coeff = multipoles(rho)?;
    Ok(wigner_from_multipoles(spin, &coeff, theta, phi))
}

fn wigner_from_multipoles(spin: SpinQuantum, coeff: &[Vec<C64>], theta: f64, phi: f64) -> f64 {
    let pref = (spin.dim() as f64 / (4.0 * PI)).sqrt();
    let mut w = C64::new(0.0, 0.0);
    for (k, row) in coeff.iter().enumerate() {
        for (i, c) in row.iter().enumerate() {
            let q = i as i32 - k as i32;
            w += c * spherical_harmonic(k as u32, q, theta, phi);
        }
    }
    pref * w.re
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuasiKind {
    Husimi,
    Wigner,
}

impl std::str::FromStr for QuasiKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "husimi" => Ok(QuasiKind::Husimi),
            "wigner" => Ok(QuasiKind::Wigner),
            _ => Err(Error::Parse(format!("unknown distribution '{s}'"))),
        }
    }
}

impl std::fmt::Display for QuasiKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            QuasiKind::Husimi => "husimi",
            QuasiKind::Wigner => "wigner",
        })
    }
}

/// Values on a midpoint grid: `θ_i = (i + ½)π/n_θ`, `φ_l = −π + (l + ½)2π/n_φ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuasiGrid {
    pub kind: QuasiKind,
    pub n_theta: usize,
    pub n_phi: usize,
    /// Row `i` holds the values at `θ_i`.
    pub values: DMatrix<f64>,
}

impl QuasiGrid {
    pub const CSV_HEADER: &'static str = "theta,phi,value";

    pub fn theta(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * PI / self.n_theta as f64
    }

    pub fn phi(&self, l: usize) -> f64 {
        -PI + (l as f64 + 0.5) * 2.0 * PI / self.n_phi as f64
    }

    /// Midpoint-rule integral over the sphere.
    pub fn integral(&self) -> f64 {
        let cell = (PI / self.n_theta as f64) * (2.0 * PI / self.n_phi as f64);
        (0..self.n_theta).map(|i| self.theta(i).sin() * self.values.row(i).sum()).sum::<f64>() * cell
    }

    pub fn min(&self) -> f64 {
        self.values.min()
    }

    pub fn max(&self) -> f64 {
        self.values.max()
    }

    /// Grid angles of the largest value.
    pub fn argmax(&self) -> (f64, f64) {
        let (mut bi, mut bl) = (0, 0);
        let mut best = f64::NEG_INFINITY;
        for i in 0..self.n_theta {
            for l in 0..self.n_phi {
                if self.values[(i, l)] > best {
                    best = self.values[(i, l)];
                    bi = i;
                    bl = l;
                }
            }
        }
        (self.theta(bi), self.phi(bl))
    }

    pub fn to_csv_body(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for i in 0..self.n_theta {
            for l in 0..self.n_phi {
                let _ = writeln!(out, "{},{},{}", self.theta(i), self.phi(l), self.values[(i, l)]);
            }
        }
        out
    }
}

/// Evaluates the requested distribution on an `n_theta × n_phi` grid.
pub fn quasi_grid<T: Real>(rho: &DensityMatrix<T>, kind: QuasiKind, n_theta: usize, n_phi: usize) -> Result<QuasiGrid> {
    if n_theta == 0 || n_phi == 0 {
        return Err(Error::InvalidParameter("grid dimensions must be positive".into()));
    }
    let spin = rho.spin()?;
    let mut grid = QuasiGrid { kind, n_theta, n_phi, values: DMatrix::zeros(n_theta, n_phi) };
    let coeff = match kind {
        QuasiKind::Wigner => Some(multipoles(rho)?),
        QuasiKind::Husimi => None,
    };
    for i in 0..n_theta {
        let theta = grid.theta(i);
        for l in 0..n_phi {
            let phi = grid.phi(l);
            grid.values[(i, l)] = match &coeff {
                Some(c) => wigner_from_multipoles(spin, c, theta, phi),
                None => husimi_value(rho, CoherentStateParams::new(theta, phi)?)?.to_f64_lossy(),
            };
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{DynamicsParams, Propagators, StateWithDerivative};
    use crate::spin::coherent_state;
    use crate::linalg::CVector;

    #[test]
    fn known_3j_values() {
        // (1 1 0; 0 0 0) = −1/√3, (1 1 1; 1 −1 0) = 1/√6, (½ ½ 1; ½ ½ −1) = −1/√3
        assert!((wigner_3j_twice([2, 2, 0], [0, 0, 0]) + 1.0 / 3f64.sqrt()).abs() < 1e-14);
        assert!((wigner_3j_twice([2, 2, 2], [2, -2, 0]) - 1.0 / 6f64.sqrt()).abs() < 1e-14);
        assert!((wigner_3j_twice([1, 1, 2], [1, 1, -2]) + 1.0 / 3f64.sqrt()).abs() < 1e-14);
        assert_eq!(wigner_3j_twice([2, 2, 2], [0, 0, 0]), 0.0);
        assert_eq!(wigner_3j_twice([2, 2, 6], [0, 0, 0]), 0.0);
    }

    #[test]
    fn tensor_operators_are_orthonormal() {
        for tj in 1..=5 {
            let spin = SpinQuantum::from_twice(tj).unwrap();
            let mut ops = Vec::new();
            for k in 0..=tj {
                for q in -(k as i32)..=(k as i32) {
                    ops.push(tensor_operator(spin, k, q).unwrap());
                }
            }
            assert_eq!(ops.len(), spin.dim() * spin.dim());
            for (a, ta) in ops.iter().enumerate() {
                for (b, tb) in ops.iter().enumerate() {
                    let ip = (ta.adjoint() * tb).trace();
                    let expected = if a == b { 1.0 } else { 0.0 };
                    assert!((ip - C64::new(expected, 0.0)).norm() < 1e-12, "2j={tj} ({a},{b})");
                }
            }
        }
    }

    #[test]
    fn t00_is_scaled_identity() {
        let spin = SpinQuantum::new(1.5).unwrap();
        let t = tensor_operator(spin, 0, 0).unwrap();
        let expected = CMatrix::<f64>::identity(4, 4) * C64::new(0.5, 0.0);
        assert!((t - expected).norm() < 1e-14);
    }

    #[test]
    fn spherical_harmonic_values() {
        let (th, ph) = (0.7, 1.3);
        let y00 = spherical_harmonic(0, 0, th, ph);
        assert!((y00.re - 0.5 / PI.sqrt()).abs() < 1e-15);
        let y10 = spherical_harmonic(1, 0, th, ph);
        assert!((y10.re - (3.0 / (4.0 * PI)).sqrt() * th.cos()).abs() < 1e-14);
        let y11 = spherical_harmonic(1, 1, th, ph);
        let expected = C64::from_polar(-(3.0 / (8.0 * PI)).sqrt() * th.sin(), ph);
        assert!((y11 - expected).norm() < 1e-14);
        let y2m1 = spherical_harmonic(2, -1, th, ph);
        let expected = C64::from_polar((15.0 / (8.0 * PI)).sqrt() * th.sin() * th.cos(), -ph);
        assert!((y2m1 - expected).norm() < 1e-14);
    }

    #[test]
    fn maximally_mixed_husimi_is_flat() {
        let rho = DensityMatrix::<f64>::maximally_mixed(5);
        let g = quasi_grid(&rho, QuasiKind::Husimi, 12, 24).unwrap();
        assert!((g.max() - 0.2).abs() < 1e-12 && (g.min() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn wigner_integrates_to_one() {
        let spin = SpinQuantum::new(2.0).unwrap();
        let rho = coherent_state::<f64>(spin, CoherentStateParams::new(1.1, -0.4).unwrap()).unwrap();
        let g = quasi_grid(&rho, QuasiKind::Wigner, 100, 200).unwrap();
        assert!((g.integral() - 1.0).abs() < 1e-3);
        let h = quasi_grid(&rho, QuasiKind::Husimi, 100, 200).unwrap();
        assert!((h.integral() - 4.0 * PI / 5.0).abs() < 1e-3);
    }

    #[test]
    fn coherent_wigner_peaks_at_its_direction() {
        let spin = SpinQuantum::new(2.0).unwrap();
        let params = CoherentStateParams::new(PI / 3.0, PI / 4.0).unwrap();
        let rho = coherent_state::<f64>(spin, params).unwrap();
        let at = wigner_value(&rho, params.theta, params.phi).unwrap();
        let opposite = wigner_value(&rho, PI - params.theta, params.phi - PI).unwrap();
        assert!(at > 0.0 && at > opposite);
        let g = quasi_grid(&rho, QuasiKind::Wigner, 60, 120).unwrap();
        let (th, ph) = g.argmax();
        assert!((th - params.theta).abs() < 0.06 && (ph - params.phi).abs() < 0.06);
    }

    #[test]
    fn wigner_rotates_with_precession() {
        let spin = SpinQuantum::new(1.5).unwrap();
        let rho = coherent_state::<f64>(spin, CoherentStateParams::new(1.0, 0.2).unwrap()).unwrap();
        let params = DynamicsParams::unitary();
        let props = Propagators::new(spin, params, 0.6).unwrap();
        let mut state = StateWithDerivative::from_density(rho.clone());
        props.precess(&mut state);
        let rotated = state.density();
        let alpha = params.omega * 0.6;
        for &(th, ph) in &[(0.3, 0.1), (1.2, -2.0), (2.5, 2.9)] {
            let a = wigner_value(&rho, th, ph).unwrap();
            let b = wigner_value(&rotated, th, ph + alpha).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dicke_state_has_negative_wigner() {
        let mut psi = CVector::<f64>::zeros(5);
        psi[2] = C64::new(1.0, 0.0);
        let rho = DensityMatrix::from_pure(&psi);
        let g = quasi_grid(&rho, QuasiKind::Wigner, 60, 8).unwrap();
        assert!(g.min() < -1e-3);
        let h = quasi_grid(&rho, QuasiKind::Husimi, 60, 8).unwrap();
        assert!(h.min() >= 0.0);
    }

    #[test]
    fn grid_rejects_empty_shape() {
        let rho = DensityMatrix::<f64>::maximally_mixed(3);
        assert!(quasi_grid(&rho, QuasiKind::Wigner, 0, 4).is_err());
    }
}
