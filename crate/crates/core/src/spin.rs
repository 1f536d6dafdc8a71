//! Angular-momentum algebra in the `|j, m⟩` basis, spin coherent states and
//! density matrices.
//!
//! Basis vectors are ordered by ascending `m`, so index `i` carries
//! `m = -j + i` and `J₋` is strictly upper triangular (it maps index `i + 1`
//! to `i`). Units are `ħ = 1`.

use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector};
use crate::scalar::{Complex, Real};

/// Spin size `j`, stored as the integer `2j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct SpinQuantum {
    twice_j: u32,
}

impl SpinQuantum {
    pub fn new(j: f64) -> Result<Self> {
        let twice = 2.0 * j;
        if !j.is_finite() || j <= 0.0 || (twice - twice.round()).abs() > 1e-12 || twice > 400.0 {
            return Err(Error::InvalidSpin(j));
        }
        Ok(SpinQuantum { twice_j: twice.round() as u32 })
    }

    pub fn from_twice(twice_j: u32) -> Result<Self> {
        if twice_j == 0 || twice_j > 400 {
            return Err(Error::InvalidSpin(twice_j as f64 / 2.0));
        }
        Ok(SpinQuantum { twice_j })
    }

    pub fn twice_j(self) -> u32 {
        self.twice_j
    }

    pub fn j(self) -> f64 {
        self.twice_j as f64 / 2.0
    }

    pub fn dim(self) -> usize {
        self.twice_j as usize + 1
    }

    /// `m` for basis index `i`.
    pub fn m(self, i: usize) -> f64 {
        i as f64 - self.j()
    }

    pub fn m_values(self) -> impl Iterator<Item = f64> {
        (0..self.dim()).map(move |i| self.m(i))
    }
}

impl TryFrom<f64> for SpinQuantum {
    type Error = Error;
    fn try_from(j: f64) -> Result<Self> {
        SpinQuantum::new(j)
    }
}

impl From<SpinQuantum> for f64 {
    fn from(s: SpinQuantum) -> f64 {
        s.j()
    }
}

impl fmt::Display for SpinQuantum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.twice_j % 2 == 0 {
            write!(f, "{}", self.twice_j / 2)
        } else {
            write!(f, "{}/2", self.twice_j)
        }
    }
}

/// `Jx, Jy, Jz, J₊, J₋` as dense matrices.
#[derive(Clone, Debug)]
pub struct SpinOperators<T: Real> {
    pub spin: SpinQuantum,
    pub jx: CMatrix<T>,
    pub jy: CMatrix<T>,
    pub jz: CMatrix<T>,
    pub jplus: CMatrix<T>,
    pub jminus: CMatrix<T>,
}

impl<T: Real> SpinOperators<T> {
    pub fn new(spin: SpinQuantum) -> Self {
        let dim = spin.dim();
        let j = spin.j();
        let mut jplus = CMatrix::<T>::zeros(dim, dim);
        for i in 0..dim - 1 {
            let m = spin.m(i);
            let amp = (j * (j + 1.0) - m * (m + 1.0)).sqrt();
            jplus[(i + 1, i)] = Complex::new(T::lit(amp), T::zero());
        }
        let jminus = jplus.transpose();
        let half = Complex::new(T::lit(0.5), T::zero());
        let jx = (&jplus + &jminus) * half;
        // (J₊ − J₋) / 2i
        let jy = (&jplus - &jminus) * Complex::new(T::zero(), T::lit(-0.5));
        let jz = CMatrix::from_diagonal(&DVector::from_iterator(
            dim,
            spin.m_values().map(|m| Complex::new(T::lit(m), T::zero())),
        ));
        SpinOperators { spin, jx, jy, jz, jplus, jminus }
    }

    pub fn dim(&self) -> usize {
        self.spin.dim()
    }

    /// `Jy² / (2j + 1)`, the generator of the nonlinear kick.
    pub fn kick_generator(&self) -> CMatrix<T> {
        let scale = Complex::new(T::one() / T::lit(self.dim() as f64), T::zero());
        (&self.jy * &self.jy) * scale
    }
}

/// Builds the spin operators for `j`, rejecting anything that is not a
/// positive half-integer.
pub fn build_operators<T: Real>(j: f64) -> Result<SpinOperators<T>> {
    Ok(SpinOperators::new(SpinQuantum::new(j)?))
}

/// Polar and azimuthal angle of a spin coherent state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherentStateParams {
    pub theta: f64,
    pub phi: f64,
}

impl CoherentStateParams {
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        use std::f64::consts::PI;
        let ok = theta.is_finite()
            && phi.is_finite()
            && (0.0..=PI).contains(&theta)
            && phi > -PI
            && phi <= PI;
        if !ok {
            return Err(Error::InvalidAngles { theta, phi });
        }
        Ok(CoherentStateParams { theta, phi })
    }

    /// Wraps `phi` into `(-π, π]`; `theta` must still lie in `[0, π]`.
    pub fn wrapped(theta: f64, phi: f64) -> Result<Self> {
        use std::f64::consts::{PI, TAU};
        let mut p = phi.rem_euclid(TAU);
        if p > PI {
            p -= TAU;
        }
        if p <= -PI {
            p += TAU;
        }
        Self::new(theta, p)
    }

    /// The state pointing along `+y`, used as the initial sensor state.
    pub fn plus_y() -> Self {
        use std::f64::consts::FRAC_PI_2;
        CoherentStateParams { theta: FRAC_PI_2, phi: FRAC_PI_2 }
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.theta, self.phi).map(|_| ())
    }

    /// Unit vector `(sinθ cosφ, sinθ sinφ, cosθ)`.
    pub fn direction(&self) -> [f64; 3] {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [st * cp, st * sp, ct]
    }
}

impl Default for CoherentStateParams {
    fn default() -> Self {
        Self::plus_y()
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Amplitudes `c_m = sqrt(C(2j, j−m)) sin(θ/2)^(j−m) cos(θ/2)^(j+m) e^{i(j−m)φ}`.
pub fn coherent_amplitudes<T: Real>(spin: SpinQuantum, p: CoherentStateParams) -> Result<CVector<T>> {
    p.validate()?;
    let n = spin.twice_j();
    let (s, c) = (p.theta / 2.0).sin_cos();
    let amps = (0..spin.dim()).map(|i| {
        // j − m = 2j − i, j + m = i
        let down = n - i as u32;
        let up = i as u32;
        let mag = binomial(n, down).sqrt() * s.powi(down as i32) * c.powi(up as i32);
        let phase = down as f64 * p.phi;
        Complex::new(T::lit(mag * phase.cos()), T::lit(mag * phase.sin()))
    });
    Ok(CVector::from_iterator(spin.dim(), amps))
}

/// Pure density matrix of the spin coherent state `|j, θ, φ⟩`.
pub fn coherent_state<T: Real>(spin: SpinQuantum, p: CoherentStateParams) -> Result<DensityMatrix<T>> {
    let psi = coherent_amplitudes::<T>(spin, p)?;
    Ok(DensityMatrix::from_pure(&psi))
}

/// Husimi function `Q(θ, φ) = ⟨j,θ,φ| ρ |j,θ,φ⟩`.
pub fn husimi_value<T: Real>(rho: &DensityMatrix<T>, p: CoherentStateParams) -> Result<T> {
    let spin = rho.spin()?;
    let psi = coherent_amplitudes::<T>(spin, p)?;
    let v = psi.adjoint() * rho.matrix() * &psi;
    Ok(v[(0, 0)].re)
}

/// Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix<T: Real> {
    rho: CMatrix<T>,
}

impl<T: Real> DensityMatrix<T> {
    /// Validates the density-matrix invariants.
    pub fn new(rho: CMatrix<T>) -> Result<Self> {
        if !rho.is_square() || rho.nrows() < 2 {
            return Err(Error::InvalidDensity(format!(
                "shape {}x{} is not a square matrix of size >= 2",
                rho.nrows(),
                rho.ncols()
            )));
        }
        let defect = linalg::hermiticity_defect(&rho);
        if defect > T::tol(1e-12) * T::one().max(rho.norm()) {
            return Err(Error::NotHermitian(defect.to_f64_lossy()));
        }
        let tr = rho.trace();
        if (tr.re - T::one()).abs() > T::tol(1e-10) || tr.im.abs() > T::tol(1e-10) {
            return Err(Error::InvalidDensity(format!("trace {tr} differs from 1")));
        }
        let (vals, _) = linalg::eigensystem_unchecked(&linalg::hermitian_part(&rho));
        if vals[0] < -T::tol(1e-10) {
            return Err(Error::InvalidDensity(format!("negative eigenvalue {}", vals[0])));
        }
        Ok(DensityMatrix { rho })
    }

    pub(crate) fn new_unchecked(rho: CMatrix<T>) -> Self {
        DensityMatrix { rho }
    }

    pub fn from_pure(psi: &CVector<T>) -> Self {
        let norm2 = psi.norm_squared();
        let rho = psi * psi.adjoint() * Complex::new(T::one() / norm2, T::zero());
        DensityMatrix { rho }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        let rho = CMatrix::<T>::identity(dim, dim) * Complex::new(T::one() / T::lit(dim as f64), T::zero());
        DensityMatrix { rho }
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn spin(&self) -> Result<SpinQuantum> {
        SpinQuantum::from_twice(self.dim() as u32 - 1)
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        &self.rho
    }

    pub fn into_matrix(self) -> CMatrix<T> {
        self.rho
    }

    /// `tr(ρ A)`, real part.
    pub fn expectation(&self, op: &CMatrix<T>) -> T {
        (&self.rho * op).trace().re
    }

    pub fn purity(&self) -> T {
        (&self.rho * &self.rho).trace().re
    }

    /// `|⟨ψ|ρ|ψ⟩|` for a normalized state vector.
    pub fn fidelity_with_pure(&self, psi: &CVector<T>) -> T {
        (psi.adjoint() * &self.rho * psi)[(0, 0)].re
    }
}

/// Eigenvalues (ascending) and eigenvectors of a density matrix.
pub fn hermitian_eigensystem<T: Real>(rho: &DensityMatrix<T>) -> Result<(DVector<T>, CMatrix<T>)> {
    linalg::hermitian_eigensystem(rho.matrix())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn ops(j: f64) -> SpinOperators<f64> {
        build_operators(j).unwrap()
    }

    #[test]
    fn rejects_bad_spin() {
        assert!(SpinQuantum::new(0.0).is_err());
        assert!(SpinQuantum::new(0.3).is_err());
        assert!(SpinQuantum::new(-1.0).is_err());
        assert!(SpinQuantum::new(f64::NAN).is_err());
        assert!(SpinQuantum::new(1.5).is_ok());
    }

    #[test]
    fn spin_half_jz_is_pauli_over_two() {
        let o = ops(0.5);
        assert_eq!(o.jz[(0, 0)].re, -0.5);
        assert_eq!(o.jz[(1, 1)].re, 0.5);
        assert_eq!(o.jx[(0, 1)].re, 0.5);
        assert_eq!(o.jy[(0, 1)], Complex::new(0.0, 0.5));
        assert_eq!(o.jy[(1, 0)], Complex::new(0.0, -0.5));
    }

    #[test]
    fn jz_eigenvalues_j2() {
        let o = ops(2.0);
        let d: Vec<f64> = (0..5).map(|i| o.jz[(i, i)].re).collect();
        assert_eq!(d, vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn squared_traces_j3() {
        // Σ m² over m = −3..3 = 28
        let o = ops(3.0);
        for a in [&o.jx, &o.jy, &o.jz] {
            let t = (a * a).trace();
            assert!((t.re - 28.0).abs() < 1e-12 && t.im.abs() < 1e-12);
        }
    }

    #[test]
    fn ladder_relations() {
        let o = ops(2.5);
        let i = Complex::new(0.0, 1.0);
        assert!((&o.jplus - (&o.jx + &o.jy * i)).norm() < 1e-14);
        assert!((&o.jminus - (&o.jx - &o.jy * i)).norm() < 1e-14);
    }

    #[test]
    fn coherent_north_pole_is_top_state() {
        for phi in [0.0, 1.0, -2.0] {
            let psi = coherent_amplitudes::<f64>(SpinQuantum::new(2.0).unwrap(), CoherentStateParams::new(0.0, phi).unwrap())
                .unwrap();
            assert_eq!(psi[4].norm(), 1.0);
            for k in 0..4 {
                assert_eq!(psi[k].norm(), 0.0);
            }
        }
    }

    #[test]
    fn coherent_plus_y_expectations() {
        let o = ops(2.0);
        let rho = coherent_state::<f64>(o.spin, CoherentStateParams::plus_y()).unwrap();
        assert!((rho.expectation(&o.jy) - 2.0).abs() < 1e-12);
        assert!(rho.expectation(&o.jx).abs() < 1e-12);
        assert!(rho.expectation(&o.jz).abs() < 1e-12);
    }

    #[test]
    fn equatorial_variance_is_j_over_two() {
        for twice in 1..=12u32 {
            let spin = SpinQuantum::from_twice(twice).unwrap();
            let o = SpinOperators::<f64>::new(spin);
            for phi in [-2.0, 0.3, PI] {
                let rho = coherent_state::<f64>(spin, CoherentStateParams::new(FRAC_PI_2, phi).unwrap()).unwrap();
                let mean = rho.expectation(&o.jz);
                let var = rho.expectation(&(&o.jz * &o.jz)) - mean * mean;
                assert!((var - spin.j() / 2.0).abs() < 1e-12, "j={} var={var}", spin.j());
            }
        }
    }

    #[test]
    fn coherent_state_is_normalized_and_pure() {
        let spin = SpinQuantum::new(3.0).unwrap();
        let rho = coherent_state::<f64>(spin, CoherentStateParams::new(1.1, -0.4).unwrap()).unwrap();
        assert!(DensityMatrix::new(rho.matrix().clone()).is_ok());
        assert!((rho.purity() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn angle_validation() {
        assert!(CoherentStateParams::new(-0.1, 0.0).is_err());
        assert!(CoherentStateParams::new(0.5, -PI).is_err());
        assert!(CoherentStateParams::new(0.5, PI).is_ok());
        let w = CoherentStateParams::wrapped(0.5, 3.0 * PI / 2.0).unwrap();
        assert!((w.phi + FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn eigensystem_examples() {
        let mixed = DensityMatrix::<f64>::maximally_mixed(5);
        let (vals, _) = hermitian_eigensystem(&mixed).unwrap();
        assert!(vals.iter().all(|v| (v - 0.2).abs() < 1e-14));

        let pure = coherent_state::<f64>(SpinQuantum::new(2.0).unwrap(), CoherentStateParams::new(0.7, 0.2).unwrap()).unwrap();
        let (vals, vecs) = hermitian_eigensystem(&pure).unwrap();
        assert!((vals[4] - 1.0).abs() < 1e-10);
        assert!(vals.iter().take(4).all(|v| v.abs() < 1e-10));
        let d = CMatrix::from_diagonal(&vals.map(|x| Complex::new(x, 0.0)));
        assert!((&vecs * d * vecs.adjoint() - pure.matrix()).norm() < 1e-10);

        let diag = CMatrix::<f64>::from_diagonal(&DVector::from_vec(vec![Complex::new(0.7, 0.0), Complex::new(0.3, 0.0)]));
        let (vals, _) = linalg::hermitian_eigensystem(&diag).unwrap();
        assert!((vals[0] - 0.3).abs() < 1e-15 && (vals[1] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn density_validation() {
        let mut m = CMatrix::<f64>::identity(2, 2);
        assert!(DensityMatrix::new(m.clone()).is_err()); // trace 2
        m[(0, 0)] = Complex::new(1.2, 0.0);
        m[(1, 1)] = Complex::new(-0.2, 0.0);
        assert!(DensityMatrix::new(m).is_err()); // negative eigenvalue
    }

    #[test]
    fn husimi_examples() {
        let spin = SpinQuantum::new(2.0).unwrap();
        let p0 = CoherentStateParams::new(1.2, 0.4).unwrap();
        let rho = coherent_state::<f64>(spin, p0).unwrap();
        assert!((husimi_value(&rho, p0).unwrap() - 1.0).abs() < 1e-12);

        let rho = coherent_state::<f64>(spin, CoherentStateParams::plus_y()).unwrap();
        let antipode = CoherentStateParams::new(FRAC_PI_2, -FRAC_PI_2).unwrap();
        assert!(husimi_value(&rho, antipode).unwrap().abs() < 1e-14);

        let mixed = DensityMatrix::<f64>::maximally_mixed(5);
        assert!((husimi_value(&mixed, p0).unwrap() - 0.2).abs() < 1e-14);
    }

    #[test]
    fn husimi_overlap_law() {
        // |⟨Ω|Ω'⟩|² = cos^{4j}(Θ/2) with Θ the angle between the directions.
        let spin = SpinQuantum::new(1.5).unwrap();
        let a = CoherentStateParams::new(0.4, 2.0).unwrap();
        let b = CoherentStateParams::new(2.1, -1.0).unwrap();
        let rho = coherent_state::<f64>(spin, a).unwrap();
        let (da, db) = (a.direction(), b.direction());
        let cos_big = da[0] * db[0] + da[1] * db[1] + da[2] * db[2];
        let expected = ((1.0 + cos_big) / 2.0).powi(3);
        assert!((husimi_value(&rho, b).unwrap() - expected).abs() < 1e-13);
    }

    #[test]
    fn husimi_resolution_of_identity() {
        // Sphere average of Q times dim equals 1 for any state.
        let spin = SpinQuantum::new(2.0).unwrap();
        let rho = coherent_state::<f64>(spin, CoherentStateParams::new(0.9, 1.3).unwrap()).unwrap();
        let (nt, np) = (120, 240);
        let mut acc = 0.0;
        for i in 0..nt {
            let th = (i as f64 + 0.5) * PI / nt as f64;
            for k in 0..np {
                let ph = -PI + (k as f64 + 0.5) * 2.0 * PI / np as f64;
                acc += husimi_value(&rho, CoherentStateParams::new(th, ph).unwrap()).unwrap() * th.sin();
            }
        }
        let avg = acc * (PI / nt as f64) * (2.0 * PI / np as f64) / (4.0 * PI);
        assert!((avg * 5.0 - 1.0).abs() < 1e-3, "{avg}");
    }

    #[test]
    fn single_precision_operators() {
        let o = SpinOperators::<f32>::new(SpinQuantum::new(2.0).unwrap());
        let comm = &o.jx * &o.jy - &o.jy * &o.jx - &o.jz * Complex::new(0.0f32, 1.0);
        assert!(comm.norm() < 1e-5);
    }
}
