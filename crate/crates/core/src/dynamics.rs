//! Propagation of a density matrix together with its derivative with respect
//! to the precession frequency `ω`.
//!
//! One interval of the generalized kicked top is: decoherence for `dt`,
//! precession `exp(−iω dt Jz)` for `dt`, then a kick `exp(−ik Jy²/(2j+1))`.
//! Both decoherence generators commute with the precession, so the first two
//! steps may be taken in either order. Kicks and decoherence do not depend on
//! `ω`, hence they act on `∂ρ/∂ω` exactly as on `ρ`; only the precession adds
//! an inhomogeneous term.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::scalar::{Complex, Real};
use crate::spin::{DensityMatrix, SpinOperators, SpinQuantum};

/// Markovian decoherence channel acting between kicks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Decoherence {
    None,
    /// `γ([Jz, ρJz] + h.c.)`
    PhaseDamping { gamma: f64 },
    /// `γ([J₋, ρJ₊] + h.c.)`
    Superradiant { gamma: f64 },
}

impl Decoherence {
    pub fn rate(&self) -> f64 {
        match *self {
            Decoherence::None => 0.0,
            Decoherence::PhaseDamping { gamma } | Decoherence::Superradiant { gamma } => gamma,
        }
    }

    pub fn with_rate(&self, gamma: f64) -> Self {
        match self {
            Decoherence::None => Decoherence::None,
            Decoherence::PhaseDamping { .. } => Decoherence::PhaseDamping { gamma },
            Decoherence::Superradiant { .. } => Decoherence::Superradiant { gamma },
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Decoherence::None => "none",
            Decoherence::PhaseDamping { .. } => "phase_damping",
            Decoherence::Superradiant { .. } => "superradiant",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsParams {
    /// Precession frequency in radians per unit time.
    pub omega: f64,
    pub decoherence: Decoherence,
}

impl DynamicsParams {
    pub const DEFAULT_OMEGA: f64 = std::f64::consts::FRAC_PI_2;

    pub fn new(omega: f64, decoherence: Decoherence) -> Result<Self> {
        let p = DynamicsParams { omega, decoherence };
        p.validate()?;
        Ok(p)
    }

    pub fn unitary() -> Self {
        DynamicsParams { omega: Self::DEFAULT_OMEGA, decoherence: Decoherence::None }
    }

    pub fn superradiant(gamma: f64) -> Self {
        DynamicsParams { omega: Self::DEFAULT_OMEGA, decoherence: Decoherence::Superradiant { gamma } }
    }

    pub fn phase_damping(gamma: f64) -> Self {
        DynamicsParams { omega: Self::DEFAULT_OMEGA, decoherence: Decoherence::PhaseDamping { gamma } }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.omega.is_finite() {
            return Err(Error::InvalidParameter(format!("omega = {}", self.omega)));
        }
        let g = self.decoherence.rate();
        if !(g >= 0.0) || !g.is_finite() {
            return Err(Error::InvalidParameter(format!("decoherence rate = {g}")));
        }
        Ok(())
    }
}

impl Default for DynamicsParams {
    fn default() -> Self {
        Self::unitary()
    }
}

/// A state `ρ` together with `∂ρ/∂ω`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateWithDerivative<T: Real> {
    rho: CMatrix<T>,
    drho: CMatrix<T>,
}

impl<T: Real> StateWithDerivative<T> {
    /// Starts from an `ω`-independent state, so the derivative is zero.
    pub fn from_density(rho: DensityMatrix<T>) -> Self {
        let n = rho.dim();
        StateWithDerivative { rho: rho.into_matrix(), drho: CMatrix::zeros(n, n) }
    }

    pub fn new(rho: DensityMatrix<T>, drho: CMatrix<T>) -> Result<Self> {
        if drho.shape() != (rho.dim(), rho.dim()) {
            return Err(Error::DimensionMismatch { expected: rho.dim(), got: drho.nrows() });
        }
        Ok(StateWithDerivative { rho: rho.into_matrix(), drho })
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn rho(&self) -> &CMatrix<T> {
        &self.rho
    }

    pub fn drho(&self) -> &CMatrix<T> {
        &self.drho
    }

    /// The current `ρ` as a [`DensityMatrix`], without re-validation.
    pub fn density(&self) -> DensityMatrix<T> {
        DensityMatrix::new_unchecked(self.rho.clone())
    }

    /// Applies the same linear map to `ρ` and `∂ρ/∂ω`.
    fn map_both(&mut self, f: impl Fn(&CMatrix<T>) -> CMatrix<T>) {
        self.rho = f(&self.rho);
        self.drho = f(&self.drho);
    }

    /// `ρ → UρU†`, `∂ρ → U ∂ρ U†` for an `ω`-independent unitary.
    pub fn apply_unitary(&mut self, u: &CMatrix<T>, u_adj: &CMatrix<T>) {
        self.map_both(|m| u * m * u_adj);
    }
}

/// Spectral form of the kick generator `Jy²/(2j+1)`, which is real symmetric.
#[derive(Clone, Debug)]
pub struct KickFactory<T: Real> {
    values: DVector<T>,
    vectors: DMatrix<T>,
}

impl<T: Real> KickFactory<T> {
    pub fn new(ops: &SpinOperators<T>) -> Self {
        let gen = ops.kick_generator().map(|c| c.re);
        let eig = gen.symmetric_eigen();
        KickFactory { values: eig.eigenvalues, vectors: eig.eigenvectors }
    }

    /// `exp(−i k Jy²/(2j+1))`.
    pub fn unitary(&self, k: T) -> CMatrix<T> {
        let n = self.values.len();
        let mut out = CMatrix::<T>::zeros(n, n);
        for (l, &lambda) in self.values.iter().enumerate() {
            let angle = -k * lambda;
            let phase = Complex::new(angle.cos(), angle.sin());
            for r in 0..n {
                let vr = self.vectors[(r, l)];
                if vr == T::zero() {
                    continue;
                }
                for c in 0..n {
                    out[(r, c)] += phase * (vr * self.vectors[(c, l)]);
                }
            }
        }
        out
    }
}

/// Decoherence propagator `e^{Λ dt}` in its cheapest exact form.
#[derive(Clone, Debug)]
pub enum DecoherenceMap<T: Real> {
    Identity,
    /// Elementwise factors in the `|j,m⟩` basis (phase damping).
    Elementwise(DMatrix<T>),
    /// One real propagator per `|m − m'|` band (superradiance). Band `d` acts on
    /// the vector `(ρ[n+d, n])_n` and identically on `(ρ[n, n+d])_n`.
    Banded(Vec<DMatrix<T>>),
}

impl<T: Real> DecoherenceMap<T> {
    pub fn apply(&self, m: &CMatrix<T>) -> CMatrix<T> {
        match self {
            DecoherenceMap::Identity => m.clone(),
            DecoherenceMap::Elementwise(f) => {
                CMatrix::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)] * f[(r, c)])
            }
            DecoherenceMap::Banded(bands) => {
                let dim = m.nrows();
                let mut out = CMatrix::<T>::zeros(dim, dim);
                for (d, e) in bands.iter().enumerate() {
                    let len = dim - d;
                    for n in 0..len {
                        let mut lower = Complex::new(T::zero(), T::zero());
                        let mut upper = Complex::new(T::zero(), T::zero());
                        for q in n..len {
                            let w = e[(n, q)];
                            if w != T::zero() {
                                lower += m[(q + d, q)] * w;
                                upper += m[(q, q + d)] * w;
                            }
                        }
                        out[(n + d, n)] = lower;
                        if d > 0 {
                            out[(n, n + d)] = upper;
                        }
                    }
                }
                out
            }
        }
    }
}

/// Generator of superradiant decay restricted to band `d`: acts on
/// `v_n = ρ[n+d, n]`, `n = 0..dim−d`.
pub fn superradiant_band_generator<T: Real>(ops: &SpinOperators<T>, gamma: T, d: usize) -> DMatrix<T> {
    let dim = ops.dim();
    let len = dim - d;
    // a_i = ⟨i−1|J₋|i⟩, b_i = ⟨i|J₊J₋|i⟩
    let a = |i: usize| if i == 0 || i >= dim { T::zero() } else { ops.jminus[(i - 1, i)].re };
    let jpjm = &ops.jplus * &ops.jminus;
    let b = |i: usize| jpjm[(i, i)].re;
    let two = T::lit(2.0);
    DMatrix::from_fn(len, len, |r, c| {
        if r == c {
            -gamma * (b(r + d) + b(r))
        } else if c == r + 1 {
            two * gamma * a(r + d + 1) * a(r + 1)
        } else {
            T::zero()
        }
    })
}

/// Per-band superradiant propagators for time `dt`.
pub fn superradiant_bands<T: Real>(ops: &SpinOperators<T>, gamma: T, dt: T) -> Result<Vec<DMatrix<T>>> {
    (0..ops.dim())
        .map(|d| linalg::expm(&(superradiant_band_generator(ops, gamma, d) * dt)))
        .collect()
}

fn phase_damping_factors<T: Real>(dim: usize, gamma: T, dt: T) -> DMatrix<T> {
    DMatrix::from_fn(dim, dim, |r, c| {
        let d = T::lit(r as f64 - c as f64);
        (-gamma * dt * d * d).exp()
    })
}

/// Decoherence map for `params` over `dt`.
pub fn decoherence_map<T: Real>(ops: &SpinOperators<T>, decoherence: Decoherence, dt: T) -> Result<DecoherenceMap<T>> {
    match decoherence {
        Decoherence::None => Ok(DecoherenceMap::Identity),
        Decoherence::PhaseDamping { gamma } if gamma == 0.0 => Ok(DecoherenceMap::Identity),
        Decoherence::Superradiant { gamma } if gamma == 0.0 => Ok(DecoherenceMap::Identity),
        Decoherence::PhaseDamping { gamma } => {
            Ok(DecoherenceMap::Elementwise(phase_damping_factors(ops.dim(), T::lit(gamma), dt)))
        }
        Decoherence::Superradiant { gamma } => {
            Ok(DecoherenceMap::Banded(superradiant_bands(ops, T::lit(gamma), dt)?))
        }
    }
}

/// Lindblad generator on the column-stacked `dim²` space.
pub fn decoherence_superoperator<T: Real>(ops: &SpinOperators<T>, decoherence: Decoherence) -> CMatrix<T> {
    let n = ops.dim();
    match decoherence {
        Decoherence::None => CMatrix::zeros(n * n, n * n),
        Decoherence::PhaseDamping { gamma } => linalg::lindblad_superoperator(&ops.jz, T::lit(gamma)),
        Decoherence::Superradiant { gamma } => linalg::lindblad_superoperator(&ops.jminus, T::lit(gamma)),
    }
}

/// `e^{Λ dt}` on the full `dim²` space by direct exponentiation. Slow; serves
/// as the reference for the structured maps.
pub fn full_decoherence_propagator<T: Real>(ops: &SpinOperators<T>, decoherence: Decoherence, dt: T) -> Result<CMatrix<T>> {
    let gen = decoherence_superoperator(ops, decoherence) * Complex::new(dt, T::zero());
    linalg::expm(&gen)
}

/// Applies a column-stacking superoperator to a matrix.
pub fn apply_superoperator<T: Real>(s: &CMatrix<T>, m: &CMatrix<T>) -> CMatrix<T> {
    linalg::unvectorize(&(s * linalg::vectorize(m)), m.nrows())
}

/// Cached linear maps for one `(spin, params, dt)` combination.
#[derive(Clone, Debug)]
pub struct Propagators<T: Real> {
    spin: SpinQuantum,
    params: DynamicsParams,
    dt: T,
    /// `exp(−iω dt (m − m'))`, the elementwise action of the precession.
    phases: CMatrix<T>,
    /// `−i dt (m − m')`, the derivative term of the precession.
    dphase: CMatrix<T>,
    decoherence: DecoherenceMap<T>,
    kicks: KickFactory<T>,
}

impl<T: Real> Propagators<T> {
    pub fn new(spin: SpinQuantum, params: DynamicsParams, dt: T) -> Result<Self> {
        params.validate()?;
        if !(dt >= T::zero()) {
            return Err(Error::InvalidParameter(format!("time step {dt}")));
        }
        let ops = SpinOperators::<T>::new(spin);
        let dim = spin.dim();
        let omega = T::lit(params.omega);
        let phases = CMatrix::from_fn(dim, dim, |r, c| {
            let angle = -omega * dt * T::lit(r as f64 - c as f64);
            Complex::new(angle.cos(), angle.sin())
        });
        let dphase = CMatrix::from_fn(dim, dim, |r, c| Complex::new(T::zero(), -dt * T::lit(r as f64 - c as f64)));
        let decoherence = decoherence_map(&ops, params.decoherence, dt)?;
        let kicks = KickFactory::new(&ops);
        Ok(Propagators { spin, params, dt, phases, dphase, decoherence, kicks })
    }

    pub fn spin(&self) -> SpinQuantum {
        self.spin
    }

    pub fn params(&self) -> &DynamicsParams {
        &self.params
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn decoherence_map(&self) -> &DecoherenceMap<T> {
        &self.decoherence
    }

    pub fn kick_factory(&self) -> &KickFactory<T> {
        &self.kicks
    }

    /// `exp(−iω dt Jz)` as a dense matrix.
    pub fn precession_unitary(&self) -> CMatrix<T> {
        let dim = self.spin.dim();
        let omega = T::lit(self.params.omega);
        CMatrix::from_fn(dim, dim, |r, c| {
            if r != c {
                return Complex::new(T::zero(), T::zero());
            }
            let angle = -omega * self.dt * T::lit(self.spin.m(r));
            Complex::new(angle.cos(), angle.sin())
        })
    }

    pub fn kick_unitary(&self, k: T) -> CMatrix<T> {
        self.kicks.unitary(k)
    }

    pub fn decohere(&self, state: &mut StateWithDerivative<T>) {
        if !matches!(self.decoherence, DecoherenceMap::Identity) {
            state.map_both(|m| self.decoherence.apply(m));
        }
    }

    pub fn precess(&self, state: &mut StateWithDerivative<T>) {
        let dim = state.dim();
        for c in 0..dim {
            for r in 0..dim {
                let p = self.phases[(r, c)];
                let rho = state.rho[(r, c)];
                state.drho[(r, c)] = p * (state.drho[(r, c)] + self.dphase[(r, c)] * rho);
                state.rho[(r, c)] = p * rho;
            }
        }
    }

    pub fn kick(&self, state: &mut StateWithDerivative<T>, k: T) {
        if k == T::zero() {
            return;
        }
        let u = self.kick_unitary(k);
        let u_adj = u.adjoint();
        state.apply_unitary(&u, &u_adj);
    }

    /// Decoherence for `dt`, precession for `dt`, then a kick of strength `k_end`.
    pub fn evolve_interval(&self, state: &mut StateWithDerivative<T>, k_end: T) {
        self.decohere(state);
        self.precess(state);
        self.kick(state, k_end);
    }
}

/// Memoizes [`Propagators`] by `(spin, params, dt)`.
#[derive(Debug, Default)]
pub struct PropagatorCache<T: Real> {
    entries: HashMap<(u32, u64, u8, u64, u64), Arc<Propagators<T>>>,
}

impl<T: Real> PropagatorCache<T> {
    pub fn new() -> Self {
        PropagatorCache { entries: HashMap::new() }
    }

    pub fn get(&mut self, spin: SpinQuantum, params: DynamicsParams, dt: f64) -> Result<Arc<Propagators<T>>> {
        let kind = match params.decoherence {
            Decoherence::None => 0,
            Decoherence::PhaseDamping { .. } => 1,
            Decoherence::Superradiant { .. } => 2,
        };
        let key = (spin.twice_j(), params.omega.to_bits(), kind, params.decoherence.rate().to_bits(), dt.to_bits());
        if let Some(p) = self.entries.get(&key) {
            return Ok(p.clone());
        }
        let p = Arc::new(Propagators::new(spin, params, T::lit(dt))?);
        self.entries.insert(key, p.clone());
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Precession `exp(−iω dt Jz)` including the derivative term.
pub fn precess<T: Real>(state: &mut StateWithDerivative<T>, dt: f64, params: &DynamicsParams) -> Result<()> {
    let spin = SpinQuantum::from_twice(state.dim() as u32 - 1)?;
    let p = Propagators::new(spin, DynamicsParams { omega: params.omega, decoherence: Decoherence::None }, T::lit(dt))?;
    p.precess(state);
    Ok(())
}

/// Kick `exp(−ik Jy²/(2j+1))`.
pub fn kick<T: Real>(state: &mut StateWithDerivative<T>, k: f64) -> Result<()> {
    if !(k >= 0.0) {
        return Err(Error::InvalidParameter(format!("kick strength {k}")));
    }
    let spin = SpinQuantum::from_twice(state.dim() as u32 - 1)?;
    let factory = KickFactory::new(&SpinOperators::<T>::new(spin));
    let u = factory.unitary(T::lit(k));
    state.apply_unitary(&u, &u.adjoint());
    Ok(())
}

fn check_rate(dt: f64, gamma: f64) -> Result<()> {
    if !(dt >= 0.0) || !(gamma >= 0.0) || !dt.is_finite() || !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!("dt = {dt}, gamma = {gamma}")));
    }
    Ok(())
}

/// Phase damping over `dt`: elementwise factors `exp(−γ dt (m − m')²)`.
pub fn decohere_phase_damping<T: Real>(state: &mut StateWithDerivative<T>, dt: f64, gamma: f64) -> Result<()> {
    check_rate(dt, gamma)?;
    let f = phase_damping_factors(state.dim(), T::lit(gamma), T::lit(dt));
    let map = DecoherenceMap::Elementwise(f);
    state.map_both(|m| map.apply(m));
    Ok(())
}

/// Superradiant damping over `dt` via the per-band propagators.
pub fn decohere_superradiant<T: Real>(state: &mut StateWithDerivative<T>, dt: f64, gamma: f64) -> Result<()> {
    check_rate(dt, gamma)?;
    let spin = SpinQuantum::from_twice(state.dim() as u32 - 1)?;
    let ops = SpinOperators::<T>::new(spin);
    let map = DecoherenceMap::Banded(superradiant_bands(&ops, T::lit(gamma), T::lit(dt))?);
    state.map_both(|m| map.apply(m));
    Ok(())
}

/// One full interval: decoherence, precession, then the kick `k_end`.
pub fn evolve_interval<T: Real>(state: &mut StateWithDerivative<T>, dt: f64, k_end: f64, params: &DynamicsParams) -> Result<()> {
    if !(k_end >= 0.0) {
        return Err(Error::InvalidParameter(format!("kick strength {k_end}")));
    }
    let spin = SpinQuantum::from_twice(state.dim() as u32 - 1)?;
    let p = Propagators::new(spin, *params, T::lit(dt))?;
    p.evolve_interval(state, T::lit(k_end));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::{coherent_state, husimi_value, CoherentStateParams};
    fn start(j: f64, p: CoherentStateParams) -> StateWithDerivative<f64> {
        StateWithDerivative::from_density(coherent_state(SpinQuantum::new(j).unwrap(), p).unwrap())
    }

    #[test]
    fn zero_time_precession_is_identity() {
        let mut s = start(2.0, CoherentStateParams::new(1.0, 0.3).unwrap());
        let before = s.clone();
        precess(&mut s, 0.0, &DynamicsParams::unitary()).unwrap();
        assert!((s.rho() - before.rho()).norm() < 1e-15);
        assert_eq!(s.drho().norm(), 0.0);
    }

    #[test]
    fn precession_rotates_expectations() {
        let ops = SpinOperators::<f64>::new(SpinQuantum::new(2.0).unwrap());
        let mut s = start(2.0, CoherentStateParams::plus_y());
        precess(&mut s, 1.0, &DynamicsParams::unitary()).unwrap();
        let rho = s.density();
        assert!((rho.expectation(&ops.jx) + 2.0).abs() < 1e-12);
        assert!(rho.expectation(&ops.jy).abs() < 1e-12);
    }

    #[test]
    fn zero_kick_is_identity_and_kicks_compose() {
        let p = CoherentStateParams::new(0.8, -1.1).unwrap();
        let mut s = start(2.5, p);
        precess(&mut s, 0.7, &DynamicsParams::unitary()).unwrap();
        let before = s.clone();
        kick(&mut s, 0.0).unwrap();
        assert!((s.rho() - before.rho()).norm() < 1e-15);

        let mut a = before.clone();
        kick(&mut a, 1.3).unwrap();
        kick(&mut a, 2.4).unwrap();
        let mut b = before;
        kick(&mut b, 3.7).unwrap();
        assert!((a.rho() - b.rho()).norm() < 1e-12);
        assert!((a.drho() - b.drho()).norm() < 1e-12);
    }

    #[test]
    fn kick_unitary_matches_matrix_exponential() {
        for twice in 1..=8u32 {
            let ops = SpinOperators::<f64>::new(SpinQuantum::from_twice(twice).unwrap());
            let factory = KickFactory::new(&ops);
            let k = 3.3;
            let gen = ops.kick_generator() * Complex::new(0.0, -k);
            let reference = linalg::expm(&gen).unwrap();
            assert!((factory.unitary(k) - reference).norm() < 1e-12);
        }
    }

    #[test]
    fn plus_y_state_is_invariant_under_kicks_for_all_spins() {
        // |j, π/2, π/2⟩ is the Jy = j eigenstate, hence an eigenstate of Jy².
        for twice in 1..=12u32 {
            let spin = SpinQuantum::from_twice(twice).unwrap();
            let ops = SpinOperators::<f64>::new(spin);
            let psi = crate::spin::coherent_amplitudes::<f64>(spin, CoherentStateParams::plus_y()).unwrap();
            for k in [0.5, 3.0, 30.0] {
                let gen = ops.kick_generator() * Complex::new(0.0, -k);
                let kpsi = linalg::expm(&gen).unwrap() * &psi;
                let overlap = (psi.adjoint() * &kpsi)[(0, 0)].norm();
                assert!((overlap - 1.0).abs() < 1e-12, "j={} k={k}", spin.j());

                let mut s = StateWithDerivative::from_density(coherent_state::<f64>(spin, CoherentStateParams::plus_y()).unwrap());
                kick(&mut s, k).unwrap();
                let q = husimi_value(&s.density(), CoherentStateParams::plus_y()).unwrap();
                assert!((q - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn phase_damping_factors_j2() {
        let ops = SpinOperators::<f64>::new(SpinQuantum::new(2.0).unwrap());
        let mut s = StateWithDerivative::from_density(DensityMatrix::from_pure(
            &crate::spin::coherent_amplitudes::<f64>(ops.spin, CoherentStateParams::plus_y()).unwrap(),
        ));
        let before = s.rho().clone();
        decohere_phase_damping(&mut s, 1.0, 0.1).unwrap();
        let ratio = s.rho()[(4, 0)] / before[(4, 0)];
        assert!((ratio.re - (-1.6f64).exp()).abs() < 1e-15);
        assert!((ratio.re - 0.2019).abs() < 1e-4);
        for i in 0..5 {
            assert_eq!(s.rho()[(i, i)], before[(i, i)]);
        }
        let mut t = s.clone();
        decohere_phase_damping(&mut t, 0.0, 0.5).unwrap();
        assert_eq!(t, s);
        decohere_phase_damping(&mut t, 3.0, 0.0).unwrap();
        assert_eq!(t, s);
    }

    #[test]
    fn superradiant_spin_half_closed_form() {
        // j = 1/2: excited population decays as e^{−2γt}, coherence as e^{−γt}.
        let spin = SpinQuantum::new(0.5).unwrap();
        let (gamma, dt) = (0.3, 1.7);
        let mut s = StateWithDerivative::from_density(coherent_state::<f64>(spin, CoherentStateParams::new(1.0, 0.4).unwrap()).unwrap());
        let before = s.rho().clone();
        decohere_superradiant(&mut s, dt, gamma).unwrap();
        let excited = before[(1, 1)].re * (-2.0 * gamma * dt).exp();
        assert!((s.rho()[(1, 1)].re - excited).abs() < 1e-14);
        assert!((s.rho()[(0, 0)].re - (1.0 - excited)).abs() < 1e-14);
        let coh = before[(1, 0)] * (-gamma * dt).exp();
        assert!((s.rho()[(1, 0)] - coh).norm() < 1e-14);
    }

    #[test]
    fn superradiant_zero_rate_is_identity() {
        let mut s = start(2.0, CoherentStateParams::new(1.0, 0.3).unwrap());
        let before = s.clone();
        decohere_superradiant(&mut s, 5.0, 0.0).unwrap();
        assert!((s.rho() - before.rho()).norm() < 1e-15);
    }

    #[test]
    fn superradiant_long_time_reaches_ground_state() {
        let mut s = start(2.0, CoherentStateParams::new(0.3, 1.0).unwrap());
        decohere_superradiant(&mut s, 50.0, 1.0).unwrap();
        assert!((s.rho()[(0, 0)].re - 1.0).abs() < 1e-6);
        assert!((s.rho().trace().re - 1.0).abs() < 1e-10);
    }

    #[test]
    fn banded_map_matches_full_superoperator() {
        for twice in [1u32, 2, 4, 6] {
            let spin = SpinQuantum::from_twice(twice).unwrap();
            let ops = SpinOperators::<f64>::new(spin);
            for deco in [Decoherence::Superradiant { gamma: 0.07 }, Decoherence::PhaseDamping { gamma: 0.05 }] {
                let dt = 1.3;
                let map = decoherence_map(&ops, deco, dt).unwrap();
                let full = full_decoherence_propagator(&ops, deco, dt).unwrap();
                let rho = coherent_state::<f64>(spin, CoherentStateParams::new(1.2, -0.7).unwrap()).unwrap();
                let a = map.apply(rho.matrix());
                let b = apply_superoperator(&full, rho.matrix());
                assert!((&a - &b).norm() < 1e-10, "twice_j={twice} {deco:?}");
            }
        }
    }

    #[test]
    fn superradiant_superoperator_preserves_bands() {
        let ops = SpinOperators::<f64>::new(SpinQuantum::new(2.0).unwrap());
        let s = decoherence_superoperator(&ops, Decoherence::Superradiant { gamma: 1.0 });
        let n = 5;
        for col in 0..n * n {
            let (ci, cj) = (col % n, col / n);
            for row in 0..n * n {
                let (ri, rj) = (row % n, row / n);
                if s[(row, col)].norm() > 0.0 {
                    assert_eq!(ri as i64 - rj as i64, ci as i64 - cj as i64);
                }
            }
        }
    }

    #[test]
    fn precession_commutes_with_decoherence() {
        let spin = SpinQuantum::new(2.0).unwrap();
        for params in [DynamicsParams::superradiant(0.05), DynamicsParams::phase_damping(0.05)] {
            let p = Propagators::<f64>::new(spin, params, 0.9).unwrap();
            let mut a = start(2.0, CoherentStateParams::new(1.4, 0.2).unwrap());
            p.kick(&mut a, 2.0);
            let mut b = a.clone();
            p.decohere(&mut a);
            p.precess(&mut a);
            p.precess(&mut b);
            p.decohere(&mut b);
            assert!((a.rho() - b.rho()).norm() < 1e-12);
            assert!((a.drho() - b.drho()).norm() < 1e-12);
        }
    }

    #[test]
    fn precession_unitary_is_unitary() {
        let p = Propagators::<f64>::new(SpinQuantum::new(3.0).unwrap(), DynamicsParams::unitary(), 0.37).unwrap();
        let u = p.precession_unitary();
        assert!((&u * u.adjoint() - CMatrix::identity(7, 7)).norm() < 1e-12);
    }

    #[test]
    fn cache_reuses_entries() {
        let mut cache = PropagatorCache::<f64>::new();
        let spin = SpinQuantum::new(2.0).unwrap();
        let a = cache.get(spin, DynamicsParams::superradiant(0.01), 1.0).unwrap();
        let b = cache.get(spin, DynamicsParams::superradiant(0.01), 1.0).unwrap();
        let _ = cache.get(spin, DynamicsParams::superradiant(0.02), 1.0).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(cache.len(), 2);
    }

    #[test]
    fn rejects_negative_inputs() {
        let mut s = start(1.0, CoherentStateParams::plus_y());
        assert!(kick(&mut s, -1.0).is_err());
        assert!(decohere_phase_damping(&mut s, -1.0, 0.1).is_err());
        assert!(decohere_superradiant(&mut s, 1.0, -0.1).is_err());
    }
}
