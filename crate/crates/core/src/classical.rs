//! Classical limit of the damped kicked top: maps on the unit sphere and
//! ensembles drawn from the Husimi distribution of a coherent state.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::Decoherence;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::policy::KickPolicy;
use crate::spin::{CoherentStateParams, SpinQuantum};

const NORM_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl PhasePoint {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let p = PhasePoint { x, y, z };
        if (p.norm() - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidParameter(format!("point ({x}, {y}, {z}) is not on the unit sphere")));
        }
        Ok(p)
    }

    pub fn from_angles(theta: f64, phi: f64) -> Self {
        PhasePoint { x: theta.sin() * phi.cos(), y: theta.sin() * phi.sin(), z: theta.cos() }
    }

    pub fn from_params(p: &CoherentStateParams) -> Self {
        Self::from_angles(p.theta, p.phi)
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn theta(&self) -> f64 {
        self.z.clamp(-1.0, 1.0).acos()
    }

    pub fn phi(&self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn dot(&self, o: &PhasePoint) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }
}

/// Rotation about z by `alpha`.
pub fn classical_precession(p: PhasePoint, alpha: f64) -> PhasePoint {
    let (s, c) = alpha.sin_cos();
    PhasePoint { x: c * p.x - s * p.y, y: s * p.x + c * p.y, z: p.z }
}

/// Rotation about y by the angle `k·y`.
pub fn classical_kick(p: PhasePoint, k: f64) -> PhasePoint {
    let (s, c) = (k * p.y).sin_cos();
    PhasePoint { x: p.z * s + p.x * c, y: p.y, z: p.z * c - p.x * s }
}

/// Superradiant relaxation over time `t`; the azimuth is kept and the poles
/// are fixed points.
pub fn classical_damping(p: PhasePoint, j: SpinQuantum, gamma: f64, t: f64) -> PhasePoint {
    if p.z <= -1.0 {
        return p;
    }
    let tau = (2.0 * j.j() + 1.0) * gamma * t;
    // written with e^{-2τ} so that large τ does not overflow
    let decay = (-2.0 * tau).exp();
    let up = (1.0 + p.z) * decay;
    let down = 1.0 - p.z;
    let z = ((up - down) / (up + down)).clamp(-1.0, 1.0);
    let rho_old = p.x.hypot(p.y);
    if rho_old == 0.0 {
        return PhasePoint { x: 0.0, y: 0.0, z: z.signum() };
    }
    let scale = (1.0 - z * z).max(0.0).sqrt() / rho_old;
    PhasePoint { x: p.x * scale, y: p.y * scale, z }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub points: Vec<PhasePoint>,
}

impl Ensemble {
    pub const DEFAULT_SIZE: usize = 1_000_000;
    pub const CSV_HEADER: &'static str = "phi,z";

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mean(&self) -> [f64; 3] {
        let n = self.points.len() as f64;
        let s = self.points.iter().fold([0.0; 3], |a, p| [a[0] + p.x, a[1] + p.y, a[2] + p.z]);
        [s[0] / n, s[1] / n, s[2] / n]
    }

    /// `1 − |mean direction|`.
    pub fn circular_variance(&self) -> f64 {
        let m = self.mean();
        1.0 - (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt()
    }

    pub fn max_norm_defect(&self) -> f64 {
        self.points.iter().map(|p| (p.norm() - 1.0).abs()).fold(0.0, f64::max)
    }

    pub fn to_csv_body(&self) -> String {
        let mut out = String::with_capacity(self.points.len() * 40);
        out.push_str(Self::CSV_HEADER);
        out.push('\n');
        for p in &self.points {
            let _ = writeln!(out, "{},{}", p.phi(), p.z);
        }
        out
    }
}

/// Rotation taking the north pole to `dir` (Rodrigues form, `dir ≠ south pole`
/// handled separately).
fn rotate_from_north(v: [f64; 3], dir: &PhasePoint) -> PhasePoint {
    let [x, y, z] = v;
    let c = dir.z;
    if c < -1.0 + 1e-15 {
        return PhasePoint { x, y: -y, z: -z };
    }
    // axis = ẑ × dir = (−dir.y, dir.x, 0), rotation angle = acos(c)
    let f = 1.0 / (1.0 + c);
    let (ax, ay) = (-dir.y, dir.x);
    // R = cI + [a]× + f·a aᵀ
    let rx = c * x + ay * z + f * ax * (ax * x + ay * y);
    let ry = c * y - ax * z + f * ay * (ax * x + ay * y);
    let rz = c * z + (ax * y - ay * x);
    PhasePoint { x: rx, y: ry, z: rz }
}

/// Rejection sampling of `n` points with density `∝ ((1 + cos Θ)/2)^{2j}`,
/// `Θ` being the angle to the coherent-state direction.
pub fn sample_husimi<R: Rng + ?Sized>(
    initial: &CoherentStateParams,
    j: SpinQuantum,
    n: usize,
    rng: &mut R,
) -> Result<Ensemble> {
    if n == 0 {
        return Err(Error::InvalidParameter("ensemble size must be at least 1".into()));
    }
    initial.validate()?;
    let dir = PhasePoint::from_params(initial);
    let power = 2.0 * j.j();
    let mut points = Vec::with_capacity(n);
    while points.len() < n {
        let u: f64 = rng.random_range(-1.0..=1.0);
        let accept = ((1.0 + u) / 2.0).powf(power);
        if rng.random::<f64>() >= accept {
            continue;
        }
        let az: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let s = (1.0 - u * u).max(0.0).sqrt();
        points.push(rotate_from_north([s * az.cos(), s * az.sin(), u], &dir));
    }
    Ok(Ensemble { points })
}

/// Applies the policy on the environment grid: at every grid time the
/// scheduled kicks, then damping for one interval, then precession.
pub fn propagate_point(p: PhasePoint, per_slot: &[f64], config: &EnvConfig) -> PhasePoint {
    let gamma = match config.dynamics.decoherence {
        Decoherence::Superradiant { gamma } => gamma,
        _ => 0.0,
    };
    let alpha = config.dynamics.omega * config.t_step;
    let mut q = p;
    for &k in per_slot {
        if k != 0.0 {
            q = classical_kick(q, k);
        }
        if gamma > 0.0 {
            q = classical_damping(q, config.j, gamma, config.t_step);
        }
        q = classical_precession(q, alpha);
    }
    q
}

/// Kick strength per grid slot.
pub fn kicks_per_slot(policy: &KickPolicy, config: &EnvConfig) -> Result<Vec<f64>> {
    let mut per_slot = vec![0.0; config.n_slots()];
    for k in policy.kicks() {
        per_slot[config.slot_of(k.time)?] += k.strength;
    }
    Ok(per_slot)
}

/// Propagates every point of the ensemble over the whole horizon. Phase
/// damping has no classical counterpart here and is ignored.
pub fn propagate_ensemble(e: &Ensemble, policy: &KickPolicy, config: &EnvConfig) -> Result<Ensemble> {
    config.validate()?;
    let per_slot = kicks_per_slot(policy, config)?;
    let points = e.points.par_iter().map(|&p| propagate_point(p, &per_slot, config)).collect();
    Ok(Ensemble { points })
}
