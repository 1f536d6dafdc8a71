//! The generalized kicked top as a deterministic episodic environment with
//! two actions: add `k_step` to the current kick, or advance one time step.

use serde::{Deserialize, Serialize};

use crate::dynamics::{DynamicsParams, Propagators, StateWithDerivative};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::metrology::{self, QfiPoint};
use crate::policy::KickPolicy;
use crate::scalar::Real;
use crate::spin::{coherent_state, CoherentStateParams, SpinQuantum};

/// Default cap on the total accumulated kicking strength of an episode.
pub const DEFAULT_KICK_BUDGET: f64 = 15000.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Kick,
    GoOn,
}

impl Action {
    /// Output-neuron index: `Kick` is 0, `GoOn` is 1.
    pub fn index(self) -> usize {
        match self {
            Action::Kick => 0,
            Action::GoOn => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// QFI at the horizon.
    #[default]
    FinalQfi,
    /// Maximum of `QFI(t) / t` over the grid.
    MaxRescaledQfi,
}

impl std::str::FromStr for RewardMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "final_qfi" | "final-qfi" => Ok(RewardMode::FinalQfi),
            "max_rescaled_qfi" | "max-rescaled-qfi" | "rescaled" => Ok(RewardMode::MaxRescaledQfi),
            other => Err(Error::Parse(format!("unknown reward mode '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub j: SpinQuantum,
    pub dynamics: DynamicsParams,
    pub t_step: f64,
    pub k_step: f64,
    pub t_opt: f64,
    #[serde(default = "default_budget")]
    pub kick_budget: f64,
    /// Optional cap on the number of `Kick` actions per time slot.
    #[serde(default)]
    pub max_kicks_per_slot: Option<u32>,
    #[serde(default)]
    pub reward_mode: RewardMode,
    #[serde(default)]
    pub initial_state: CoherentStateParams,
}

fn default_budget() -> f64 {
    DEFAULT_KICK_BUDGET
}

impl EnvConfig {
    pub fn new(j: SpinQuantum, dynamics: DynamicsParams, t_step: f64, k_step: f64, t_opt: f64) -> Self {
        EnvConfig {
            j,
            dynamics,
            t_step,
            k_step,
            t_opt,
            kick_budget: DEFAULT_KICK_BUDGET,
            max_kicks_per_slot: None,
            reward_mode: RewardMode::FinalQfi,
            initial_state: CoherentStateParams::plus_y(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dynamics.validate()?;
        self.initial_state.validate()?;
        if !(self.t_step > 0.0) || !(self.t_opt > 0.0) || !self.t_opt.is_finite() {
            return Err(Error::InvalidParameter(format!("t_step = {}, t_opt = {}", self.t_step, self.t_opt)));
        }
        let ratio = self.t_opt / self.t_step;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
            return Err(Error::InvalidParameter(format!(
                "t_step = {} does not divide t_opt = {}",
                self.t_step, self.t_opt
            )));
        }
        if !(self.k_step > 0.0) || !(self.kick_budget > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "k_step = {}, kick_budget = {}",
                self.k_step, self.kick_budget
            )));
        }
        Ok(())
    }

    /// Number of `GoOn` steps in an episode.
    pub fn n_slots(&self) -> usize {
        (self.t_opt / self.t_step).round() as usize
    }

    pub fn obs_dim(&self) -> usize {
        2 * self.j.dim() * self.j.dim()
    }

    /// Grid index of `time`, or an error if it is not a grid point before the horizon.
    pub fn slot_of(&self, time: f64) -> Result<usize> {
        let x = time / self.t_step;
        let idx = x.round();
        if !(time >= 0.0) || (x - idx).abs() > 1e-9 * idx.max(1.0) || idx as usize >= self.n_slots() {
            return Err(Error::OffGrid(time));
        }
        Ok(idx as usize)
    }

    pub fn time_of(&self, slot: usize) -> f64 {
        slot as f64 * self.t_step
    }
}

/// Real parts then imaginary parts of `ρ`, row-major in the `|j,m⟩` basis.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation<T>(Vec<T>);

impl<T: Real> Observation<T> {
    pub fn from_rho(rho: &CMatrix<T>) -> Self {
        let n = rho.nrows();
        let mut v = Vec::with_capacity(2 * n * n);
        for r in 0..n {
            for c in 0..n {
                v.push(rho[(r, c)].re);
            }
        }
        for r in 0..n {
            for c in 0..n {
                v.push(rho[(r, c)].im);
            }
        }
        Observation(v)
    }

    pub fn from_vec(v: Vec<T>) -> Self {
        Observation(v)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Immutable, shareable part of the environment.
#[derive(Clone, Debug)]
pub struct Environment<T: Real> {
    config: EnvConfig,
    props: Propagators<T>,
    step_kick: CMatrix<T>,
    step_kick_adj: CMatrix<T>,
    initial: StateWithDerivative<T>,
}

impl<T: Real> Environment<T> {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let props = Propagators::new(config.j, config.dynamics, T::lit(config.t_step))?;
        let step_kick = props.kick_unitary(T::lit(config.k_step));
        let step_kick_adj = step_kick.adjoint();
        let initial = StateWithDerivative::from_density(coherent_state(config.j, config.initial_state)?);
        Ok(Environment { config, props, step_kick, step_kick_adj, initial })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn propagators(&self) -> &Propagators<T> {
        &self.props
    }

    pub fn obs_dim(&self) -> usize {
        self.config.obs_dim()
    }

    pub fn initial_state(&self) -> &StateWithDerivative<T> {
        &self.initial
    }

    /// Fresh episode at `t = 0` with `∂ρ/∂ω = 0`.
    pub fn reset(&self) -> (EnvState<'_, T>, Observation<T>) {
        let state = EnvState {
            env: self,
            state: self.initial.clone(),
            grid_index: 0,
            kicks_in_slot: 0,
            total_kicks: 0,
            qfi_trace: vec![QfiPoint { time: 0.0, qfi: 0.0 }],
            policy: KickPolicy::new(),
            done: false,
            reward: None,
        };
        let obs = state.observation();
        (state, obs)
    }

    fn reward(&self, trace: &[QfiPoint]) -> f64 {
        match self.config.reward_mode {
            RewardMode::FinalQfi => trace.last().map_or(0.0, |p| p.qfi),
            RewardMode::MaxRescaledQfi => metrology::max_rescaled(trace).unwrap_or(0.0),
        }
    }
}

#[derive(Clone, Debug)]
pub struct StepOutcome<T> {
    pub observation: Observation<T>,
    pub reward: f64,
    pub done: bool,
}

/// Mutable episode bookkeeping; owned by one rollout at a time.
#[derive(Clone, Debug)]
pub struct EnvState<'a, T: Real> {
    env: &'a Environment<T>,
    state: StateWithDerivative<T>,
    grid_index: usize,
    kicks_in_slot: u32,
    total_kicks: u64,
    qfi_trace: Vec<QfiPoint>,
    policy: KickPolicy,
    done: bool,
    reward: Option<f64>,
}

impl<'a, T: Real> EnvState<'a, T> {
    pub fn observation(&self) -> Observation<T> {
        Observation::from_rho(self.state.rho())
    }

    pub fn state(&self) -> &StateWithDerivative<T> {
        &self.state
    }

    pub fn grid_index(&self) -> usize {
        self.grid_index
    }

    pub fn time(&self) -> f64 {
        self.env.config.time_of(self.grid_index)
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn reward(&self) -> Option<f64> {
        self.reward
    }

    pub fn qfi_trace(&self) -> &[QfiPoint] {
        &self.qfi_trace
    }

    /// Kicks committed so far (the current slot is added once it is left).
    pub fn policy(&self) -> &KickPolicy {
        &self.policy
    }

    pub fn accumulated_kick_current_slot(&self) -> f64 {
        self.kicks_in_slot as f64 * self.env.config.k_step
    }

    pub fn total_kick(&self) -> f64 {
        self.total_kicks as f64 * self.env.config.k_step
    }

    /// Whether a `Kick` action would be accepted now.
    pub fn kick_allowed(&self) -> bool {
        let cfg = &self.env.config;
        !self.done
            && ((self.total_kicks + 1) as f64) * cfg.k_step < cfg.kick_budget
            && cfg.max_kicks_per_slot.is_none_or(|cap| self.kicks_in_slot < cap)
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome<T>> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        match action {
            Action::Kick => {
                if !self.kick_allowed() {
                    return Err(Error::KickMasked);
                }
                self.state.apply_unitary(&self.env.step_kick, &self.env.step_kick_adj);
                self.kicks_in_slot += 1;
                self.total_kicks += 1;
            }
            Action::GoOn => {
                let cfg = &self.env.config;
                if self.kicks_in_slot > 0 {
                    self.policy.push(self.time(), self.kicks_in_slot as f64 * cfg.k_step);
                }
                self.kicks_in_slot = 0;
                self.env.props.evolve_interval(&mut self.state, T::zero());
                self.grid_index += 1;
                let q = metrology::qfi(&self.state).to_f64_lossy();
                self.qfi_trace.push(QfiPoint { time: self.time(), qfi: q });
                if self.grid_index >= cfg.n_slots() {
                    self.done = true;
                    self.reward = Some(self.env.reward(&self.qfi_trace));
                }
            }
        }
        Ok(StepOutcome {
            observation: self.observation(),
            reward: self.reward.unwrap_or(0.0),
            done: self.done,
        })
    }
}

/// One finished episode: the `(observation, action)` pairs and the final reward.
#[derive(Clone, Debug)]
pub struct EpisodeRecord<T> {
    pub steps: Vec<(Observation<T>, Action)>,
    pub reward: f64,
    pub policy: KickPolicy,
    pub qfi_trace: Vec<QfiPoint>,
}

/// Runs one episode, asking `choose(observation, kick_allowed)` for each action.
/// A `Kick` returned while kicks are masked is replaced by `GoOn`.
pub fn run_episode<T: Real>(
    env: &Environment<T>,
    mut choose: impl FnMut(&Observation<T>, bool) -> Action,
) -> Result<EpisodeRecord<T>> {
    let (mut state, mut obs) = env.reset();
    let mut steps = Vec::new();
    loop {
        let allowed = state.kick_allowed();
        let mut action = choose(&obs, allowed);
        if action == Action::Kick && !allowed {
            action = Action::GoOn;
        }
        let out = state.step(action)?;
        steps.push((obs, action));
        obs = out.observation;
        if out.done {
            return Ok(EpisodeRecord {
                steps,
                reward: out.reward,
                policy: state.policy,
                qfi_trace: state.qfi_trace,
            });
        }
    }
}

/// Result of replaying a [`KickPolicy`].
#[derive(Clone, Debug)]
pub struct Simulation<T: Real> {
    pub qfi_trace: Vec<QfiPoint>,
    pub reward: f64,
    pub final_state: StateWithDerivative<T>,
}

/// Replays a kick schedule on the environment's grid. Kicks at the same grid
/// time are merged into one kick of the summed strength.
pub fn simulate_policy<T: Real>(policy: &KickPolicy, env: &Environment<T>) -> Result<Simulation<T>> {
    simulate_policy_with(policy, env, |_, _| {})
}

/// Like [`simulate_policy`], calling `visit(slot, state)` on the state at every
/// grid time, after the kicks scheduled there.
pub fn simulate_policy_with<T: Real>(
    policy: &KickPolicy,
    env: &Environment<T>,
    mut visit: impl FnMut(usize, &StateWithDerivative<T>),
) -> Result<Simulation<T>> {
    let cfg = env.config();
    let n = cfg.n_slots();
    let mut per_slot = vec![0.0f64; n];
    for k in policy.kicks() {
        if !(k.strength >= 0.0) {
            return Err(Error::InvalidParameter(format!("negative kick strength {}", k.strength)));
        }
        per_slot[cfg.slot_of(k.time)?] += k.strength;
    }
    let props = env.propagators();
    let mut state = env.initial_state().clone();
    let mut trace = Vec::with_capacity(n + 1);
    trace.push(QfiPoint { time: 0.0, qfi: 0.0 });
    for (slot, &k) in per_slot.iter().enumerate() {
        props.kick(&mut state, T::lit(k));
        visit(slot, &state);
        props.evolve_interval(&mut state, T::zero());
        trace.push(QfiPoint { time: cfg.time_of(slot + 1), qfi: metrology::qfi(&state).to_f64_lossy() });
    }
    visit(n, &state);
    let reward = env.reward(&trace);
    Ok(Simulation { qfi_trace: trace, reward, final_state: state })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pure_config(j: f64, t_opt: f64) -> EnvConfig {
        EnvConfig::new(SpinQuantum::new(j).unwrap(), DynamicsParams::unitary(), 1.0, 0.5, t_opt)
    }

    #[test]
    fn reset_is_deterministic_and_matches_coherent_state() {
        let env = Environment::<f64>::new(pure_config(2.0, 5.0)).unwrap();
        let (s1, o1) = env.reset();
        let (_, o2) = env.reset();
        assert_eq!(o1, o2);
        assert_eq!(metrology::qfi(s1.state()), 0.0);
        let rho = coherent_state::<f64>(SpinQuantum::new(2.0).unwrap(), CoherentStateParams::plus_y()).unwrap();
        assert_eq!(o1, Observation::from_rho(rho.matrix()));
        assert_eq!(o1.len(), 50);
    }

    #[test]
    fn all_go_on_gives_pure_top_law() {
        for j in [1.0, 2.0, 3.0] {
            let env = Environment::<f64>::new(pure_config(j, 7.0)).unwrap();
            let rec = run_episode(&env, |_, _| Action::GoOn).unwrap();
            assert!((rec.reward - 2.0 * j * 49.0).abs() < 1e-8 * 2.0 * j * 49.0);
            assert!(rec.policy.is_empty());
            assert_eq!(rec.steps.len(), 7);
        }
    }

    #[test]
    fn rescaled_mode_on_pure_top() {
        let mut cfg = pure_config(2.0, 6.0);
        cfg.reward_mode = RewardMode::MaxRescaledQfi;
        let env = Environment::<f64>::new(cfg).unwrap();
        let rec = run_episode(&env, |_, _| Action::GoOn).unwrap();
        assert!((rec.reward - 2.0 * 2.0 * 6.0).abs() < 1e-9);
    }

    #[test]
    fn stepping_done_episode_fails() {
        let env = Environment::<f64>::new(pure_config(1.0, 1.0)).unwrap();
        let (mut s, _) = env.reset();
        assert!(s.step(Action::GoOn).unwrap().done);
        assert!(matches!(s.step(Action::GoOn), Err(Error::EpisodeDone)));
        assert!(matches!(s.step(Action::Kick), Err(Error::EpisodeDone)));
    }

    #[test]
    fn budget_masks_kicks() {
        let mut cfg = pure_config(1.0, 3.0);
        cfg.kick_budget = 1.2; // at most two kicks of 0.5
        let env = Environment::<f64>::new(cfg).unwrap();
        let (mut s, _) = env.reset();
        s.step(Action::Kick).unwrap();
        s.step(Action::Kick).unwrap();
        assert!(!s.kick_allowed());
        assert!(matches!(s.step(Action::Kick), Err(Error::KickMasked)));
        assert!(s.total_kick() < 1.2);
        // masked kicks turn into GoOn inside run_episode
        let rec = run_episode(&env, |_, _| Action::Kick).unwrap();
        assert!(rec.policy.total_strength() < 1.2);
        assert_eq!(rec.policy.total_strength(), 1.0);
    }

    #[test]
    fn per_slot_cap() {
        let mut cfg = pure_config(1.0, 2.0);
        cfg.max_kicks_per_slot = Some(3);
        let env = Environment::<f64>::new(cfg).unwrap();
        let rec = run_episode(&env, |_, _| Action::Kick).unwrap();
        let strengths: Vec<f64> = rec.policy.kicks().iter().map(|k| k.strength).collect();
        assert_eq!(strengths, vec![1.5, 1.5]);
    }

    #[test]
    fn off_grid_policy_rejected() {
        let env = Environment::<f64>::new(pure_config(1.0, 4.0)).unwrap();
        let mut p = KickPolicy::new();
        p.push(0.5, 1.0);
        assert!(matches!(simulate_policy(&p, &env), Err(Error::OffGrid(_))));
        let mut p = KickPolicy::new();
        p.push(4.0, 1.0);
        assert!(matches!(simulate_policy(&p, &env), Err(Error::OffGrid(_))));
    }

    #[test]
    fn config_validation() {
        let mut cfg = pure_config(1.0, 4.0);
        cfg.t_step = 0.3;
        assert!(Environment::<f64>::new(cfg.clone()).is_err());
        cfg.t_step = 0.2;
        assert!(Environment::<f64>::new(cfg.clone()).is_ok());
        cfg.k_step = 0.0;
        assert!(Environment::<f64>::new(cfg).is_err());
    }
}
