//! Named experiment presets, baseline curves, training runs and their
//! on-disk artifact bundles.
//!
//! Every CSV written here starts with a `# config-sha256: <hex>` comment line
//! identifying the configuration that produced it, followed by a header row.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::DynamicsParams;
use crate::env::{simulate_policy, simulate_policy_with, EnvConfig, Environment, RewardMode};
use crate::error::{Error, Result};
use crate::metrology::{self, QfiPoint};
use crate::net::PolicyNetwork;
use crate::policy::KickPolicy;
use crate::quasiprob::{quasi_grid, QuasiGrid, QuasiKind};
use crate::spin::SpinQuantum;
use crate::trainer::{extract_policy, train_agent_in, TrainerConfig, TrainingTrace};

pub const PERIODIC_K: f64 = 30.0;
pub const PERIODIC_PERIOD: f64 = 1.0;
/// Damping rates of the gain sweep.
pub const GAMMA_SWEEP: [f64; 5] = [0.005, 0.01, 0.02, 0.05, 0.1];
pub const DEFAULT_GRID: (usize, usize) = (50, 100);

pub const PRESET_NAMES: [&str; 5] = ["superradiant-samples", "gains", "rescaled-qfi", "phase-damping", "learning-curve"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// Unkicked top.
    Top,
    /// Kicks of strength 30 every unit of time.
    PeriodicK30,
}

impl Baseline {
    pub fn policy(self, t_opt: f64) -> KickPolicy {
        match self {
            Baseline::Top => KickPolicy::new(),
            Baseline::PeriodicK30 => KickPolicy::periodic(PERIODIC_K, PERIODIC_PERIOD, t_opt),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Baseline::Top => "top",
            Baseline::PeriodicK30 => "periodic_k30",
        }
    }
}

/// Hyperparameters in the order agents, iterations, episodes, samples,
/// `t_step`, `k_step`, `T_opt`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HyperRow {
    pub agents: usize,
    pub iterations: usize,
    pub episodes: usize,
    pub samples: usize,
    pub t_step: f64,
    pub k_step: f64,
    pub t_opt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPreset {
    pub name: String,
    pub description: String,
    pub trainer: TrainerConfig,
    pub baselines: Vec<Baseline>,
    pub grid: (usize, usize),
}

impl ExperimentPreset {
    pub fn hyper_row(&self) -> HyperRow {
        let t = &self.trainer;
        HyperRow {
            agents: t.n_agents,
            iterations: t.n_iterations,
            episodes: t.n_episodes,
            samples: t.n_samples,
            t_step: t.env.t_step,
            k_step: t.env.k_step,
            t_opt: t.env.t_opt,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.trainer.seed = seed;
        self
    }

    pub fn with_reward_mode(mut self, mode: RewardMode) -> Self {
        self.trainer.env.reward_mode = mode;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.trainer.env.dynamics.decoherence = self.trainer.env.dynamics.decoherence.with_rate(gamma);
        self
    }

    pub fn config_hash(&self) -> String {
        config_hash(&self.trainer)
    }
}

fn build(name: &str, description: &str, dynamics: DynamicsParams, row: HyperRow, mode: RewardMode) -> ExperimentPreset {
    let spin = SpinQuantum::new(2.0).expect("valid spin");
    let mut env = EnvConfig::new(spin, dynamics, row.t_step, row.k_step, row.t_opt);
    env.reward_mode = mode;
    let mut trainer = TrainerConfig::new(env, row.iterations, row.episodes);
    trainer.n_agents = row.agents;
    trainer.n_samples = row.samples;
    ExperimentPreset {
        name: name.to_string(),
        description: description.to_string(),
        trainer,
        baselines: vec![Baseline::Top, Baseline::PeriodicK30],
        grid: DEFAULT_GRID,
    }
}

/// Looks up a named preset.
pub fn preset(name: &str) -> Result<ExperimentPreset> {
    let row = |agents, iterations, episodes, samples, t_step, k_step, t_opt| HyperRow {
        agents,
        iterations,
        episodes,
        samples,
        t_step,
        k_step,
        t_opt,
    };
    Ok(match name {
        "superradiant-samples" => build(
            name,
            "sample policies under superradiant damping",
            DynamicsParams::superradiant(0.01),
            row(5, 500, 50, 20, 0.2, 0.05, 100.0),
            RewardMode::FinalQfi,
        ),
        "gains" => build(
            name,
            "gains over the unkicked top and the kicked-top plateau",
            DynamicsParams::superradiant(0.02),
            row(20, 300, 40, 20, 1.0, 0.10, 100.0),
            RewardMode::FinalQfi,
        ),
        "rescaled-qfi" => build(
            name,
            "maximum of the time-rescaled QFI",
            DynamicsParams::superradiant(0.01),
            row(2, 500, 50, 20, 0.1, 0.10, 50.0),
            RewardMode::MaxRescaledQfi,
        ),
        "phase-damping" => build(
            name,
            "policies under phase damping",
            DynamicsParams::phase_damping(0.01),
            row(1, 1000, 100, 1, 1.0, 0.10, 100.0),
            RewardMode::FinalQfi,
        ),
        "learning-curve" => build(
            name,
            "learning-curve study",
            DynamicsParams::superradiant(0.02),
            row(5, 300, 100, 20, 1.0, 0.1, 100.0),
            RewardMode::FinalQfi,
        ),
        _ => return Err(Error::UnknownPreset(name.to_string())),
    })
}

pub fn presets() -> Vec<ExperimentPreset> {
    PRESET_NAMES.iter().map(|n| preset(n).expect("built-in preset")).collect()
}

/// Hex SHA-256 of the JSON serialization of `value`.
pub fn config_hash<S: Serialize>(value: &S) -> String {
    let json = serde_json::to_string(value).expect("serializable config");
    hex::encode(Sha256::digest(json.as_bytes()))
}

/// Writes `body` (header row first) behind a config-hash comment line.
pub fn write_csv(path: &Path, hash: &str, body: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, format!("# config-sha256: {hash}\n{body}"))?;
    Ok(())
}

/// Reads a CSV written by [`write_csv`], returning the hash and the body.
pub fn read_csv(path: &Path) -> Result<(String, String)> {
    let text = fs::read_to_string(path)?;
    let mut hash = String::new();
    let mut body = String::new();
    for line in text.lines() {
        if let Some(h) = line.strip_prefix("# config-sha256: ") {
            hash = h.trim().to_string();
        } else if !line.starts_with('#') {
            body.push_str(line);
            body.push('\n');
        }
    }
    Ok((hash, body))
}

fn parse_rows(body: &str, columns: usize) -> Result<Vec<Vec<f64>>> {
    body.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("'{s}': {e}"))))
                .collect::<Result<_>>()?;
            if vals.len() != columns {
                return Err(Error::Parse(format!("expected {columns} columns in '{line}'")));
            }
            Ok(vals)
        })
        .collect()
}

pub fn curve_csv(curve: &[QfiPoint]) -> String {
    let mut out = String::from("time,qfi\n");
    for p in curve {
        let _ = writeln!(out, "{},{}", p.time, p.qfi);
    }
    out
}

pub fn parse_curve_csv(body: &str) -> Result<Vec<QfiPoint>> {
    Ok(parse_rows(body, 2)?.into_iter().map(|r| QfiPoint { time: r[0], qfi: r[1] }).collect())
}

/// QFI on the grid times of `env` for a baseline schedule.
pub fn baseline_curve(env: &Environment<f64>, baseline: Baseline) -> Result<Vec<QfiPoint>> {
    Ok(simulate_policy(&baseline.policy(env.config().t_opt), env)?.qfi_trace)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineCurves {
    pub top: Vec<QfiPoint>,
    pub periodic: Vec<QfiPoint>,
}

impl BaselineCurves {
    pub const CSV_HEADER: &'static str = "time,top,periodic_k30";

    pub fn to_csv_body(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for (a, b) in self.top.iter().zip(&self.periodic) {
            let _ = writeln!(out, "{},{},{}", a.time, a.qfi, b.qfi);
        }
        out
    }

    pub fn from_csv_body(body: &str) -> Result<Self> {
        let rows = parse_rows(body, 3)?;
        Ok(BaselineCurves {
            top: rows.iter().map(|r| QfiPoint { time: r[0], qfi: r[1] }).collect(),
            periodic: rows.iter().map(|r| QfiPoint { time: r[0], qfi: r[2] }).collect(),
        })
    }
}

/// QFI curves of the unkicked and the periodically kicked top under the
/// preset's dynamics.
pub fn run_baselines(preset: &ExperimentPreset) -> Result<BaselineCurves> {
    let env = Environment::<f64>::new(preset.trainer.env.clone())?;
    Ok(BaselineCurves { top: baseline_curve(&env, Baseline::Top)?, periodic: baseline_curve(&env, Baseline::PeriodicK30)? })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KickRow {
    pub time: f64,
    /// Precession angle `ω t` reduced to `[0, 2π)`.
    pub phase: f64,
    pub k: f64,
}

/// Kicks of a policy next to `⟨J_x⟩/j` of the unkicked evolution.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KickTable {
    pub kicks: Vec<KickRow>,
    /// `(time, ⟨J_x⟩/j)` at every grid time.
    pub reference: Vec<(f64, f64)>,
}

impl KickTable {
    pub const CSV_HEADER: &'static str = "time,phase,k,reference_jx";

    /// One row per grid time; `k` is zero where the policy does not kick.
    pub fn to_csv_body(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        let mut kicks = self.kicks.iter().peekable();
        for &(time, jx) in &self.reference {
            let mut k = 0.0;
            let mut phase = f64::NAN;
            while let Some(row) = kicks.next_if(|r| (r.time - time).abs() < 1e-9) {
                k += row.k;
                phase = row.phase;
            }
            if phase.is_nan() {
                phase = 0.0;
            }
            let _ = writeln!(out, "{time},{phase},{k},{jx}");
        }
        out
    }
}

/// Builds the kick table of `policy` on `env`'s grid.
pub fn kick_distribution_table(policy: &KickPolicy, env: &Environment<f64>) -> Result<KickTable> {
    let cfg = env.config();
    let omega = cfg.dynamics.omega;
    let phase = |t: f64| (omega * t).rem_euclid(std::f64::consts::TAU);
    let mut per_slot = vec![0.0; cfg.n_slots()];
    for k in policy.kicks() {
        per_slot[cfg.slot_of(k.time)?] += k.strength;
    }
    let kicks = per_slot
        .iter()
        .enumerate()
        .filter(|(_, &k)| k != 0.0)
        .map(|(slot, &k)| KickRow { time: cfg.time_of(slot), phase: phase(cfg.time_of(slot)), k })
        .collect();
    let jx = crate::spin::SpinOperators::<f64>::new(cfg.j).jx;
    let j = cfg.j.j();
    let mut reference = Vec::with_capacity(per_slot.len());
    simulate_policy_with(&KickPolicy::new(), env, |slot, state| {
        reference.push((cfg.time_of(slot), (state.rho() * &jx).trace().re / j));
    })?;
    Ok(KickTable { kicks, reference })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    pub rl_final_qfi: f64,
    pub rl_max_rescaled: Option<f64>,
    pub top_max: f64,
    pub periodic_plateau: f64,
    pub unkicked: Option<f64>,
    pub plateau: Option<f64>,
}

pub fn gains(rl_curve: &[QfiPoint], baselines: &BaselineCurves) -> Result<Gains> {
    let rl_final_qfi = rl_curve.last().ok_or(Error::EmptyCurve)?.qfi;
    Ok(Gains {
        rl_final_qfi,
        rl_max_rescaled: metrology::max_rescaled(rl_curve),
        top_max: metrology::curve_max(&baselines.top)?,
        periodic_plateau: metrology::plateau(&baselines.periodic)?,
        unkicked: metrology::gain_unkicked(rl_final_qfi, &baselines.top).ok(),
        plateau: metrology::gain_plateau(rl_final_qfi, &baselines.periodic).ok(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentArtifacts {
    pub index: usize,
    pub seed: u64,
    pub trace: TrainingTrace,
    pub net: PolicyNetwork<f64>,
    pub policy: KickPolicy,
    pub reward: f64,
    pub qfi_curve: Vec<QfiPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct AgentSummary {
    index: usize,
    seed: u64,
    reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct BundleSummary {
    preset: ExperimentPreset,
    config_hash: String,
    n_agents: usize,
    best_agent: usize,
    gains: Gains,
}

impl AgentArtifacts {
    fn dir(root: &Path, index: usize) -> PathBuf {
        root.join(format!("agent_{index:02}"))
    }

    pub fn save(&self, root: &Path, hash: &str) -> Result<()> {
        let dir = Self::dir(root, self.index);
        fs::create_dir_all(&dir)?;
        write_csv(&dir.join("trace.csv"), hash, &self.trace.to_csv_body())?;
        write_csv(&dir.join("qfi.csv"), hash, &curve_csv(&self.qfi_curve))?;
        self.net.save(&dir.join("network.txt"))?;
        self.policy.save(&dir.join("policy.txt"))?;
        let summary = AgentSummary { index: self.index, seed: self.seed, reward: self.reward };
        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
        Ok(())
    }

    pub fn load(root: &Path, index: usize) -> Result<Self> {
        let dir = Self::dir(root, index);
        let summary: AgentSummary = serde_json::from_str(&fs::read_to_string(dir.join("summary.json"))?)?;
        Ok(AgentArtifacts {
            index,
            seed: summary.seed,
            trace: TrainingTrace::from_csv_body(&read_csv(&dir.join("trace.csv"))?.1)?,
            net: PolicyNetwork::load(&dir.join("network.txt"))?,
            policy: KickPolicy::load(&dir.join("policy.txt"))?,
            reward: summary.reward,
            qfi_curve: parse_curve_csv(&read_csv(&dir.join("qfi.csv"))?.1)?,
        })
    }
}

/// Everything produced by one training run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunArtifactBundle {
    pub preset: ExperimentPreset,
    pub baselines: BaselineCurves,
    pub agents: Vec<AgentArtifacts>,
    pub best_agent: usize,
    pub gains: Gains,
    pub kick_table: KickTable,
    pub wigner: QuasiGrid,
    pub husimi: QuasiGrid,
}

impl RunArtifactBundle {
    pub fn best(&self) -> &AgentArtifacts {
        &self.agents[self.best_agent]
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let hash = self.preset.config_hash();
        write_csv(&dir.join("baselines.csv"), &hash, &self.baselines.to_csv_body())?;
        for a in &self.agents {
            a.save(dir, &hash)?;
        }
        self.best().policy.save(&dir.join("policy.txt"))?;
        write_csv(&dir.join("qfi_rl.csv"), &hash, &curve_csv(&self.best().qfi_curve))?;
        write_csv(&dir.join("kick_table.csv"), &hash, &self.kick_table.to_csv_body())?;
        write_csv(&dir.join("wigner.csv"), &hash, &self.wigner.to_csv_body())?;
        write_csv(&dir.join("husimi.csv"), &hash, &self.husimi.to_csv_body())?;
        fs::write(dir.join("kick_table.json"), serde_json::to_string(&self.kick_table)?)?;
        let summary = BundleSummary {
            preset: self.preset.clone(),
            config_hash: hash,
            n_agents: self.agents.len(),
            best_agent: self.best_agent,
            gains: self.gains,
        };
        fs::write(dir.join("bundle.json"), serde_json::to_string_pretty(&summary)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let summary: BundleSummary = serde_json::from_str(&fs::read_to_string(dir.join("bundle.json"))?)?;
        let agents = (0..summary.n_agents).map(|i| AgentArtifacts::load(dir, i)).collect::<Result<Vec<_>>>()?;
        let (n_theta, n_phi) = summary.preset.grid;
        Ok(RunArtifactBundle {
            baselines: BaselineCurves::from_csv_body(&read_csv(&dir.join("baselines.csv"))?.1)?,
            agents,
            best_agent: summary.best_agent,
            gains: summary.gains,
            kick_table: serde_json::from_str(&fs::read_to_string(dir.join("kick_table.json"))?)?,
            wigner: load_grid(&dir.join("wigner.csv"), QuasiKind::Wigner, n_theta, n_phi)?,
            husimi: load_grid(&dir.join("husimi.csv"), QuasiKind::Husimi, n_theta, n_phi)?,
            preset: summary.preset,
        })
    }

    /// Replays the best policy and returns `|replayed − stored|` of the reward.
    pub fn replay_defect(&self) -> Result<f64> {
        let env = Environment::<f64>::new(self.preset.trainer.env.clone())?;
        let sim = simulate_policy(&self.best().policy, &env)?;
        Ok((sim.reward - self.best().reward).abs())
    }
}

pub fn load_grid(path: &Path, kind: QuasiKind, n_theta: usize, n_phi: usize) -> Result<QuasiGrid> {
    let rows = parse_rows(&read_csv(path)?.1, 3)?;
    if rows.len() != n_theta * n_phi {
        return Err(Error::DimensionMismatch { expected: n_theta * n_phi, got: rows.len() });
    }
    let values = nalgebra::DMatrix::from_row_iterator(n_theta, n_phi, rows.iter().map(|r| r[2]));
    Ok(QuasiGrid { kind, n_theta, n_phi, values })
}

/// Trains every agent of the preset, extracts a policy per agent and gathers
/// the bundle. With `out_dir` set, each agent's artifacts are written as soon
/// as it finishes, so a failing agent leaves the earlier ones on disk.
pub fn run_training(preset: &ExperimentPreset, out_dir: Option<&Path>) -> Result<RunArtifactBundle> {
    let cfg = &preset.trainer;
    cfg.validate()?;
    let env = Environment::<f64>::new(cfg.env.clone())?;
    let hash = preset.config_hash();
    let baselines = run_baselines(preset)?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        write_csv(&dir.join("baselines.csv"), &hash, &baselines.to_csv_body())?;
    }

    let mut agents = Vec::with_capacity(cfg.n_agents);
    for index in 0..cfg.n_agents {
        let seed = cfg.agent_seed(index);
        let trained = train_agent_in(cfg, &env, seed, |_, _| Ok(()))?;
        let extracted = extract_policy(&trained.net, cfg, &env, seed)?;
        let agent = AgentArtifacts {
            index,
            seed,
            trace: trained.trace,
            net: trained.net,
            policy: extracted.policy,
            reward: extracted.reward,
            qfi_curve: extracted.episode.qfi_trace,
        };
        if let Some(dir) = out_dir {
            agent.save(dir, &hash)?;
        }
        agents.push(agent);
    }
    let best_agent = (0..agents.len())
        .max_by(|&a, &b| agents[a].reward.total_cmp(&agents[b].reward).then(b.cmp(&a)))
        .ok_or_else(|| Error::InvalidParameter("no agents".into()))?;

    let best = &agents[best_agent];
    let final_state = simulate_policy(&best.policy, &env)?.final_state.density();
    let (n_theta, n_phi) = preset.grid;
    let bundle = RunArtifactBundle {
        gains: gains(&best.qfi_curve, &baselines)?,
        kick_table: kick_distribution_table(&best.policy, &env)?,
        wigner: quasi_grid(&final_state, QuasiKind::Wigner, n_theta, n_phi)?,
        husimi: quasi_grid(&final_state, QuasiKind::Husimi, n_theta, n_phi)?,
        preset: preset.clone(),
        baselines,
        agents,
        best_agent,
    };
    if let Some(dir) = out_dir {
        bundle.save(dir)?;
    }
    Ok(bundle)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub reward: f64,
    pub gain_unkicked: f64,
    pub gain_plateau: f64,
}

pub const SWEEP_CSV_HEADER: &str = "gamma,reward,gain_unkicked,gain_plateau";

/// Trains the preset at each damping rate and reports the gains of the best policy.
pub fn gamma_sweep(preset: &ExperimentPreset, gammas: &[f64], out_dir: Option<&Path>) -> Result<Vec<SweepRow>> {
    gammas
        .iter()
        .map(|&gamma| {
            let p = preset.clone().with_gamma(gamma);
            let sub = out_dir.map(|d| d.join(format!("gamma_{gamma}")));
            let bundle = run_training(&p, sub.as_deref())?;
            Ok(SweepRow {
                gamma,
                reward: bundle.best().reward,
                gain_unkicked: bundle.gains.unkicked.unwrap_or(f64::NAN),
                gain_plateau: bundle.gains.plateau.unwrap_or(f64::NAN),
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_CSV_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.gamma, r.reward, r.gain_unkicked, r.gain_plateau);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Decoherence;

    #[test]
    fn presets_match_hyperparameter_table() {
        let expected = [
            ("superradiant-samples", (5, 500, 50, 20, 0.2, 0.05, 100.0)),
            ("gains", (20, 300, 40, 20, 1.0, 0.10, 100.0)),
            ("rescaled-qfi", (2, 500, 50, 20, 0.1, 0.10, 50.0)),
            ("phase-damping", (1, 1000, 100, 1, 1.0, 0.10, 100.0)),
        ];
        for (name, (a, i, e, s, ts, ks, t)) in expected {
            let row = preset(name).unwrap().hyper_row();
            assert_eq!(
                row,
                HyperRow { agents: a, iterations: i, episodes: e, samples: s, t_step: ts, k_step: ks, t_opt: t },
                "{name}"
            );
        }
        let lc = preset("learning-curve").unwrap();
        assert_eq!(lc.trainer.env.t_step, 1.0);
        assert_eq!(lc.trainer.env.k_step, 0.1);
        assert_eq!(lc.trainer.env.dynamics.decoherence, Decoherence::Superradiant { gamma: 0.02 });
        assert_eq!(preset("rescaled-qfi").unwrap().trainer.env.reward_mode, RewardMode::MaxRescaledQfi);
        assert!(matches!(preset("nope"), Err(Error::UnknownPreset(_))));
        for p in presets() {
            p.trainer.validate().unwrap();
        }
    }

    #[test]
    fn unitary_top_baseline_is_quadratic() {
        let mut p = preset("gains").unwrap();
        p.trainer.env.dynamics = DynamicsParams::unitary();
        p.trainer.env.t_opt = 10.0;
        let curves = run_baselines(&p).unwrap();
        assert_eq!(curves.top.len(), 11);
        for pt in &curves.top {
            let expected = 4.0 * pt.time * pt.time;
            assert!((pt.qfi - expected).abs() <= 1e-8 * expected.max(1.0));
        }
    }

    #[test]
    fn damped_top_rises_then_decays() {
        let p = preset("superradiant-samples").unwrap();
        let curves = run_baselines(&p).unwrap();
        let max = metrology::curve_max(&curves.top).unwrap();
        let last = curves.top.last().unwrap().qfi;
        assert!((max - 1003.965).abs() < 1e-2, "{max}");
        assert!(last < 0.1 * max);
        let plateau = metrology::plateau(&curves.periodic).unwrap();
        assert!(plateau > 0.0);
        // regression values of the simulation
        assert!((last - 50.8863).abs() < 1e-3, "{last}");
        assert!((plateau / last - 6.4794).abs() < 1e-3, "{}", plateau / last);

        let stronger = run_baselines(&p.clone().with_gamma(0.02)).unwrap();
        let last = stronger.top.last().unwrap().qfi;
        assert!(metrology::plateau(&stronger.periodic).unwrap() > 10.0 * last);
    }

    #[test]
    fn kick_table_examples() {
        let p = preset("gains").unwrap();
        let env = Environment::<f64>::new(p.trainer.env.clone()).unwrap();
        let empty = kick_distribution_table(&KickPolicy::new(), &env).unwrap();
        assert!(empty.kicks.is_empty());
        assert_eq!(empty.reference.len(), 101);
        assert!(empty.reference[0].1.abs() < 1e-12);
        // a quarter turn takes +y to −x
        assert!((empty.reference[1].1 + 1.0).abs() < 0.05);

        let periodic = kick_distribution_table(&Baseline::PeriodicK30.policy(100.0), &env).unwrap();
        assert_eq!(periodic.kicks.len(), 99);
        assert!(periodic.kicks.iter().all(|r| r.k == 30.0));
        let csv = periodic.to_csv_body();
        assert_eq!(csv.lines().count(), 102);
        assert!(csv.starts_with(KickTable::CSV_HEADER));
    }

    #[test]
    fn csv_helpers_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let curve = vec![QfiPoint { time: 0.0, qfi: 0.0 }, QfiPoint { time: 0.1, qfi: 1.0 / 3.0 }];
        write_csv(&path, "abc", &curve_csv(&curve)).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# config-sha256: abc\ntime,qfi\n"));
        let (hash, body) = read_csv(&path).unwrap();
        assert_eq!(hash, "abc");
        assert_eq!(parse_curve_csv(&body).unwrap(), curve);
    }

    #[test]
    fn config_hash_tracks_changes() {
        let a = preset("gains").unwrap();
        let b = a.clone().with_seed(9);
        assert_eq!(a.config_hash(), preset("gains").unwrap().config_hash());
        assert_ne!(a.config_hash(), b.config_hash());
        assert_eq!(a.config_hash().len(), 64);
    }

    fn small_preset() -> ExperimentPreset {
        let mut p = preset("phase-damping").unwrap();
        p.trainer.n_iterations = 2;
        p.trainer.n_episodes = 6;
        p.trainer.n_samples = 2;
        p.trainer.n_agents = 2;
        p.trainer.hidden = 8;
        p.trainer.env.t_opt = 6.0;
        p.grid = (6, 12);
        p
    }

    #[test]
    fn bundle_round_trip() {
        let p = small_preset();
        let dir = tempfile::tempdir().unwrap();
        let bundle = run_training(&p, Some(dir.path())).unwrap();
        assert_eq!(bundle.agents.len(), 2);
        let loaded = RunArtifactBundle::load(dir.path()).unwrap();
        assert_eq!(loaded, bundle);
        assert!(loaded.replay_defect().unwrap() < 1e-9);
        let (hash, _) = read_csv(&dir.path().join("agent_01").join("trace.csv")).unwrap();
        assert_eq!(hash, p.config_hash());
    }
}
