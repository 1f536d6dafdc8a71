//! Cross-entropy policy search: sample episodes with the stochastic network,
//! keep the best share, fit the network to their `(observation, action)`
//! pairs, repeat. The final deterministic policy is the best of a few sampled
//! episodes.
//!
//! Every random draw comes from a ChaCha stream keyed by
//! `(seed, purpose, iteration, episode)`, so results do not depend on how
//! rollouts are scheduled across threads.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{run_episode, EnvConfig, Environment, EpisodeRecord};
use crate::error::{Error, Result};
use crate::net::{PolicyNetwork, TrainBatch, DEFAULT_HIDDEN, DEFAULT_LEARNING_RATE};
use crate::policy::KickPolicy;
use crate::scalar::Real;

pub const DEFAULT_ELITE_SHARE: f64 = 0.10;
pub const DEFAULT_MINIBATCH: usize = 128;
/// Episodes sampled per agent for each point of a stability study.
pub const STUDY_SAMPLES_PER_AGENT: usize = 20;

const TAG_ROLLOUT: u64 = 1;
const TAG_SHUFFLE: u64 = 2;
const TAG_EXTRACT: u64 = 3;
const TAG_EVAL: u64 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub n_iterations: usize,
    pub n_episodes: usize,
    pub elite_share: f64,
    pub n_samples: usize,
    pub n_agents: usize,
    pub seed: u64,
    pub hidden: usize,
    pub learning_rate: f64,
    pub minibatch: usize,
    pub epochs_per_iteration: usize,
    pub env: EnvConfig,
}

impl TrainerConfig {
    pub fn new(env: EnvConfig, n_iterations: usize, n_episodes: usize) -> Self {
        TrainerConfig {
            n_iterations,
            n_episodes,
            elite_share: DEFAULT_ELITE_SHARE,
            n_samples: 20,
            n_agents: 1,
            seed: 0,
            hidden: DEFAULT_HIDDEN,
            learning_rate: DEFAULT_LEARNING_RATE,
            minibatch: DEFAULT_MINIBATCH,
            epochs_per_iteration: 1,
            env,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        if !(self.elite_share > 0.0 && self.elite_share <= 1.0) {
            return Err(Error::InvalidParameter(format!("elite_share = {}", self.elite_share)));
        }
        if self.n_episodes == 0 || n_elite(self.elite_share, self.n_episodes) == 0 {
            return Err(Error::InvalidParameter("at least one elite episode is required".into()));
        }
        if self.n_samples == 0 || self.minibatch == 0 || self.hidden == 0 {
            return Err(Error::InvalidParameter("n_samples, minibatch and hidden must be positive".into()));
        }
        Ok(())
    }

    /// Seed of agent `index` in a multi-agent run.
    pub fn agent_seed(&self, index: usize) -> u64 {
        self.seed.wrapping_add(index as u64)
    }
}

/// Deterministic RNG for one purpose/iteration/episode combination.
pub fn stream_rng(seed: u64, tag: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (chunk, v) in key.chunks_mut(8).zip([seed, tag, a, b]) {
        chunk.copy_from_slice(&v.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// `ceil(share · n)`, guarded against representation error in `share`.
pub fn n_elite(share: f64, n: usize) -> usize {
    ((share * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// Indices of the elite episodes: highest reward first, ties by lower index.
pub fn select_elite(rewards: &[f64], share: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..rewards.len()).collect();
    order.sort_by(|&a, &b| rewards[b].total_cmp(&rewards[a]).then(a.cmp(&b)));
    order.truncate(n_elite(share, rewards.len()));
    order
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub mean_reward: f64,
    pub max_reward: f64,
    pub elite_threshold: f64,
    pub loss: f64,
    /// All rewards of the iteration were zero.
    pub degenerate: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub rows: Vec<TraceRow>,
}

impl TrainingTrace {
    pub const CSV_HEADER: &'static str = "iteration,mean_reward,max_reward,elite_threshold,loss,degenerate";

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn best_reward(&self) -> Option<f64> {
        self.rows.iter().map(|r| r.max_reward).fold(None, |a, r| Some(a.map_or(r, |x: f64| x.max(r))))
    }

    pub fn to_csv_body(&self) -> String {
        let mut out = String::new();
        out.push_str(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.iteration, r.mean_reward, r.max_reward, r.elite_threshold, r.loss, r.degenerate as u8
            );
        }
        out
    }

    pub fn from_csv_body(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for line in text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()).skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(Error::Parse(format!("trace row '{line}'")));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("'{s}': {e}")));
            rows.push(TraceRow {
                iteration: f[0].parse().map_err(|_| Error::Parse(format!("'{}'", f[0])))?,
                mean_reward: num(f[1])?,
                max_reward: num(f[2])?,
                elite_threshold: num(f[3])?,
                loss: num(f[4])?,
                degenerate: f[5] == "1",
            });
        }
        Ok(TrainingTrace { rows })
    }
}

/// One stochastic episode drawn from the network.
pub fn rollout<T: Real>(net: &PolicyNetwork<T>, env: &Environment<T>, rng: &mut ChaCha8Rng) -> Result<EpisodeRecord<T>> {
    let mut err = None;
    let rec = run_episode(env, |obs, allowed| match net.sample_action(obs, allowed, rng) {
        Ok(a) => a,
        Err(e) => {
            err.get_or_insert(e);
            crate::env::Action::GoOn
        }
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(rec),
    }
}

fn sample_episodes<T: Real>(
    net: &PolicyNetwork<T>,
    env: &Environment<T>,
    seed: u64,
    tag: u64,
    round: u64,
    n: usize,
) -> Result<Vec<EpisodeRecord<T>>> {
    (0..n)
        .into_par_iter()
        .map(|ep| rollout(net, env, &mut stream_rng(seed, tag, round, ep as u64)))
        .collect()
}

/// Best episode seen so far.
#[derive(Clone, Debug, PartialEq)]
pub struct BestEpisode {
    pub policy: KickPolicy,
    pub reward: f64,
}

/// One cross-entropy iteration with rollouts against a frozen snapshot of `net`.
pub fn run_iteration<T: Real>(
    net: &mut PolicyNetwork<T>,
    config: &TrainerConfig,
    env: &Environment<T>,
    seed: u64,
    iteration: usize,
) -> Result<(TraceRow, BestEpisode)> {
    let episodes = sample_episodes(net, env, seed, TAG_ROLLOUT, iteration as u64, config.n_episodes)?;
    let rewards: Vec<f64> = episodes.iter().map(|e| e.reward).collect();
    let elite = select_elite(&rewards, config.elite_share);

    let mut batch = TrainBatch::new(net.obs_dim());
    for &i in &elite {
        for (obs, action) in &episodes[i].steps {
            batch.push(obs.as_slice(), *action)?;
        }
    }

    let mut loss_sum = 0.0;
    let mut seen = 0usize;
    for epoch in 0..config.epochs_per_iteration {
        let mut order: Vec<usize> = (0..batch.len()).collect();
        order.shuffle(&mut stream_rng(seed, TAG_SHUFFLE, iteration as u64, epoch as u64));
        for chunk in order.chunks(config.minibatch) {
            let mb = batch.select(chunk);
            let loss = net.train_step(&mb, config.learning_rate)?;
            loss_sum += loss.to_f64_lossy() * chunk.len() as f64;
            seen += chunk.len();
        }
    }

    let best = elite[0];
    let row = TraceRow {
        iteration,
        mean_reward: rewards.iter().sum::<f64>() / rewards.len() as f64,
        max_reward: rewards[best],
        elite_threshold: rewards[*elite.last().expect("non-empty elite")],
        loss: if seen > 0 { loss_sum / seen as f64 } else { f64::NAN },
        degenerate: rewards.iter().all(|&r| r == 0.0),
    };
    let best = BestEpisode { policy: episodes[best].policy.clone(), reward: rewards[best] };
    Ok((row, best))
}

#[derive(Clone, Debug)]
pub struct TrainedAgent<T> {
    pub net: PolicyNetwork<T>,
    pub trace: TrainingTrace,
    /// Highest-reward episode encountered during training.
    pub best_seen: Option<BestEpisode>,
}

/// Trains a fresh network seeded with `config.seed`.
pub fn train_agent<T: Real>(config: &TrainerConfig) -> Result<TrainedAgent<T>> {
    let env = Environment::new(config.env.clone())?;
    train_agent_in(config, &env, config.seed, |_, _| Ok(()))
}

/// Trains a fresh network with the given seed, calling `checkpoint(done, net)`
/// before the first iteration and after every iteration.
pub fn train_agent_in<T: Real>(
    config: &TrainerConfig,
    env: &Environment<T>,
    seed: u64,
    mut checkpoint: impl FnMut(usize, &PolicyNetwork<T>) -> Result<()>,
) -> Result<TrainedAgent<T>> {
    config.validate()?;
    let mut net = PolicyNetwork::new(env.obs_dim(), config.hidden, seed);
    let mut trace = TrainingTrace::default();
    let mut best_seen: Option<BestEpisode> = None;
    checkpoint(0, &net)?;
    for it in 0..config.n_iterations {
        let (row, best) = run_iteration(&mut net, config, env, seed, it)?;
        trace.rows.push(row);
        if best_seen.as_ref().is_none_or(|b| best.reward > b.reward) {
            best_seen = Some(best);
        }
        checkpoint(it + 1, &net)?;
    }
    Ok(TrainedAgent { net, trace, best_seen })
}

#[derive(Clone, Debug)]
pub struct ExtractedPolicy<T> {
    pub policy: KickPolicy,
    pub reward: f64,
    pub sampled_rewards: Vec<f64>,
    pub episode: EpisodeRecord<T>,
}

/// Samples `config.n_samples` episodes and keeps the best one (earliest on ties).
pub fn extract_policy<T: Real>(
    net: &PolicyNetwork<T>,
    config: &TrainerConfig,
    env: &Environment<T>,
    seed: u64,
) -> Result<ExtractedPolicy<T>> {
    let episodes = sample_episodes(net, env, seed, TAG_EXTRACT, 0, config.n_samples.max(1))?;
    let sampled_rewards: Vec<f64> = episodes.iter().map(|e| e.reward).collect();
    let best = select_elite(&sampled_rewards, 1.0)[0];
    let episode = episodes.into_iter().nth(best).expect("index in range");
    Ok(ExtractedPolicy { policy: episode.policy.clone(), reward: episode.reward, sampled_rewards, episode })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyAxis {
    Iterations,
    Episodes,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub axis: StudyAxis,
    pub value: usize,
    pub n_agents: usize,
    pub n_rewards: usize,
    pub mean: f64,
    pub std: f64,
    /// Standard deviation of the per-agent mean rewards.
    pub run_std: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StudyTable {
    pub rows: Vec<StudyRow>,
}

impl StudyTable {
    pub const CSV_HEADER: &'static str = "axis,value,n_agents,n_rewards,mean_reward,std_reward,run_std";

    pub fn to_csv_body(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let axis = match r.axis {
                StudyAxis::Iterations => "iterations",
                StudyAxis::Episodes => "episodes",
            };
            let _ = writeln!(out, "{axis},{},{},{},{},{},{}", r.value, r.n_agents, r.n_rewards, r.mean, r.std, r.run_std);
        }
        out
    }

    pub fn row(&self, axis: StudyAxis, value: usize) -> Option<&StudyRow> {
        self.rows.iter().find(|r| r.axis == axis && r.value == value)
    }
}

/// Sample mean and (n − 1)-normalized standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn evaluate<T: Real>(net: &PolicyNetwork<T>, env: &Environment<T>, seed: u64, round: u64) -> Result<Vec<f64>> {
    Ok(sample_episodes(net, env, seed, TAG_EVAL, round, STUDY_SAMPLES_PER_AGENT)?
        .into_iter()
        .map(|e| e.reward)
        .collect())
}

fn study_row(axis: StudyAxis, value: usize, per_agent: &[Vec<f64>]) -> StudyRow {
    let pooled: Vec<f64> = per_agent.iter().flatten().copied().collect();
    let means: Vec<f64> = per_agent.iter().map(|r| mean_std(r).0).collect();
    let (mean, std) = mean_std(&pooled);
    StudyRow {
        axis,
        value,
        n_agents: per_agent.len(),
        n_rewards: pooled.len(),
        mean,
        std,
        run_std: mean_std(&means).1,
    }
}

/// Learning-curve study: for each grid point, `base.n_agents` agents are
/// trained and each samples [`STUDY_SAMPLES_PER_AGENT`] episodes; the table
/// reports mean and standard deviation of those rewards.
///
/// The iteration axis keeps `base.n_episodes` fixed and evaluates every grid
/// value from one training run per agent (training is deterministic, so a
/// snapshot after `n` iterations equals a fresh `n`-iteration run). The
/// episode axis keeps `base.n_iterations` fixed.
pub fn stability_study<T: Real>(
    base: &TrainerConfig,
    iteration_grid: &[usize],
    episode_grid: &[usize],
) -> Result<StudyTable> {
    if iteration_grid.is_empty() && episode_grid.is_empty() {
        return Err(Error::InvalidParameter("empty study grids".into()));
    }
    let env = Environment::<T>::new(base.env.clone())?;
    let mut table = StudyTable::default();

    if !iteration_grid.is_empty() {
        let mut cfg = base.clone();
        cfg.n_iterations = *iteration_grid.iter().max().expect("non-empty");
        let mut rewards: Vec<Vec<Vec<f64>>> = vec![Vec::new(); iteration_grid.len()];
        for agent in 0..base.n_agents {
            let seed = base.agent_seed(agent);
            train_agent_in(&cfg, &env, seed, |done, net| {
                for (slot, &g) in iteration_grid.iter().enumerate() {
                    if g == done {
                        rewards[slot].push(evaluate(net, &env, seed, g as u64)?);
                    }
                }
                Ok(())
            })?;
        }
        for (slot, &g) in iteration_grid.iter().enumerate() {
            table.rows.push(study_row(StudyAxis::Iterations, g, &rewards[slot]));
        }
    }

    for &episodes in episode_grid {
        let mut cfg = base.clone();
        cfg.n_episodes = episodes;
        let mut rewards = Vec::new();
        for agent in 0..base.n_agents {
            let seed = base.agent_seed(agent);
            let trained = train_agent_in(&cfg, &env, seed, |_, _| Ok(()))?;
            rewards.push(evaluate(&trained.net, &env, seed, cfg.n_iterations as u64)?);
        }
        table.rows.push(study_row(StudyAxis::Episodes, episodes, &rewards));
    }
    Ok(table)
}
