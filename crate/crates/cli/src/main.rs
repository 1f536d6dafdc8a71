use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use qkick::classical::{propagate_ensemble, sample_husimi, Ensemble};
use qkick::env::simulate_policy;
use qkick::experiments::{
    self, curve_csv, gamma_sweep, kick_distribution_table, preset, run_baselines, run_training, sweep_csv, write_csv,
    ExperimentPreset, GAMMA_SWEEP,
};
use qkick::metrology::{curve_max, max_rescaled};
use qkick::quasiprob::{quasi_grid, QuasiKind};
use qkick::trainer::stability_study;
use qkick::{Environment, KickPolicy, RewardMode};
use rand::SeedableRng;

#[derive(Parser)]
#[command(name = "qkick", version, about = "Kicked-top quantum sensor: baselines, RL training and exports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Named preset (see `qkick presets`).
    #[arg(long, default_value = "gains")]
    preset: String,
    /// Base random seed; agent i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, env = "QKICK_OUT_DIR", default_value = "qkick-out")]
    out_dir: PathBuf,
    /// Worker threads for parallel rollouts (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Reward: `final-qfi` (QFI at T_opt) or `max-rescaled-qfi` (max of QFI/t).
    #[arg(long)]
    reward_mode: Option<RewardMode>,
    /// Override the damping rate of the preset.
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// List the built-in presets.
    Presets,
    /// QFI curves of the unkicked and the periodically kicked top.
    Baselines {
        #[command(flatten)]
        common: Common,
    },
    /// Train agents and write the full artifact bundle.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        agents: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Learning-curve study over iteration and episode grids.
    Study {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "10,30,50,100,200,300")]
        iteration_grid: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        episode_grid: Vec<usize>,
        #[arg(long)]
        agents: Option<usize>,
    },
    /// Replay a stored policy and write its QFI curve and kick table.
    Replay {
        #[command(flatten)]
        common: Common,
        /// Policy file (`time strength` lines).
        #[arg(long)]
        policy: PathBuf,
    },
    /// Export Husimi/Wigner grids or a classical ensemble for a policy's final state.
    Export {
        #[command(flatten)]
        common: Common,
        /// Policy file; the initial state is exported when omitted.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// `husimi`, `wigner` or `classical`.
        #[arg(long, default_value = "wigner")]
        kind: String,
        #[arg(long, default_value_t = 50)]
        n_theta: usize,
        #[arg(long, default_value_t = 100)]
        n_phi: usize,
        /// Ensemble size for `classical`.
        #[arg(long, default_value_t = Ensemble::DEFAULT_SIZE)]
        points: usize,
    },
    /// Gains of trained policies over a range of damping rates.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        gammas: Vec<f64>,
        #[arg(long)]
        agents: Option<usize>,
    },
}

fn resolve(common: &Common) -> Result<ExperimentPreset> {
    let mut p = preset(&common.preset)?;
    if let Some(seed) = common.seed {
        p = p.with_seed(seed);
    }
    if let Some(mode) = common.reward_mode {
        p = p.with_reward_mode(mode);
    }
    if let Some(g) = common.gamma {
        p = p.with_gamma(g);
    }
    p.trainer.validate()?;
    Ok(p)
}

fn setup(common: &Common) -> Result<ExperimentPreset> {
    if common.jobs > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(common.jobs).build_global().context("configuring thread pool")?;
    }
    fs::create_dir_all(&common.out_dir).with_context(|| format!("creating {}", common.out_dir.display()))?;
    resolve(common)
}

fn run_dir(common: &Common, p: &ExperimentPreset, verb: &str) -> PathBuf {
    common.out_dir.join(format!("{}-{}-seed{}", p.name, verb, p.trainer.seed))
}

fn write_config(dir: &Path, p: &ExperimentPreset) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(p)?)?;
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Presets => {
            for p in experiments::presets() {
                let h = p.hyper_row();
                println!(
                    "{:<22} agents {:>2}  iterations {:>4}  episodes {:>3}  samples {:>2}  t_step {:<4} k_step {:<4} T_opt {:<5} {}  ({})",
                    p.name,
                    h.agents,
                    h.iterations,
                    h.episodes,
                    h.samples,
                    h.t_step,
                    h.k_step,
                    h.t_opt,
                    p.trainer.env.dynamics.decoherence.label(),
                    p.description
                );
            }
        }
        Command::Baselines { common } => {
            let p = setup(&common)?;
            let dir = run_dir(&common, &p, "baselines");
            write_config(&dir, &p)?;
            let curves = run_baselines(&p)?;
            let path = dir.join("baselines.csv");
            write_csv(&path, &p.config_hash(), &curves.to_csv_body())?;
            println!("top max {:.6}", curve_max(&curves.top)?);
            println!("top at T_opt {:.6}", curves.top.last().map_or(0.0, |q| q.qfi));
            println!("periodic plateau {:.6}", qkick::metrology::plateau(&curves.periodic)?);
            println!("wrote {}", path.display());
        }
        Command::Train { common, agents, iterations, episodes } => {
            let mut p = setup(&common)?;
            if let Some(n) = agents {
                p.trainer.n_agents = n;
            }
            if let Some(n) = iterations {
                p.trainer.n_iterations = n;
            }
            if let Some(n) = episodes {
                p.trainer.n_episodes = n;
            }
            p.trainer.validate()?;
            let dir = run_dir(&common, &p, "train");
            write_config(&dir, &p)?;
            let bundle = run_training(&p, Some(&dir))?;
            for a in &bundle.agents {
                println!("agent {} seed {} reward {:.6}", a.index, a.seed, a.reward);
            }
            let g = bundle.gains;
            println!("best agent {} QFI(T_opt) {:.6}", bundle.best_agent, g.rl_final_qfi);
            if let Some(x) = g.unkicked {
                println!("gain over unkicked top {x:.4}");
            }
            if let Some(x) = g.plateau {
                println!("gain over kicked-top plateau {x:.4}");
            }
            println!("wrote {}", dir.display());
        }
        Command::Study { common, iteration_grid, episode_grid, agents } => {
            let mut p = setup(&common)?;
            if let Some(n) = agents {
                p.trainer.n_agents = n;
            }
            let dir = run_dir(&common, &p, "study");
            write_config(&dir, &p)?;
            let table = stability_study::<f64>(&p.trainer, &iteration_grid, &episode_grid)?;
            let path = dir.join("study.csv");
            write_csv(&path, &qkick::experiments::config_hash(&p.trainer), &table.to_csv_body())?;
            print!("{}", table.to_csv_body());
            println!("wrote {}", path.display());
        }
        Command::Replay { common, policy } => {
            let p = setup(&common)?;
            let policy = KickPolicy::load(&policy).with_context(|| format!("reading {}", policy.display()))?;
            let env = Environment::new(p.trainer.env.clone())?;
            let sim = simulate_policy(&policy, &env)?;
            let dir = run_dir(&common, &p, "replay");
            write_config(&dir, &p)?;
            let hash = p.config_hash();
            write_csv(&dir.join("qfi.csv"), &hash, &curve_csv(&sim.qfi_trace))?;
            write_csv(&dir.join("kick_table.csv"), &hash, &kick_distribution_table(&policy, &env)?.to_csv_body())?;
            println!("reward {:.12}", sim.reward);
            println!("QFI(T_opt) {:.12}", sim.qfi_trace.last().map_or(0.0, |q| q.qfi));
            if let Some(r) = max_rescaled(&sim.qfi_trace) {
                println!("max QFI/t {r:.12}");
            }
            println!("wrote {}", dir.display());
        }
        Command::Export { common, policy, kind, n_theta, n_phi, points } => {
            let p = setup(&common)?;
            let policy = match &policy {
                Some(path) => KickPolicy::load(path).with_context(|| format!("reading {}", path.display()))?,
                None => KickPolicy::new(),
            };
            let dir = run_dir(&common, &p, "export");
            write_config(&dir, &p)?;
            let hash = p.config_hash();
            let path = if kind == "classical" {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(p.trainer.seed);
                let cfg = &p.trainer.env;
                let initial = sample_husimi(&cfg.initial_state, cfg.j, points, &mut rng)?;
                let path = dir.join("classical_initial.csv");
                write_csv(&path, &hash, &initial.to_csv_body())?;
                let evolved = propagate_ensemble(&initial, &policy, cfg)?;
                let path = dir.join("classical_final.csv");
                write_csv(&path, &hash, &evolved.to_csv_body())?;
                path
            } else {
                let kind: QuasiKind = kind.parse()?;
                let env = Environment::new(p.trainer.env.clone())?;
                let state = if policy.is_empty() {
                    env.initial_state().density()
                } else {
                    simulate_policy(&policy, &env)?.final_state.density()
                };
                let grid = quasi_grid(&state, kind, n_theta, n_phi)?;
                let path = dir.join(format!("{kind}.csv"));
                write_csv(&path, &hash, &grid.to_csv_body())?;
                println!("min {:.6} max {:.6} integral {:.6}", grid.min(), grid.max(), grid.integral());
                path
            };
            println!("wrote {}", path.display());
        }
        Command::Sweep { common, gammas, agents } => {
            let mut p = setup(&common)?;
            if let Some(n) = agents {
                p.trainer.n_agents = n;
            }
            let gammas = if gammas.is_empty() { GAMMA_SWEEP.to_vec() } else { gammas };
            if gammas.iter().any(|g| !(*g >= 0.0)) {
                bail!("damping rates must be non-negative");
            }
            let dir = run_dir(&common, &p, "sweep");
            write_config(&dir, &p)?;
            let rows = gamma_sweep(&p, &gammas, Some(&dir))?;
            let path = dir.join("sweep.csv");
            write_csv(&path, &p.config_hash(), &sweep_csv(&rows))?;
            print!("{}", sweep_csv(&rows));
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}
