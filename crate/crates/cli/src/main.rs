use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mno_core::analysis::{
    compute_statistics, rollout, RolloutOptions, Statistic, StatisticsOptions,
};
use mno_core::config::ExperimentConfig;
use mno_core::dissipativity::{dissipativity_report, post_process_apply, PostProcessConfig};
use mno_core::gradcheck::{grad_check, GradCheckConfig};
use mno_core::io::{self, Checkpoint, DataFile, StateInfo};
use mno_core::model::Model;
use mno_core::systems::{generate_dataset, ReferenceSolver};
use mno_core::training::{train, ShellSampler, TrainSetup};
use mno_core::{MnoError, Result};

#[derive(Parser)]
#[command(
    name = "mno",
    version,
    about = "Markov neural operators for dissipative chaotic systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the reference solver and write a pair dataset.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `data.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model on a pair dataset and write a checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Training history (JSON); defaults to `<out>.history.json`.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Compose a checkpointed model (or the reference solver) with itself.
    Rollout {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        steps: usize,
        /// `sample` draws from the initial measure, anything else is read as
        /// a `.mnod` file (last trajectory snapshot or first pair input).
        #[arg(long, default_value = "sample")]
        init: String,
        #[arg(long, default_value_t = 1.0)]
        perturb: f64,
        #[arg(long, value_enum, default_value = "off")]
        postprocess: Switch,
        /// Step with the reference solver instead of the model.
        #[arg(long)]
        solver: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        blowup_bound: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Invariant statistics of a trajectory file.
    Stats {
        #[arg(long)]
        traj: PathBuf,
        /// Reference trajectory for relative discrepancies.
        #[arg(long = "ref")]
        reference: Option<PathBuf>,
        #[arg(long, default_value = "all")]
        which: String,
        /// Statistics options (the `[analysis]` section of an experiment config).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Adds a dissipativity report for this checkpoint.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Comma-separated shell radii for the dissipativity report; defaults
        /// to `analysis.dissipativity_radii` of `--config`.
        #[arg(long, value_delimiter = ',')]
        radii: Vec<f64>,
        #[arg(long, value_enum, default_value = "off")]
        postprocess: Switch,
        #[arg(long)]
        out: PathBuf,
        /// Also write one CSV per entry next to `out`.
        #[arg(long)]
        csv: bool,
    },
    /// Compare analytic gradients with finite differences.
    Gradcheck {
        #[arg(long)]
        config: PathBuf,
    },
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("MNO_THREADS") {
        let n: usize = v.parse().ok().filter(|n| *n >= 1).ok_or_else(|| {
            MnoError::validation(
                "MNO_THREADS",
                format!("must be a positive integer, got '{v}'"),
            )
        })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| MnoError::validation("MNO_THREADS", e.to_string()))?;
    }
    Ok(())
}

fn json_bytes<T: serde::Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("serializable");
    s.push(b'\n');
    s
}

fn cmd_generate(config: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let seed = seed.unwrap_or(cfg.data.seed);
    let data = generate_dataset(
        &cfg.system,
        &cfg.initial_condition(),
        cfg.data.trajectories,
        cfg.data.t_burn,
        cfg.data.t_end,
        seed,
    )?;
    io::save_pairs(out, &data)?;
    let space = cfg.state_space();
    let norms: Vec<f64> = (0..data.len()).map(|i| space.norm(data.input(i))).collect();
    let lo = norms.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = norms.iter().copied().fold(0.0, f64::max);
    println!(
        "wrote {} pairs ({} trajectories, h = {}) to {}; state norms in [{lo:.4}, {hi:.4}]",
        data.len(),
        data.meta.n_trajectories,
        data.meta.h,
        out.display()
    );
    Ok(())
}

fn cmd_train(config: &Path, data: &Path, out: &Path, history: Option<&Path>) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let data = io::load_pairs(data)?;
    if data.meta.system != cfg.system.system || data.meta.grid_shape != cfg.system.grid_shape() {
        return Err(MnoError::validation(
            "data",
            format!(
                "dataset holds {} states of shape {:?}, config describes {} states of shape {:?}",
                data.meta.system.name(),
                data.meta.grid_shape,
                cfg.system.system.name(),
                cfg.system.grid_shape()
            ),
        ));
    }
    let mut model = Model::init(cfg.model.clone(), cfg.training.seed)?;
    let mut report = |r: &mno_core::training::EpochRecord| {
        let val = r
            .validation_loss
            .map_or(String::new(), |v| format!(" val {v:.6e}"));
        eprintln!(
            "epoch {:>4}  lr {:.3e}  loss {:.6e} (data {:.6e}, reg {:.6e}){val}",
            r.epoch, r.learning_rate, r.train_loss, r.data_loss, r.regularization
        );
    };
    let summary = train(
        &mut model,
        &data,
        TrainSetup {
            space: cfg.state_space(),
            grf: cfg.grf(),
            config: &cfg.training,
            on_epoch: Some(&mut report),
        },
    )?;
    let postprocess = cfg
        .postprocess
        .unwrap_or_else(|| PostProcessConfig::from_training_norm(summary.max_training_norm));
    let history_path =
        history.map_or_else(|| out.with_extension("history.json"), Path::to_path_buf);
    io::write_atomic(&history_path, &json_bytes(&summary.history))?;
    let ck = Checkpoint {
        model,
        state: StateInfo::from_meta(&data.meta),
        training: Some(summary.clone()),
        postprocess: Some(postprocess),
        experiment: Some(cfg),
    };
    io::save_checkpoint(out, &ck)?;
    println!(
        "trained {} epochs on {} pairs: final loss {:.6e}; wrote {}",
        summary.epochs,
        summary.pairs,
        summary.final_train_loss,
        out.display()
    );
    Ok(())
}

fn initial_state(init: &str, ck: &Checkpoint, seed: u64) -> Result<Vec<f64>> {
    if init == "sample" {
        let cfg = ck.experiment.as_ref().ok_or_else(|| {
            MnoError::validation(
                "--init",
                "checkpoint has no experiment config to sample from",
            )
        })?;
        return cfg.sample_attractor_state(seed);
    }
    match io::load_data(Path::new(init))? {
        DataFile::Trajectory(t) => Ok(t.snapshot(t.len() - 1).to_vec()),
        DataFile::Pairs(p) => Ok(p.input(0).to_vec()),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_rollout(
    model: &Path,
    steps: usize,
    init: &str,
    perturb: f64,
    postprocess: Switch,
    solver: bool,
    seed: u64,
    blowup_bound: Option<f64>,
    out: &Path,
) -> Result<()> {
    if !(perturb > 0.0 && perturb.is_finite()) {
        return Err(MnoError::validation("--perturb", "must be positive"));
    }
    let ck = io::load_checkpoint(model)?;
    let space = ck.state.space();
    let u0 = initial_state(init, &ck, seed)?;
    space.check(&u0)?;
    let opts = RolloutOptions {
        perturb_scale: perturb,
        blowup_bound: blowup_bound.unwrap_or(f64::INFINITY),
    };
    let (provenance, traj) = if solver {
        let cfg = ck.experiment.as_ref().ok_or_else(|| {
            MnoError::validation("--solver", "checkpoint has no experiment config")
        })?;
        let reference = ReferenceSolver::new(&cfg.system)?;
        let stride = cfg.system.sample_stride;
        let name = format!("{} solver", cfg.system.system.name());
        let meta = ck.state.trajectory_meta(name.clone());
        (
            name,
            rollout(|u| reference.advance(u, stride), &u0, steps, meta, opts)?,
        )
    } else if postprocess == Switch::On {
        let pp = ck.postprocess.ok_or_else(|| {
            MnoError::validation("--postprocess", "checkpoint has no post-processing config")
        })?;
        let name = format!("{} (post-processed)", model.display());
        let meta = ck.state.trajectory_meta(name.clone());
        (
            name,
            rollout(
                |u| post_process_apply(&ck.model, &space, u, &pp),
                &u0,
                steps,
                meta,
                opts,
            )?,
        )
    } else {
        let name = model.display().to_string();
        let meta = ck.state.trajectory_meta(name.clone());
        (
            name,
            rollout(|u| ck.model.apply(u), &u0, steps, meta, opts)?,
        )
    };
    let mut traj = traj;
    if init == "sample" {
        traj.meta.seed = seed;
    }
    io::save_trajectory(out, &traj)?;
    let max_norm = traj.snapshots().map(|u| space.norm(u)).fold(0.0, f64::max);
    println!(
        "{provenance}: {} steps, max state norm {max_norm:.4}; wrote {}",
        steps,
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_stats(
    traj: &Path,
    reference: Option<&Path>,
    which: &str,
    config: Option<&Path>,
    model: Option<&Path>,
    radii: &[f64],
    postprocess: Switch,
    out: &Path,
    csv: bool,
) -> Result<()> {
    let which = Statistic::parse_list(which)?;
    let cfg = config.map(ExperimentConfig::load).transpose()?;
    let opts = cfg
        .as_ref()
        .map_or_else(StatisticsOptions::default, |c| c.statistics_options());
    let t = io::load_trajectory(traj)?;
    let r = reference.map(io::load_trajectory).transpose()?;
    if let Some(r) = &r {
        if r.meta.grid_shape != t.meta.grid_shape {
            return Err(MnoError::validation(
                "--ref",
                "reference trajectory has a different grid",
            ));
        }
    }
    let mut report = compute_statistics(&t, &which, &opts, r.as_ref())?;
    if let Some(r) = &r {
        let ref_report = compute_statistics(r, &which, &opts, Some(r))?;
        report.compare_with(&ref_report);
    }
    if let Some(m) = model {
        let radii = if radii.is_empty() {
            cfg.as_ref()
                .map_or(&[][..], |c| &c.analysis.dissipativity_radii[..])
        } else {
            radii
        };
        if radii.is_empty() {
            return Err(MnoError::validation(
                "--radii",
                "give shell radii for the dissipativity report",
            ));
        }
        let ck = io::load_checkpoint(m)?;
        let space = ck.state.space();
        let grf = ck.experiment.as_ref().and_then(|c| c.grf());
        let sampler = ShellSampler::new(space.clone(), grf, 1.0, 1.0)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lambda = ck.postprocess.map_or(0.5, |p| p.lambda);
        let samples = ck
            .experiment
            .as_ref()
            .map_or(100, |c| c.analysis.dissipativity_samples);
        let d = if postprocess == Switch::On {
            let pp = ck.postprocess.ok_or_else(|| {
                MnoError::validation("--postprocess", "checkpoint has no post-processing config")
            })?;
            dissipativity_report(
                |u| post_process_apply(&ck.model, &space, u, &pp),
                &sampler,
                radii,
                samples,
                lambda,
                true,
                &mut rng,
            )?
        } else {
            dissipativity_report(
                |u| ck.model.apply(u),
                &sampler,
                radii,
                samples,
                lambda,
                false,
                &mut rng,
            )?
        };
        report.dissipativity = Some(d);
    }
    io::write_atomic(out, &json_bytes(&report))?;
    if csv {
        let stem = out
            .file_stem()
            .map_or("stats".into(), |s| s.to_string_lossy().into_owned());
        for (name, entry) in &report.entries {
            let path = out.with_file_name(format!("{stem}_{name}.csv"));
            io::write_atomic(&path, entry.to_csv().as_bytes())?;
        }
    }
    println!(
        "{} statistics over {} snapshots (burn-in {}); wrote {}",
        report.entries.len(),
        report.snapshots,
        report.burn_in,
        out.display()
    );
    Ok(())
}

fn cmd_gradcheck(config: &Path) -> Result<bool> {
    let cfg = GradCheckConfig::load(config)?;
    let report = grad_check(&cfg)?;
    for b in &report.blocks {
        println!(
            "{:<24} {:>8} params  rel error {:.3e}",
            b.name, b.len, b.rel_error
        );
    }
    println!(
        "max relative error {:.3e} (tolerance {:.1e}): {}",
        report.max_rel_error,
        report.tolerance,
        if report.passed { "pass" } else { "FAIL" }
    );
    Ok(report.passed)
}

fn run(cli: Cli) -> Result<ExitCode> {
    init_threads()?;
    match cli.command {
        Command::Generate { config, out, seed } => cmd_generate(&config, &out, seed)?,
        Command::Train {
            config,
            data,
            out,
            history,
        } => cmd_train(&config, &data, &out, history.as_deref())?,
        Command::Rollout {
            model,
            steps,
            init,
            perturb,
            postprocess,
            solver,
            seed,
            blowup_bound,
            out,
        } => cmd_rollout(
            &model,
            steps,
            &init,
            perturb,
            postprocess,
            solver,
            seed,
            blowup_bound,
            &out,
        )?,
        Command::Stats {
            traj,
            reference,
            which,
            config,
            model,
            radii,
            postprocess,
            out,
            csv,
        } => cmd_stats(
            &traj,
            reference.as_deref(),
            &which,
            config.as_deref(),
            model.as_deref(),
            &radii,
            postprocess,
            &out,
            csv,
        )?,
        Command::Gradcheck { config } => {
            if !cmd_gradcheck(&config)? {
                return Ok(ExitCode::from(3));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
