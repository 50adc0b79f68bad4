use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use tea_core::agents::BcqAgent;
use tea_core::dataset::Variant;
use tea_core::experiment::{
    evaluate_on_env, parse_csv, render_markdown, render_ratio_svg, run_collection, run_experiment, stage_augment,
    stage_collect, stage_train_ae, train_variant, write_report, Artifacts, ExperimentConfig, ExperimentError, Layout,
    SeedRange,
};

/// Offline RL on parameterized CartPole with trajectory-encoding state augmentation.
#[derive(Parser, Debug)]
#[command(name = "tea", version)]
struct Cli {
    /// TOML or JSON experiment config; built-in defaults when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Seeds to run, e.g. `0..10` or `0..=9`.
    #[arg(long, global = true)]
    seed_range: Option<SeedRange>,
    /// Comma-separated variants: baseline, aug_encoding (tea), aug_true.
    #[arg(long, global = true, value_delimiter = ',')]
    variants: Option<Vec<Variant>>,
    /// Output directory for artifacts and reports.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample environments, train the behaviour DQN and write the baseline buffer.
    Collect,
    /// Train the trajectory AutoEncoder on the baseline buffer.
    TrainAe,
    /// Encode source environments and write both augmented buffers.
    Augment,
    /// Train BCQ on one variant's buffer and save the checkpoint.
    TrainBcq {
        #[arg(long)]
        variant: Variant,
        #[arg(long)]
        seed: u64,
    },
    /// Evaluate a saved BCQ checkpoint on held-out environments.
    Eval {
        #[arg(long)]
        variant: Variant,
        #[arg(long)]
        seed: u64,
        /// Environment label such as N3; all held-out environments by default.
        #[arg(long)]
        env: Option<String>,
    },
    /// Collection followed by every (variant, seed) run and the report.
    Experiment {
        /// Keep existing collection artifacts instead of regenerating them.
        #[arg(long)]
        reuse_collection: bool,
    },
    /// Re-render results.md and ratio.svg from results.csv.
    Report,
    /// Print the effective config as TOML.
    ShowConfig,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, ExperimentError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seeds) = cli.seed_range {
        cfg.seeds = seeds;
    }
    if let Some(variants) = &cli.variants {
        cfg.variants = variants.clone();
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    let layout = Layout::new(&cfg.out_dir);
    match cli.command {
        Command::Collect => {
            let s = stage_collect(&cfg, &layout)?;
            eprintln!(
                "dqn: {} steps, solved={}, last eval {:?}",
                s.dqn.steps,
                s.dqn.solved,
                s.dqn.evaluations.last().map(|e| e.1)
            );
            eprintln!("transitions per env: {:?}", s.transitions_per_env);
        }
        Command::TrainAe => {
            let r = stage_train_ae(&cfg, &layout)?;
            eprintln!("autoencoder mse: {:.5} -> {:.5}", r.initial_mse, r.final_mse);
        }
        Command::Augment => {
            stage_augment(&cfg, &layout)?;
            eprintln!("wrote augmented buffers under {}", layout.root.join("buffers").display());
        }
        Command::TrainBcq { variant, seed } => {
            let arts = Artifacts::load(&layout, &[variant])?;
            let agent = train_variant(&cfg, &arts, variant, seed)?;
            let dir = layout.bcq_dir(variant, seed);
            agent
                .save(&dir, variant, seed)
                .map_err(|e| ExperimentError::stage("train-bcq", e))?;
            eprintln!("saved {}", dir.display());
        }
        Command::Eval { variant, seed, env } => {
            let arts = Artifacts::load(&layout, &[variant])?;
            let dir = layout.bcq_dir(variant, seed);
            let (agent, header) = BcqAgent::load(&dir)
                .map_err(|e| ExperimentError::stage("eval", format!("{}: {e}", dir.display())))?;
            if header.variant != variant {
                bail!(ExperimentError::stage("eval", format!("checkpoint holds a {} agent", header.variant)));
            }
            let entries = arts.manifest.new_entries();
            let targets: Vec<_> = match &env {
                Some(label) => entries.into_iter().filter(|e| &e.label == label).collect(),
                None => entries,
            };
            if targets.is_empty() {
                bail!(ExperimentError::Config(format!("no held-out environment labelled {env:?}")));
            }
            println!("env,variant,seed,mean_return");
            for e in targets {
                let (ret, _) = evaluate_on_env(&cfg, &arts, &agent, variant, seed, e)?;
                println!("{},{},{},{}", e.label, variant, seed, ret);
            }
        }
        Command::Experiment { reuse_collection } => {
            if !(reuse_collection && layout.manifest().exists()) {
                eprintln!("collection phase -> {}", layout.root.display());
                run_collection(&cfg, &layout)?;
            }
            let total = cfg.variants.len() * cfg.seeds.len();
            let done = std::sync::atomic::AtomicUsize::new(0);
            let report = run_experiment(&cfg, &layout, &|variant, seed, runs| {
                let n = done.fetch_add(1, std::sync::atomic::Ordering::SeqCst) + 1;
                let avg = runs.iter().map(|r| r.mean_return).sum::<f64>() / runs.len().max(1) as f64;
                eprintln!("[{n}/{total}] {variant} seed {seed}: average return {avg:.1}");
            })?;
            for path in write_report(&report, &layout)? {
                eprintln!("wrote {}", path.display());
            }
            print!("{}", std::fs::read_to_string(layout.results_md()).context("reading results.md")?);
        }
        Command::Report => {
            let path = layout.results_csv();
            let text = std::fs::read_to_string(&path)
                .map_err(|e| ExperimentError::stage("report", format!("{}: {e}", path.display())))?;
            let cells = parse_csv(&text)?;
            let md = render_markdown(&cells)?;
            std::fs::write(layout.results_md(), &md).map_err(|e| ExperimentError::stage("report", e))?;
            match render_ratio_svg(&cells, Variant::AugEncoding, Variant::Baseline) {
                Ok(svg) => std::fs::write(layout.ratio_svg(), svg).map_err(|e| ExperimentError::stage("report", e))?,
                Err(e) => eprintln!("skipping ratio.svg: {e}"),
            }
            print!("{md}");
        }
        Command::ShowConfig => print!("{}", cfg.to_toml()),
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<ExperimentError>() {
        Some(e) if e.is_config() => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
