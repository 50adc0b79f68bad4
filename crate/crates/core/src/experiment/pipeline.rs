//! Stage functions and the artifact directory they share.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{hex, ExperimentConfig};
use super::report::{render_markdown, render_ratio_svg, ExperimentReport, RunRecord};
use super::{ExperimentError, Result};
use crate::agents::{bcq_act, collect_offline_buffer, train_bcq, train_dqn, BcqAgent, DqnAgent, DqnReport};
use crate::cartpole::{run_episode, Action, EnvManifest, EnvParams, ManifestEntry, MAX_EPISODE_STEPS};
use crate::dataset::{self, Dataset, Variant};
use crate::encoder::{
    encode_all_environments, encode_new_environment, load_encodings, save_encodings, train_autoencoder, AeHeader,
    AeTrainingReport, AutoEncoder,
};
use crate::rng::{self, streams};

/// Sub-seeds of the collection seed, one per randomized stage.
mod stage_seed {
    pub const DQN: u64 = 0;
    pub const COLLECTION: u64 = 1;
    pub const AE: u64 = 2;
    pub const ENCODING: u64 = 3;
}

/// File locations under an output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn dqn_dir(&self) -> PathBuf {
        self.root.join("dqn")
    }

    pub fn ae_dir(&self) -> PathBuf {
        self.root.join("ae")
    }

    pub fn buffer(&self, variant: Variant) -> PathBuf {
        self.root.join("buffers").join(format!("{}.teabuf", variant.name()))
    }

    pub fn encodings(&self) -> PathBuf {
        self.root.join("encodings.json")
    }

    pub fn collection_summary(&self) -> PathBuf {
        self.root.join("collection.json")
    }

    pub fn bcq_dir(&self, variant: Variant, seed: u64) -> PathBuf {
        self.root.join("bcq").join(variant.name()).join(format!("seed_{seed}"))
    }

    pub fn results_csv(&self) -> PathBuf {
        self.root.join("results.csv")
    }

    pub fn results_md(&self) -> PathBuf {
        self.root.join("results.md")
    }

    pub fn ratio_svg(&self) -> PathBuf {
        self.root.join("ratio.svg")
    }

    pub fn report_json(&self) -> PathBuf {
        self.root.join("report.json")
    }

    /// Every file written by the collection phase.
    pub fn collection_artifacts(&self) -> Vec<PathBuf> {
        let mut files = vec![
            self.manifest(),
            self.dqn_dir().join("dqn.teanet"),
            self.dqn_dir().join("dqn.json"),
            self.ae_dir().join("ae_encoder.teanet"),
            self.ae_dir().join("ae_decoder.teanet"),
            self.ae_dir().join("ae.json"),
            self.encodings(),
            self.collection_summary(),
        ];
        for v in Variant::ALL {
            files.push(self.buffer(v));
            files.push(dataset::format::sidecar_path(&self.buffer(v)));
        }
        files
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectionSummary {
    pub collection_seed: u64,
    pub config_hash: String,
    pub dqn: DqnReport,
    pub transitions_per_env: BTreeMap<u32, usize>,
    pub ae: Option<AeTrainingReport>,
    pub windows: Option<usize>,
}

fn io(stage: &str) -> impl Fn(std::io::Error) -> ExperimentError + '_ {
    move |e| ExperimentError::stage(stage, e)
}

fn write_json<T: Serialize>(stage: &str, path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value).map_err(|e| ExperimentError::stage(stage, e))?;
    std::fs::write(path, json + "\n").map_err(io(stage))
}

fn read_json<T: for<'de> Deserialize<'de>>(stage: &str, path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::stage(stage, format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| ExperimentError::stage(stage, format!("{}: {e}", path.display())))
}

fn load_manifest(stage: &str, layout: &Layout) -> Result<EnvManifest> {
    let path = layout.manifest();
    EnvManifest::load(&path).map_err(|e| ExperimentError::stage(stage, format!("{}: {e}", path.display())))
}

fn load_buffer(stage: &str, layout: &Layout, variant: Variant) -> Result<Dataset> {
    let path = layout.buffer(variant);
    dataset::load(&path).map_err(|e| ExperimentError::stage(stage, format!("{}: {e}", path.display())))
}

/// Samples the environment sets, trains the behaviour DQN on standard
/// CartPole and rolls it on the source environments into the baseline buffer.
pub fn stage_collect(cfg: &ExperimentConfig, layout: &Layout) -> Result<CollectionSummary> {
    const STAGE: &str = "collect";
    std::fs::create_dir_all(layout.root.join("buffers")).map_err(io(STAGE))?;
    let seed = cfg.collection_seed;
    let manifest = EnvManifest::sample(seed, cfg.n_source_envs, cfg.n_new_envs);
    manifest.save(&layout.manifest()).map_err(|e| ExperimentError::stage(STAGE, e))?;

    let dqn_seed = rng::derive(seed, streams::STAGES, stage_seed::DQN);
    let (agent, dqn_report) =
        train_dqn(&EnvParams::standard(0), dqn_seed, cfg.dqn.clone()).map_err(|e| ExperimentError::stage("train-dqn", e))?;
    agent.save(&layout.dqn_dir()).map_err(|e| ExperimentError::stage(STAGE, e))?;

    let sources = manifest.source_envs();
    let collect_seed = rng::derive(seed, streams::STAGES, stage_seed::COLLECTION);
    let mut buffer = collect_offline_buffer(&agent, &sources, collect_seed, cfg.budget_per_env, cfg.collection_epsilon)
        .map_err(|e| ExperimentError::stage(STAGE, e))?;
    buffer.meta.creation_seed = Some(seed);
    buffer.meta.manifest = Some("manifest.json".into());
    dataset::save(&buffer, &layout.buffer(Variant::Baseline)).map_err(|e| ExperimentError::stage(STAGE, e))?;

    let summary = CollectionSummary {
        collection_seed: seed,
        config_hash: cfg.hash(),
        dqn: dqn_report,
        transitions_per_env: buffer.count_by_env(),
        ae: None,
        windows: None,
    };
    write_json(STAGE, &layout.collection_summary(), &summary)?;
    Ok(summary)
}

/// Trains the AutoEncoder on every window of the baseline buffer.
pub fn stage_train_ae(cfg: &ExperimentConfig, layout: &Layout) -> Result<AeTrainingReport> {
    const STAGE: &str = "train-ae";
    let buffer = load_buffer(STAGE, layout, Variant::Baseline)?;
    let mut windows = Vec::new();
    for env_id in buffer.env_ids() {
        let env_windows = buffer
            .extract_windows(env_id, cfg.ae.window_len)
            .map_err(|e| ExperimentError::stage(STAGE, e))?;
        windows.extend(env_windows.iter().map(|w| w.flatten()));
    }
    let ae_seed = rng::derive(cfg.collection_seed, streams::STAGES, stage_seed::AE);
    let (ae, report) = train_autoencoder(&windows, ae_seed, &cfg.ae).map_err(|e| ExperimentError::stage(STAGE, e))?;
    let header = AeHeader {
        window_len: cfg.ae.window_len,
        input_dim: cfg.ae.input_dim(),
        latent_dim: cfg.ae.latent_dim,
        training_seed: ae_seed,
        final_mse: report.final_mse,
    };
    ae.save(&layout.ae_dir(), &header).map_err(|e| ExperimentError::stage(STAGE, e))?;
    if let Ok(mut summary) = read_json::<CollectionSummary>(STAGE, &layout.collection_summary()) {
        summary.ae = Some(report.clone());
        summary.windows = Some(windows.len());
        write_json(STAGE, &layout.collection_summary(), &summary)?;
    }
    Ok(report)
}

/// Encodes each source environment and writes both augmented buffers.
pub fn stage_augment(cfg: &ExperimentConfig, layout: &Layout) -> Result<()> {
    const STAGE: &str = "augment";
    let buffer = load_buffer(STAGE, layout, Variant::Baseline)?;
    let manifest = load_manifest(STAGE, layout)?;
    let (ae, _) = AutoEncoder::load(&layout.ae_dir()).map_err(|e| ExperimentError::stage(STAGE, e))?;
    let enc_seed = rng::derive(cfg.collection_seed, streams::STAGES, stage_seed::ENCODING);
    let encodings =
        encode_all_environments(&ae, &buffer, cfg.encoding_trajectories, enc_seed).map_err(|e| ExperimentError::stage(STAGE, e))?;
    save_encodings(&layout.encodings(), &encodings).map_err(|e| ExperimentError::stage(STAGE, e))?;
    let aug_enc = buffer.augment_with_encoding(&encodings).map_err(|e| ExperimentError::stage(STAGE, e))?;
    dataset::save(&aug_enc, &layout.buffer(Variant::AugEncoding)).map_err(|e| ExperimentError::stage(STAGE, e))?;
    let aug_true = buffer.augment_with_true_params(&manifest).map_err(|e| ExperimentError::stage(STAGE, e))?;
    dataset::save(&aug_true, &layout.buffer(Variant::AugTrue)).map_err(|e| ExperimentError::stage(STAGE, e))?;
    Ok(())
}

/// Runs every collection stage in order. On failure, every collection
/// artifact written so far is removed before the error is returned.
pub fn run_collection(cfg: &ExperimentConfig, layout: &Layout) -> Result<CollectionSummary> {
    let result = (|| {
        stage_collect(cfg, layout)?;
        stage_train_ae(cfg, layout)?;
        stage_augment(cfg, layout)?;
        read_json::<CollectionSummary>("collect", &layout.collection_summary())
    })();
    if result.is_err() {
        for path in layout.collection_artifacts() {
            let _ = std::fs::remove_file(path);
        }
    }
    result
}

/// SHA-256 of every collection artifact that exists, keyed by path relative to the root.
pub fn artifact_checksums(layout: &Layout) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for path in layout.collection_artifacts() {
        if let Ok(bytes) = std::fs::read(&path) {
            let rel = path.strip_prefix(&layout.root).unwrap_or(&path).to_string_lossy().replace('\\', "/");
            out.insert(rel, hex(&Sha256::digest(&bytes)));
        }
    }
    Ok(out)
}

/// Read-only collection outputs needed by the experiment phase.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub manifest: EnvManifest,
    pub dqn: DqnAgent,
    pub ae: AutoEncoder,
    pub buffers: BTreeMap<Variant, Dataset>,
}

impl Artifacts {
    pub fn load(layout: &Layout, variants: &[Variant]) -> Result<Self> {
        const STAGE: &str = "load-artifacts";
        let manifest = load_manifest(STAGE, layout)?;
        let dqn = DqnAgent::load(&layout.dqn_dir()).map_err(|e| ExperimentError::stage(STAGE, e))?;
        let (ae, _) = AutoEncoder::load(&layout.ae_dir()).map_err(|e| ExperimentError::stage(STAGE, e))?;
        let mut buffers = BTreeMap::new();
        for &v in variants {
            buffers.insert(v, load_buffer(STAGE, layout, v)?);
        }
        // Source encodings must exist for the encoding variant.
        if variants.contains(&Variant::AugEncoding) {
            load_encodings(&layout.encodings()).map_err(|e| ExperimentError::stage(STAGE, e))?;
        }
        Ok(Artifacts {
            manifest,
            dqn,
            ae,
            buffers,
        })
    }

    fn buffer(&self, variant: Variant) -> Result<&Dataset> {
        self.buffers
            .get(&variant)
            .ok_or_else(|| ExperimentError::stage("train-bcq", format!("no {variant} buffer loaded")))
    }
}

/// BCQ trained on the variant's buffer with this seed.
pub fn train_variant(cfg: &ExperimentConfig, arts: &Artifacts, variant: Variant, seed: u64) -> Result<BcqAgent> {
    train_bcq(arts.buffer(variant)?, seed, cfg.bcq_timesteps, cfg.bcq.clone())
        .map_err(|e| ExperimentError::stage("train-bcq", format!("{variant} seed {seed}: {e}")))
}

/// Mean greedy return of `agent` on one held-out environment, plus the
/// environment steps spent gathering its encoding.
///
/// Evaluation start states depend only on `(seed, env)`, so every variant is
/// scored on the same episodes.
pub fn evaluate_on_env(
    cfg: &ExperimentConfig,
    arts: &Artifacts,
    agent: &BcqAgent,
    variant: Variant,
    seed: u64,
    env: &ManifestEntry,
) -> Result<(f64, usize)> {
    let ctx = |e: &dyn std::fmt::Display| ExperimentError::stage("eval", format!("{} / {variant} / seed {seed}: {e}", env.label));
    let params = env.params();
    let (suffix, env_steps) = match variant {
        Variant::Baseline => (Vec::new(), 0),
        Variant::AugTrue => (vec![env.pole_length, env.cart_mass], 0),
        Variant::AugEncoding => {
            let enc_seed = rng::derive(seed, streams::NEW_ENV_ENCODING, u64::from(env.env_id));
            let policy = |s: &crate::cartpole::CartState| arts.dqn.greedy(s).unwrap_or(Action::Left);
            let enc = encode_new_environment(&arts.ae, &params, policy, enc_seed, cfg.encoding_trajectories).map_err(|e| ctx(&e))?;
            (enc.encoding.values, enc.env_steps)
        }
    };
    if agent.state_dim() != 4 + suffix.len() {
        return Err(ctx(&format!("agent expects {} inputs, observations have {}", agent.state_dim(), 4 + suffix.len())));
    }
    let mut rng = rng::seeded(rng::derive(seed, streams::EVALUATION, u64::from(env.env_id)));
    let mut total = 0.0;
    let mut obs = vec![0.0; agent.state_dim()];
    obs[4..].copy_from_slice(&suffix);
    for _ in 0..cfg.eval_episodes_per_seed {
        let mut failure = None;
        let ep = run_episode(
            |s: &crate::cartpole::CartState| {
                obs[..4].copy_from_slice(&s.to_array());
                match bcq_act(agent, &obs).map_err(|e| e.to_string()).and_then(|a| Action::from_index(a).map_err(|e| e.to_string())) {
                    Ok(a) => a,
                    Err(e) => {
                        failure.get_or_insert(e);
                        Action::Left
                    }
                }
            },
            &params,
            &mut rng,
            MAX_EPISODE_STEPS,
        )
        .map_err(|e| ctx(&e))?;
        if let Some(e) = failure {
            return Err(ctx(&e));
        }
        total += ep.ret;
    }
    Ok((total / cfg.eval_episodes_per_seed as f64, env_steps))
}

/// Trains BCQ for one `(variant, seed)` and evaluates it on `env`.
pub fn run_seed(cfg: &ExperimentConfig, arts: &Artifacts, variant: Variant, seed: u64, env: &ManifestEntry) -> Result<f64> {
    let agent = train_variant(cfg, arts, variant, seed)?;
    Ok(evaluate_on_env(cfg, arts, &agent, variant, seed, env)?.0)
}

/// One trained agent per `(variant, seed)`, evaluated on every held-out
/// environment. Training never touches an environment, so sharing the agent
/// across environments gives the same numbers as retraining per environment.
fn run_job(cfg: &ExperimentConfig, arts: &Artifacts, variant: Variant, seed: u64) -> Result<Vec<RunRecord>> {
    let agent = train_variant(cfg, arts, variant, seed)?;
    arts.manifest
        .new_entries()
        .into_iter()
        .map(|env| {
            let (mean_return, encoding_env_steps) = evaluate_on_env(cfg, arts, &agent, variant, seed, env)?;
            Ok(RunRecord {
                env_label: env.label.clone(),
                env_id: env.env_id,
                variant,
                seed,
                mean_return,
                encoding_env_steps,
            })
        })
        .collect()
}

/// Every `(variant, seed)` job, run in parallel when the `parallel` feature is
/// on, aggregated in a fixed order. `progress` is called once per finished job.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    layout: &Layout,
    progress: &(dyn Fn(Variant, u64, &[RunRecord]) + Sync),
) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let arts = Artifacts::load(layout, &cfg.variants)?;
    let jobs: Vec<(Variant, u64)> = cfg
        .variants
        .iter()
        .flat_map(|&v| cfg.seeds.seeds().into_iter().map(move |s| (v, s)))
        .collect();
    let work = |&(variant, seed): &(Variant, u64)| {
        let records = run_job(cfg, &arts, variant, seed)?;
        progress(variant, seed, &records);
        Ok(records)
    };
    #[cfg(feature = "parallel")]
    let results: Vec<Result<Vec<RunRecord>>> = {
        use rayon::prelude::*;
        jobs.par_iter().map(work).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<Vec<RunRecord>>> = jobs.iter().map(work).collect();

    let mut runs = Vec::new();
    for r in results {
        runs.extend(r?);
    }
    let labels = arts.manifest.new_entries().into_iter().map(|e| e.label.clone()).collect();
    ExperimentReport::aggregate(cfg.hash(), labels, cfg.variants.clone(), runs, start.elapsed().as_secs_f64())
}

/// Writes `results.csv`, `results.md`, `report.json` and, when both the
/// encoding and baseline variants are present, `ratio.svg`.
pub fn write_report(report: &ExperimentReport, layout: &Layout) -> Result<Vec<PathBuf>> {
    const STAGE: &str = "report";
    std::fs::create_dir_all(&layout.root).map_err(io(STAGE))?;
    let cells: Vec<_> = report.all_cells().cloned().collect();
    let mut written = vec![layout.results_csv(), layout.results_md(), layout.report_json()];
    std::fs::write(layout.results_csv(), report.to_csv()?).map_err(io(STAGE))?;
    std::fs::write(layout.results_md(), render_markdown(&cells)?).map_err(io(STAGE))?;
    write_json(STAGE, &layout.report_json(), report)?;
    if report.variants.contains(&Variant::AugEncoding) && report.variants.contains(&Variant::Baseline) {
        std::fs::write(layout.ratio_svg(), render_ratio_svg(&cells, Variant::AugEncoding, Variant::Baseline)?).map_err(io(STAGE))?;
        written.push(layout.ratio_svg());
    }
    Ok(written)
}
