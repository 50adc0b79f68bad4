//! Trajectory AutoEncoder and per-environment latent encodings.
//!
//! The AutoEncoder reconstructs flattened 16-state windows (79 numbers) through
//! a 4-dim bottleneck. An environment's encoding is the mean bottleneck vector
//! of a handful of its windows.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::index;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cartpole::{run_episode, Action, CartState, EnvError, EnvParams, MAX_EPISODE_STEPS};
use crate::dataset::{episode_windows, flat_window_len, Dataset, DatasetError, WINDOW_LEN};
use crate::net::{AdamConfig, Gradients, Matrix, Mlp, NetError, NetSpec};
use crate::rng::{self, streams};

pub const LATENT_DIM: usize = 4;
pub const TRAJECTORIES_PER_ENCODING: usize = 5;
/// Episodes rolled before giving up on gathering new-environment windows.
pub const MAX_ENCODING_EPISODES: usize = 1000;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("window has length {got}, expected {expected}")]
    WrongLength { expected: usize, got: usize },
    #[error("env {env_id}: need {needed} windows, only {available} available")]
    NotEnoughWindows { env_id: u32, needed: usize, available: usize },
    #[error("env {env_id}: gathered {gathered} of {needed} windows in {episodes} episodes")]
    GatherFailed { env_id: u32, needed: usize, gathered: usize, episodes: usize },
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EncoderError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentEncoding {
    pub env_id: u32,
    pub values: Vec<f64>,
    pub n_trajectories: usize,
}

impl LatentEncoding {
    pub fn distance(&self, other: &LatentEncoding) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AeConfig {
    pub window_len: usize,
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for AeConfig {
    fn default() -> Self {
        AeConfig {
            window_len: WINDOW_LEN,
            hidden: vec![256, 64],
            latent_dim: LATENT_DIM,
            lr: 1e-3,
            batch_size: 64,
            epochs: 200,
        }
    }
}

impl AeConfig {
    pub fn input_dim(&self) -> usize {
        flat_window_len(self.window_len)
    }

    fn encoder_spec(&self) -> NetSpec {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(&self.hidden);
        sizes.push(self.latent_dim);
        NetSpec::relu(&sizes)
    }

    fn decoder_spec(&self) -> NetSpec {
        let mut sizes = vec![self.latent_dim];
        sizes.extend(self.hidden.iter().rev());
        sizes.push(self.input_dim());
        NetSpec::relu(&sizes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoEncoder {
    pub encoder: Mlp,
    pub decoder: Mlp,
}

/// Contents of `ae.json` next to the two network checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeHeader {
    pub window_len: usize,
    pub input_dim: usize,
    pub latent_dim: usize,
    pub training_seed: u64,
    pub final_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeTrainingReport {
    /// Corpus MSE of the freshly initialized network.
    pub initial_mse: f64,
    pub final_mse: f64,
    /// Mean mini-batch loss of every epoch.
    pub epoch_loss: Vec<f64>,
}

impl AutoEncoder {
    pub fn init(cfg: &AeConfig, seed: u64) -> Result<Self> {
        let mut rng = rng::stream(seed, streams::NET_INIT);
        let encoder = Mlp::init(&cfg.encoder_spec(), &mut rng)?;
        let decoder = Mlp::init(&cfg.decoder_spec(), &mut rng)?;
        Ok(AutoEncoder { encoder, decoder })
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    fn check(&self, window: &[f64]) -> Result<()> {
        if window.len() != self.input_dim() {
            return Err(EncoderError::WrongLength {
                expected: self.input_dim(),
                got: window.len(),
            });
        }
        Ok(())
    }

    /// Bottleneck activation for one flattened window.
    pub fn encode(&self, window: &[f64]) -> Result<Vec<f64>> {
        self.check(window)?;
        Ok(self.encoder.predict(window)?)
    }

    pub fn reconstruct(&self, window: &[f64]) -> Result<Vec<f64>> {
        let latent = self.encode(window)?;
        Ok(self.decoder.predict(&latent)?)
    }

    /// Mean squared reconstruction error over every element of `windows`.
    pub fn reconstruction_mse(&self, windows: &[Vec<f64>]) -> Result<f64> {
        if windows.is_empty() {
            return Err(EncoderError::EmptyTrainingSet);
        }
        let mut total = 0.0;
        for chunk in windows.chunks(256) {
            let x = Matrix::from_rows(chunk)?;
            let latent = self.encoder.forward_batch(&x)?;
            let recon = self.decoder.forward_batch(latent.output())?;
            total += recon
                .output()
                .data
                .iter()
                .zip(&x.data)
                .map(|(p, t)| (p - t) * (p - t))
                .sum::<f64>();
        }
        Ok(total / (windows.len() * self.input_dim()) as f64)
    }

    /// Mean element-wise MSE of `batch` with its encoder and decoder gradients.
    pub fn loss_gradients(&self, batch: &Matrix) -> Result<(f64, Gradients, Gradients)> {
        let latent = self.encoder.forward_batch(batch)?;
        let recon = self.decoder.forward_batch(latent.output())?;
        let n = batch.data.len() as f64;
        let mut loss = 0.0;
        let mut grad = Matrix::zeros(batch.rows, batch.cols);
        for ((g, p), t) in grad.data.iter_mut().zip(&recon.output().data).zip(&batch.data) {
            let d = p - t;
            loss += d * d;
            *g = 2.0 * d / n;
        }
        let (dec_grads, latent_grad) = self.decoder.backward_with_input_grad(&recon, &grad)?;
        let enc_grads = self.encoder.backward(&latent, &latent_grad)?;
        Ok((loss / n, enc_grads, dec_grads))
    }

    /// One Adam step on the mean element-wise MSE of `batch`; returns the loss.
    pub fn train_batch(&mut self, batch: &Matrix, lr: f64) -> Result<f64> {
        let adam = AdamConfig::default();
        let (loss, enc_grads, dec_grads) = self.loss_gradients(batch)?;
        self.decoder.adam_step(&dec_grads, lr, &adam)?;
        self.encoder.adam_step(&enc_grads, lr, &adam)?;
        Ok(loss)
    }

    pub fn save(&self, dir: &Path, header: &AeHeader) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.encoder.save(&dir.join("ae_encoder.teanet"))?;
        self.decoder.save(&dir.join("ae_decoder.teanet"))?;
        let json = serde_json::to_string_pretty(header).map_err(|e| EncoderError::Format(e.to_string()))?;
        std::fs::write(dir.join("ae.json"), json + "\n")?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<(Self, AeHeader)> {
        let encoder = Mlp::load(&dir.join("ae_encoder.teanet"))?;
        let decoder = Mlp::load(&dir.join("ae_decoder.teanet"))?;
        let header: AeHeader = serde_json::from_str(&std::fs::read_to_string(dir.join("ae.json"))?)
            .map_err(|e| EncoderError::Format(e.to_string()))?;
        if encoder.input_dim() != header.input_dim
            || encoder.output_dim() != header.latent_dim
            || decoder.input_dim() != header.latent_dim
            || decoder.output_dim() != header.input_dim
        {
            return Err(EncoderError::Format("ae.json disagrees with network shapes".into()));
        }
        Ok((AutoEncoder { encoder, decoder }, header))
    }
}

/// Trains encoder and decoder jointly on reconstruction MSE.
///
/// Windows are reshuffled every epoch from the run seed; the last mini-batch
/// of an epoch may be smaller than `batch_size`.
pub fn train_autoencoder(windows: &[Vec<f64>], seed: u64, cfg: &AeConfig) -> Result<(AutoEncoder, AeTrainingReport)> {
    if windows.is_empty() {
        return Err(EncoderError::EmptyTrainingSet);
    }
    let mut ae = AutoEncoder::init(cfg, seed)?;
    for w in windows {
        ae.check(w)?;
    }
    let initial_mse = ae.reconstruction_mse(windows)?;
    let mut rng = rng::stream(seed, streams::SHUFFLE);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let rows: Vec<&[f64]> = chunk.iter().map(|&i| windows[i].as_slice()).collect();
            sum += ae.train_batch(&Matrix::from_rows(&rows)?, cfg.lr)?;
            batches += 1;
        }
        epoch_loss.push(sum / batches as f64);
    }
    let final_mse = ae.reconstruction_mse(windows)?;
    Ok((
        ae,
        AeTrainingReport {
            initial_mse,
            final_mse,
            epoch_loss,
        },
    ))
}

/// Arithmetic mean of the bottleneck vectors of `windows`.
pub fn mean_encoding(ae: &AutoEncoder, env_id: u32, windows: &[Vec<f64>]) -> Result<LatentEncoding> {
    if windows.is_empty() {
        return Err(EncoderError::NotEnoughWindows {
            env_id,
            needed: 1,
            available: 0,
        });
    }
    let mut values = vec![0.0; ae.latent_dim()];
    for w in windows {
        for (acc, v) in values.iter_mut().zip(ae.encode(w)?) {
            *acc += v;
        }
    }
    let n = windows.len() as f64;
    values.iter_mut().for_each(|v| *v /= n);
    Ok(LatentEncoding {
        env_id,
        values,
        n_trajectories: windows.len(),
    })
}

/// Encodes a source environment from `n` of its buffer windows, chosen
/// uniformly without replacement from the seeded stream.
///
/// Only the first window of each episode is eligible, the same position
/// [`encode_new_environment`] observes, so source and new-environment
/// encodings summarize comparable trajectory segments.
pub fn encode_environment(ae: &AutoEncoder, buffer: &Dataset, env_id: u32, n: usize, seed: u64) -> Result<LatentEncoding> {
    let window_len = (ae.input_dim() + 1) / (CartState::DIM + 1);
    let starts: BTreeSet<usize> = buffer.episodes().into_iter().map(|r| r.start).collect();
    let windows: Vec<_> = buffer
        .extract_windows(env_id, window_len)?
        .into_iter()
        .filter(|w| starts.contains(&w.first_transition))
        .collect();
    if windows.len() < n || n == 0 {
        return Err(EncoderError::NotEnoughWindows {
            env_id,
            needed: n,
            available: windows.len(),
        });
    }
    let mut rng = rng::stream(seed, streams::WINDOW_SELECTION);
    let picked: Vec<Vec<f64>> = index::sample(&mut rng, windows.len(), n)
        .into_iter()
        .map(|i| windows[i].flatten())
        .collect();
    mean_encoding(ae, env_id, &picked)
}

/// Encodings for every environment present in a baseline buffer.
pub fn encode_all_environments(ae: &AutoEncoder, buffer: &Dataset, n: usize, seed: u64) -> Result<BTreeMap<u32, LatentEncoding>> {
    buffer
        .env_ids()
        .into_iter()
        .map(|id| Ok((id, encode_environment(ae, buffer, id, n, seed)?)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewEnvEncoding {
    pub encoding: LatentEncoding,
    pub episodes: usize,
    /// Environment steps spent gathering the windows.
    pub env_steps: usize,
}

/// Encodes an unseen environment by interacting with it: rolls episodes with
/// `policy`, keeps the first window of each long-enough episode until `n` are
/// gathered, and averages their encodings.
pub fn encode_new_environment<P>(ae: &AutoEncoder, params: &EnvParams, mut policy: P, seed: u64, n: usize) -> Result<NewEnvEncoding>
where
    P: FnMut(&CartState) -> Action,
{
    let window_len = (ae.input_dim() + 1) / (CartState::DIM + 1);
    let mut rng = rng::seeded(seed);
    let mut gathered = Vec::with_capacity(n);
    let mut episodes = 0;
    let mut env_steps = 0;
    while gathered.len() < n {
        if episodes == MAX_ENCODING_EPISODES {
            return Err(EncoderError::GatherFailed {
                env_id: params.env_id,
                needed: n,
                gathered: gathered.len(),
                episodes,
            });
        }
        let episode = run_episode(&mut policy, params, &mut rng, MAX_EPISODE_STEPS)?;
        episodes += 1;
        env_steps += episode.len();
        if let Some(first) = episode_windows(&episode, window_len).first() {
            gathered.push(first.flatten());
        }
    }
    Ok(NewEnvEncoding {
        encoding: mean_encoding(ae, params.env_id, &gathered)?,
        episodes,
        env_steps,
    })
}

pub fn save_encodings(path: &Path, encodings: &BTreeMap<u32, LatentEncoding>) -> Result<()> {
    let list: Vec<&LatentEncoding> = encodings.values().collect();
    let json = serde_json::to_string_pretty(&list).map_err(|e| EncoderError::Format(e.to_string()))?;
    std::fs::write(path, json + "\n")?;
    Ok(())
}

pub fn load_encodings(path: &Path) -> Result<BTreeMap<u32, LatentEncoding>> {
    let list: Vec<LatentEncoding> =
        serde_json::from_str(&std::fs::read_to_string(path)?).map_err(|e| EncoderError::Format(e.to_string()))?;
    Ok(list.into_iter().map(|e| (e.env_id, e)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Transition, TrajectoryWindow};
    use crate::net::Dense;

    fn small_cfg() -> AeConfig {
        AeConfig {
            hidden: vec![32, 16],
            epochs: 400,
            batch_size: 1,
            ..AeConfig::default()
        }
    }

    fn window(seed: u64) -> Vec<f64> {
        use rand::Rng;
        let mut rng = rng::seeded(seed);
        (0..79).map(|i| if i % 5 == 4 { rng.random_range(0..2) as f64 } else { rng.random_range(-0.2..0.2) }).collect()
    }

    #[test]
    fn default_shapes() {
        let ae = AutoEncoder::init(&AeConfig::default(), 0).unwrap();
        assert_eq!(ae.encoder.spec().layer_sizes, vec![79, 256, 64, 4]);
        assert_eq!(ae.decoder.spec().layer_sizes, vec![4, 64, 256, 79]);
        assert_eq!(ae.encode(&window(1)).unwrap().len(), 4);
        assert!(matches!(ae.encode(&[0.0; 78]), Err(EncoderError::WrongLength { .. })));
    }

    #[test]
    fn encode_is_deterministic_and_zero_encoder_gives_zero() {
        let mut ae = AutoEncoder::init(&AeConfig::default(), 3).unwrap();
        let w = window(2);
        assert_eq!(ae.encode(&w).unwrap(), ae.encode(&w).unwrap());
        let spec = ae.encoder.spec().clone();
        let zeros = spec.layer_sizes.windows(2).map(|p| Dense { inputs: p[0], outputs: p[1], weights: vec![0.0; p[0] * p[1]], biases: vec![0.0; p[1]] }).collect();
        ae.encoder = Mlp::from_layers(spec, zeros);
        assert_eq!(ae.encode(&w).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn overfits_single_window() {
        let w = vec![window(5)];
        let (ae, report) = train_autoencoder(&w, 1, &small_cfg()).unwrap();
        assert!(report.final_mse < 1e-3, "mse {}", report.final_mse);
        assert!(report.final_mse < report.initial_mse);
        assert_eq!(ae.reconstruction_mse(&w).unwrap(), report.final_mse);
    }

    #[test]
    fn training_is_deterministic_and_rejects_empty() {
        let ws: Vec<_> = (0..6).map(window).collect();
        let cfg = AeConfig { epochs: 3, batch_size: 4, ..small_cfg() };
        let a = train_autoencoder(&ws, 9, &cfg).unwrap();
        let b = train_autoencoder(&ws, 9, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(matches!(train_autoencoder(&[], 9, &cfg), Err(EncoderError::EmptyTrainingSet)));
    }

    fn buffer_with_windows(env_id: u32, windows: usize) -> Dataset {
        let mut ds = Dataset::baseline();
        for e in 0..windows {
            for i in 0..16 {
                let s = vec![e as f64 * 0.01, i as f64 * 0.01, 0.0, 0.0];
                let n = vec![e as f64 * 0.01, (i + 1) as f64 * 0.01, 0.0, 0.0];
                ds.append(Transition { state: s, action: Action::Left, reward: 1.0, next_state: n, done: i == 15, env_id }).unwrap();
            }
        }
        ds
    }

    #[test]
    fn encode_environment_averages_selected_windows() {
        let ae = AutoEncoder::init(&AeConfig::default(), 4).unwrap();
        let ds = buffer_with_windows(2, 8);
        let windows = ds.extract_windows(2, 16).unwrap();
        assert_eq!(windows.len(), 8);
        let enc = encode_environment(&ae, &ds, 2, 5, 17).unwrap();
        assert_eq!(enc.n_trajectories, 5);
        // Recompute by hand over the same selection.
        let mut rng = rng::stream(17, streams::WINDOW_SELECTION);
        let idx: Vec<usize> = index::sample(&mut rng, 8, 5).into_iter().collect();
        let latents: Vec<Vec<f64>> = idx.iter().map(|&i| ae.encode(&windows[i].flatten()).unwrap()).collect();
        for k in 0..4 {
            let mean = latents.iter().map(|l| l[k]).sum::<f64>() / 5.0;
            assert!((enc.values[k] - mean).abs() < 1e-12);
        }
        assert_eq!(enc, encode_environment(&ae, &ds, 2, 5, 17).unwrap());
        assert!(matches!(encode_environment(&ae, &ds, 2, 9, 17), Err(EncoderError::NotEnoughWindows { available: 8, .. })));
    }

    #[test]
    fn single_and_identical_windows() {
        let ae = AutoEncoder::init(&AeConfig::default(), 4).unwrap();
        let w = window(8);
        let one = mean_encoding(&ae, 0, std::slice::from_ref(&w)).unwrap();
        assert_eq!(one.values, ae.encode(&w).unwrap());
        let five = mean_encoding(&ae, 0, &vec![w.clone(); 5]).unwrap();
        for (a, b) in five.values.iter().zip(ae.encode(&w).unwrap()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn new_environment_encoding() {
        let ae = AutoEncoder::init(&AeConfig::default(), 4).unwrap();
        let params = EnvParams::standard(7);
        let policy = |s: &CartState| if s.theta + 0.5 * s.theta_dot > 0.0 { Action::Right } else { Action::Left };
        let a = encode_new_environment(&ae, &params, policy, 11, 5).unwrap();
        let b = encode_new_environment(&ae, &params, policy, 11, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.encoding.n_trajectories, 5);
        assert_eq!(a.encoding.env_id, 7);
        assert_eq!(a.episodes, 5);
        // Always pushing right never survives 15 steps on a short pole.
        let short = EnvParams { env_id: 8, pole_length: 0.1, cart_mass: 0.5 };
        let err = encode_new_environment(&ae, &short, |_: &CartState| Action::Right, 1, 5).unwrap_err();
        assert!(matches!(err, EncoderError::GatherFailed { .. }));
    }

    #[test]
    fn window_len_recovered_from_input_dim() {
        let w = TrajectoryWindow { states: vec![CartState::default(); 16], actions: vec![Action::Left; 15], env_id: 0, first_transition: 0 };
        assert_eq!((w.flat_len() + 1) / 5, 16);
    }

    #[test]
    fn checkpoint_and_encoding_files_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let ae = AutoEncoder::init(&AeConfig::default(), 2).unwrap();
        let header = AeHeader { window_len: 16, input_dim: 79, latent_dim: 4, training_seed: 42, final_mse: 0.5 };
        ae.save(dir.path(), &header).unwrap();
        let (back, h) = AutoEncoder::load(dir.path()).unwrap();
        assert_eq!(back, ae);
        assert_eq!(h, header);
        let encs: BTreeMap<u32, LatentEncoding> = (0..3).map(|i| (i, LatentEncoding { env_id: i, values: vec![i as f64 * 0.1; 4], n_trajectories: 5 })).collect();
        let path = dir.path().join("enc.json");
        save_encodings(&path, &encs).unwrap();
        assert_eq!(load_encodings(&path).unwrap(), encs);
    }
}
