//! Discrete batch-constrained Q-learning.
//!
//! Training consumes a [`Dataset`] and nothing else; this module has no access
//! to any simulator. Actions are plain indices `0..ACTIONS`.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, check_dim, read_json, write_json, AgentError, Result};
use crate::dataset::{Dataset, Transition, Variant};
use crate::net::{softmax, softmax_nll_loss, AdamConfig, Gradients, Matrix, Mlp, NetSpec};
use crate::rng::{self, streams};

pub const ACTIONS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BcqConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub gamma: f64,
    pub batch_size: usize,
    /// Probability-ratio threshold of the action filter.
    pub tau: f64,
    pub target_update_interval: u64,
    pub huber_delta: f64,
}

impl Default for BcqConfig {
    fn default() -> Self {
        BcqConfig {
            hidden: vec![256, 256],
            lr: 3e-4,
            gamma: 0.99,
            batch_size: 128,
            tau: 0.3,
            target_update_interval: 1_000,
            huber_delta: 1.0,
        }
    }
}

impl BcqConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(AgentError::InvalidConfig(m.into()));
        if self.batch_size == 0 || self.target_update_interval == 0 {
            return bad("batch size and target interval must be positive");
        }
        if !(0.0..1.0).contains(&self.tau) {
            return bad("tau must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        Ok(())
    }

    fn spec(&self, state_dim: usize) -> NetSpec {
        let mut sizes = vec![state_dim];
        sizes.extend(&self.hidden);
        sizes.push(ACTIONS);
        NetSpec::relu(&sizes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BcqAgent {
    pub q_net: Mlp,
    pub target_q_net: Mlp,
    /// Behaviour-cloning logits.
    pub bc_net: Mlp,
    pub steps: u64,
    pub config: BcqConfig,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BcqStepStats {
    pub q_loss: f64,
    pub bc_loss: f64,
}

/// Checkpoint header stored as `bcq.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcqHeader {
    pub variant: Variant,
    pub seed: u64,
    pub timesteps: u64,
    pub tau: f64,
    pub gamma: f64,
    pub state_dim: usize,
    pub config: BcqConfig,
}

impl BcqAgent {
    pub fn new(state_dim: usize, config: BcqConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let spec = config.spec(state_dim);
        let mut rng = rng::stream(seed, streams::NET_INIT);
        let q_net = Mlp::init(&spec, &mut rng)?;
        let bc_net = Mlp::init(&spec, &mut rng)?;
        Ok(BcqAgent {
            target_q_net: q_net.clone(),
            q_net,
            bc_net,
            steps: 0,
            config,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.q_net.input_dim()
    }

    pub fn q_values(&self, state: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.state_dim(), state.len())?;
        Ok(self.q_net.predict(state)?)
    }

    pub fn bc_probs(&self, state: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.state_dim(), state.len())?;
        Ok(softmax(&self.bc_net.predict(state)?))
    }

    pub fn sync_target(&mut self) {
        self.target_q_net.copy_weights_from(&self.q_net);
    }

    /// Mean Huber TD loss and mean behaviour-cloning cross-entropy on `batch`.
    pub fn losses(&self, batch: &[&Transition]) -> Result<BcqStepStats> {
        Ok(self.gradients(batch)?.2)
    }

    /// Gradients of the two losses for the Q network and the behaviour network.
    pub fn gradients(&self, batch: &[&Transition]) -> Result<(Gradients, Gradients, BcqStepStats)> {
        if batch.is_empty() {
            return Err(AgentError::EmptyBatch);
        }
        let d = self.state_dim();
        for t in batch {
            check_dim(d, t.state.len())?;
            check_dim(d, t.next_state.len())?;
        }
        let n = batch.len() as f64;
        let states = Matrix::from_rows(&batch.iter().map(|t| t.state.as_slice()).collect::<Vec<_>>())?;
        let next = Matrix::from_rows(&batch.iter().map(|t| t.next_state.as_slice()).collect::<Vec<_>>())?;

        let q_next = self.q_net.forward_batch(&next)?;
        let target_next = self.target_q_net.forward_batch(&next)?;
        let bc_next = self.bc_net.forward_batch(&next)?;

        let q_cache = self.q_net.forward_batch(&states)?;
        let bc_cache = self.bc_net.forward_batch(&states)?;
        let mut q_grad = Matrix::zeros(batch.len(), ACTIONS);
        let mut bc_grad = Matrix::zeros(batch.len(), ACTIONS);
        let mut stats = BcqStepStats { q_loss: 0.0, bc_loss: 0.0 };
        for (i, t) in batch.iter().enumerate() {
            let a = t.action.index();
            let target = if t.done {
                t.reward
            } else {
                let best = constrained_argmax(q_next.output().row(i), bc_next.output().row(i), self.config.tau);
                t.reward + self.config.gamma * target_next.output().row(i)[best]
            };
            let diff = q_cache.output().row(i)[a] - target;
            let delta = self.config.huber_delta;
            if diff.abs() <= delta {
                stats.q_loss += 0.5 * diff * diff;
                q_grad.row_mut(i)[a] = diff / n;
            } else {
                stats.q_loss += delta * (diff.abs() - 0.5 * delta);
                q_grad.row_mut(i)[a] = delta * diff.signum() / n;
            }
            let (nll, g) = softmax_nll_loss(bc_cache.output().row(i), a)?;
            stats.bc_loss += nll;
            for (dst, v) in bc_grad.row_mut(i).iter_mut().zip(g) {
                *dst = v / n;
            }
        }
        stats.q_loss /= n;
        stats.bc_loss /= n;
        let q_grads = self.q_net.backward(&q_cache, &q_grad)?;
        let bc_grads = self.bc_net.backward(&bc_cache, &bc_grad)?;
        Ok((q_grads, bc_grads, stats))
    }

    /// Three files in `dir`: `bcq_q.teanet`, `bcq_target.teanet`, `bcq_bc.teanet`, plus `bcq.json`.
    pub fn save(&self, dir: &Path, variant: Variant, seed: u64) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.q_net.save(&dir.join("bcq_q.teanet"))?;
        self.target_q_net.save(&dir.join("bcq_target.teanet"))?;
        self.bc_net.save(&dir.join("bcq_bc.teanet"))?;
        write_json(
            &dir.join("bcq.json"),
            &BcqHeader {
                variant,
                seed,
                timesteps: self.steps,
                tau: self.config.tau,
                gamma: self.config.gamma,
                state_dim: self.state_dim(),
                config: self.config.clone(),
            },
        )
    }

    pub fn load(dir: &Path) -> Result<(Self, BcqHeader)> {
        let header: BcqHeader = read_json(&dir.join("bcq.json"))?;
        let spec = header.config.spec(header.state_dim);
        let agent = BcqAgent {
            q_net: Mlp::load(&dir.join("bcq_q.teanet"))?,
            target_q_net: Mlp::load(&dir.join("bcq_target.teanet"))?,
            bc_net: Mlp::load(&dir.join("bcq_bc.teanet"))?,
            steps: header.timesteps,
            config: header.config.clone(),
        };
        if [&agent.q_net, &agent.target_q_net, &agent.bc_net].iter().any(|n| n.spec() != &spec) {
            return Err(AgentError::Format("network shapes disagree with bcq.json".into()));
        }
        Ok((agent, header))
    }
}

/// Actions whose behaviour probability relative to the most likely action
/// exceeds `tau`. With `tau <= 0` every action is allowed.
pub fn allowed_actions(bc_logits: &[f64], tau: f64) -> Vec<bool> {
    let probs = softmax(bc_logits);
    let max = probs.iter().copied().fold(0.0, f64::max);
    probs.iter().map(|&p| tau <= 0.0 || p / max > tau).collect()
}

/// Greedy action among the allowed ones (ties to the lowest index); falls back
/// to the behaviour argmax if the filter rejects everything.
pub fn constrained_argmax(q: &[f64], bc_logits: &[f64], tau: f64) -> usize {
    let allowed = allowed_actions(bc_logits, tau);
    let mut best: Option<usize> = None;
    for (a, &ok) in allowed.iter().enumerate() {
        if ok && best.is_none_or(|b| q[a] > q[b]) {
            best = Some(a);
        }
    }
    best.unwrap_or_else(|| argmax(bc_logits))
}

pub fn bcq_act(agent: &BcqAgent, state: &[f64]) -> Result<usize> {
    check_dim(agent.state_dim(), state.len())?;
    let q = agent.q_net.predict(state)?;
    let logits = agent.bc_net.predict(state)?;
    Ok(constrained_argmax(&q, &logits, agent.config.tau))
}

/// One gradient step for both networks; the target network is refreshed by
/// hard copy every `target_update_interval` steps. Returns pre-update losses.
pub fn bcq_train_step(agent: &mut BcqAgent, batch: &[&Transition]) -> Result<BcqStepStats> {
    let (q_grads, bc_grads, stats) = agent.gradients(batch)?;
    let adam = AdamConfig::default();
    agent.q_net.adam_step(&q_grads, agent.config.lr, &adam)?;
    agent.bc_net.adam_step(&bc_grads, agent.config.lr, &adam)?;
    agent.steps += 1;
    if agent.steps.is_multiple_of(agent.config.target_update_interval) {
        agent.sync_target();
    }
    Ok(stats)
}

/// Exactly `timesteps` gradient steps on mini-batches drawn uniformly with
/// replacement from `dataset` using the run seed.
pub fn train_bcq(dataset: &Dataset, seed: u64, timesteps: u64, config: BcqConfig) -> Result<BcqAgent> {
    if dataset.is_empty() {
        return Err(AgentError::EmptyDataset);
    }
    let mut agent = BcqAgent::new(dataset.state_dim(), config, seed)?;
    let mut rng = rng::stream(seed, streams::BATCHES);
    let data = dataset.transitions();
    for _ in 0..timesteps {
        let batch: Vec<&Transition> = (0..agent.config.batch_size)
            .map(|_| &data[rng.random_range(0..data.len())])
            .collect();
        bcq_train_step(&mut agent, &batch)?;
    }
    Ok(agent)
}
