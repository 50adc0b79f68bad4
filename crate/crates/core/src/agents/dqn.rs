//! Online DQN with experience replay and a hard-updated target network.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, check_dim, read_json, write_json, AgentError, Result};
use crate::cartpole::{run_episode, Action, CartPole, CartState, EnvParams, MultiEnv, MAX_EPISODE_STEPS};
use crate::dataset::{Dataset, Transition};
use crate::net::{AdamConfig, Gradients, Matrix, Mlp, NetSpec};
use crate::rng::{self, streams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DqnConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub gamma: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_steps: u64,
    pub target_update_interval: u64,
    pub budget: u64,
    /// Transitions gathered before the first gradient step.
    pub learning_starts: usize,
    pub huber_delta: f64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub solved_return: f64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        DqnConfig {
            hidden: vec![256, 256],
            lr: 1e-3,
            gamma: 0.99,
            replay_capacity: 50_000,
            batch_size: 64,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: 10_000,
            target_update_interval: 500,
            budget: 150_000,
            learning_starts: 1_000,
            huber_delta: 1.0,
            eval_interval: 2_000,
            eval_episodes: 20,
            solved_return: 195.0,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(AgentError::InvalidConfig(m.into()));
        if self.budget == 0 {
            return bad("budget must be at least 1");
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return bad("replay capacity must hold at least one batch");
        }
        if self.target_update_interval == 0 || self.eval_interval == 0 {
            return bad("intervals must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        Ok(())
    }

    fn spec(&self) -> NetSpec {
        let mut sizes = vec![CartState::DIM];
        sizes.extend(&self.hidden);
        sizes.push(Action::COUNT);
        NetSpec::relu(&sizes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DqnAgent {
    pub q_net: Mlp,
    pub target_net: Mlp,
    /// Environment steps taken so far; drives the epsilon schedule.
    pub steps: u64,
    pub config: DqnConfig,
}

impl DqnAgent {
    pub fn new(config: DqnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let q_net = Mlp::init(&config.spec(), &mut rng::stream(seed, streams::NET_INIT))?;
        Ok(DqnAgent {
            target_net: q_net.clone(),
            q_net,
            steps: 0,
            config,
        })
    }

    /// Linear decay from `epsilon_start` to `epsilon_end`, then constant.
    pub fn epsilon(&self) -> f64 {
        let c = &self.config;
        let frac = (self.steps as f64 / c.epsilon_decay_steps.max(1) as f64).min(1.0);
        c.epsilon_start + frac * (c.epsilon_end - c.epsilon_start)
    }

    pub fn q_values(&self, state: &[f64]) -> Result<Vec<f64>> {
        check_dim(CartState::DIM, state.len())?;
        Ok(self.q_net.predict(state)?)
    }

    pub fn greedy(&self, state: &CartState) -> Result<Action> {
        Ok(Action::from_index(argmax(&self.q_values(&state.to_array())?))?)
    }

    /// Mean Huber TD loss of `batch` against the current target network.
    pub fn batch_loss(&self, batch: &[&Transition]) -> Result<f64> {
        let (states, targets) = self.td_targets(batch)?;
        let q = self.q_net.forward_batch(&states)?;
        let mut loss = 0.0;
        for (i, t) in batch.iter().enumerate() {
            loss += huber(q.output().row(i)[t.action.index()] - targets[i], self.config.huber_delta).0;
        }
        Ok(loss / batch.len() as f64)
    }

    /// Mean Huber TD loss of `batch` and its gradient for the online network.
    pub fn loss_gradients(&self, batch: &[&Transition]) -> Result<(f64, Gradients)> {
        let (states, targets) = self.td_targets(batch)?;
        let cache = self.q_net.forward_batch(&states)?;
        let n = batch.len() as f64;
        let mut grad = Matrix::zeros(batch.len(), Action::COUNT);
        let mut loss = 0.0;
        for (i, t) in batch.iter().enumerate() {
            let a = t.action.index();
            let (l, g) = huber(cache.output().row(i)[a] - targets[i], self.config.huber_delta);
            loss += l;
            grad.row_mut(i)[a] = g / n;
        }
        Ok((loss / n, self.q_net.backward(&cache, &grad)?))
    }

    /// One Adam step on the mean Huber TD loss; returns the pre-update loss.
    pub fn train_batch(&mut self, batch: &[&Transition]) -> Result<f64> {
        let (loss, grads) = self.loss_gradients(batch)?;
        self.q_net.adam_step(&grads, self.config.lr, &AdamConfig::default())?;
        Ok(loss)
    }

    fn td_targets(&self, batch: &[&Transition]) -> Result<(Matrix, Vec<f64>)> {
        if batch.is_empty() {
            return Err(AgentError::EmptyBatch);
        }
        for t in batch {
            check_dim(CartState::DIM, t.state.len())?;
            check_dim(CartState::DIM, t.next_state.len())?;
        }
        let states = Matrix::from_rows(&batch.iter().map(|t| t.state.as_slice()).collect::<Vec<_>>())?;
        let next = Matrix::from_rows(&batch.iter().map(|t| t.next_state.as_slice()).collect::<Vec<_>>())?;
        let next_q = self.target_net.forward_batch(&next)?;
        let targets = batch
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let best = next_q.output().row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max);
                t.reward + if t.done { 0.0 } else { self.config.gamma * best }
            })
            .collect();
        Ok((states, targets))
    }

    pub fn sync_target(&mut self) {
        self.target_net.copy_weights_from(&self.q_net);
    }

    /// `dqn.teanet` plus `dqn.json` in `dir`. Only the online network is kept.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.q_net.save(&dir.join("dqn.teanet"))?;
        write_json(
            &dir.join("dqn.json"),
            &DqnHeader {
                steps: self.steps,
                config: self.config.clone(),
            },
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let header: DqnHeader = read_json(&dir.join("dqn.json"))?;
        let q_net = Mlp::load(&dir.join("dqn.teanet"))?;
        if q_net.spec() != &header.config.spec() {
            return Err(AgentError::Format("network shape disagrees with dqn.json".into()));
        }
        Ok(DqnAgent {
            target_net: q_net.clone(),
            q_net,
            steps: header.steps,
            config: header.config,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DqnHeader {
    steps: u64,
    config: DqnConfig,
}

fn huber(d: f64, delta: f64) -> (f64, f64) {
    if d.abs() <= delta {
        (0.5 * d * d, d)
    } else {
        (delta * (d.abs() - 0.5 * delta), delta * d.signum())
    }
}

/// With probability `epsilon` a uniform action, otherwise the greedy one.
pub fn dqn_act<R: Rng + ?Sized>(agent: &DqnAgent, state: &[f64], epsilon: f64, rng: &mut R) -> Result<Action> {
    check_dim(CartState::DIM, state.len())?;
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return Ok(Action::from_index(rng.random_range(0..Action::COUNT))?);
    }
    Ok(Action::from_index(argmax(&agent.q_values(state)?))?)
}

/// Fixed-capacity FIFO of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// `n` transitions drawn uniformly with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&Transition> {
        (0..n).map(|_| &self.items[rng.random_range(0..self.items.len())]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DqnReport {
    pub steps: u64,
    pub episodes: usize,
    pub solved: bool,
    /// `(environment step, greedy average return)` at each evaluation.
    pub evaluations: Vec<(u64, f64)>,
}

/// Mean greedy return over `episodes` episodes whose start states come from `seed`.
pub fn evaluate_greedy(agent: &DqnAgent, params: &EnvParams, seed: u64, episodes: usize) -> Result<f64> {
    let mut rng = rng::stream(seed, streams::EVALUATION);
    let mut total = 0.0;
    for _ in 0..episodes {
        let mut failure = None;
        let ep = run_episode(
            |s: &CartState| {
                agent.greedy(s).unwrap_or_else(|e| {
                    failure.get_or_insert(e);
                    Action::Left
                })
            },
            params,
            &mut rng,
            MAX_EPISODE_STEPS,
        )?;
        if let Some(e) = failure {
            return Err(e);
        }
        total += ep.ret;
    }
    Ok(total / episodes.max(1) as f64)
}

/// Trains on one environment until the greedy policy averages
/// `solved_return` over `eval_episodes` episodes or the step budget runs out.
pub fn train_dqn(params: &EnvParams, seed: u64, config: DqnConfig) -> Result<(DqnAgent, DqnReport)> {
    let mut agent = DqnAgent::new(config, seed)?;
    let cfg = agent.config.clone();
    let mut env_rng = rng::stream(seed, streams::ENV);
    let mut explore = rng::stream(seed, streams::EXPLORATION);
    let mut batch_rng = rng::stream(seed, streams::BATCHES);
    let mut replay = ReplayBuffer::new(cfg.replay_capacity);
    let mut env = CartPole::new(*params);
    let mut state = env.reset(&mut env_rng);
    let mut report = DqnReport {
        steps: 0,
        episodes: 0,
        solved: false,
        evaluations: Vec::new(),
    };
    while agent.steps < cfg.budget {
        let action = dqn_act(&agent, &state.to_array(), agent.epsilon(), &mut explore)?;
        let result = env.step(action)?;
        replay.push(Transition {
            state: state.to_array().to_vec(),
            action,
            reward: result.reward,
            next_state: result.next_state.to_array().to_vec(),
            done: result.done,
            env_id: params.env_id,
        });
        agent.steps += 1;
        state = if result.done || result.truncated {
            report.episodes += 1;
            env.reset(&mut env_rng)
        } else {
            result.next_state
        };
        if replay.len() >= cfg.learning_starts.max(cfg.batch_size) {
            let batch = replay.sample(cfg.batch_size, &mut batch_rng);
            agent.train_batch(&batch)?;
        }
        if agent.steps % cfg.target_update_interval == 0 {
            agent.sync_target();
        }
        if agent.steps % cfg.eval_interval == 0 {
            let avg = evaluate_greedy(&agent, params, seed, cfg.eval_episodes)?;
            report.evaluations.push((agent.steps, avg));
            if avg >= cfg.solved_return {
                report.solved = true;
                break;
            }
        }
    }
    report.steps = agent.steps;
    Ok((agent, report))
}

/// Rolls `agent` with `epsilon` exploration on a multi-environment wrapper over
/// `envs` until every member has at least `budget_per_env` transitions. Whole
/// episodes are kept, so counts may overshoot.
pub fn collect_offline_buffer(
    agent: &DqnAgent,
    envs: &[EnvParams],
    seed: u64,
    budget_per_env: usize,
    epsilon: f64,
) -> Result<Dataset> {
    let mut multi = MultiEnv::new(envs.to_vec())?;
    let mut env_rng = rng::stream(seed, streams::ENV);
    let mut explore = rng::stream(seed, streams::EXPLORATION);
    let mut counts: BTreeMap<u32, usize> = envs.iter().map(|p| (p.env_id, 0)).collect();
    let mut ds = Dataset::baseline();
    ds.meta.creation_seed = Some(seed);
    while counts.values().any(|&c| c < budget_per_env) {
        let (env_id, mut state) = multi.reset(&mut env_rng);
        loop {
            let action = dqn_act(agent, &state.to_array(), epsilon, &mut explore)?;
            let result = multi.step(action)?;
            ds.append(Transition {
                state: state.to_array().to_vec(),
                action,
                reward: result.reward,
                next_state: result.next_state.to_array().to_vec(),
                done: result.done,
                env_id,
            })?;
            *counts.get_mut(&env_id).unwrap() += 1;
            if result.done || result.truncated {
                break;
            }
            state = result.next_state;
        }
    }
    Ok(ds)
}
