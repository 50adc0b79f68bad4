//! Parameterized CartPole-v1 dynamics.
//!
//! Physics follow the classic Barto/Sutton/Anderson cart-pole as shipped in
//! Gym's CartPole-v1: explicit Euler with `dt = 0.02`, force magnitude 10 N,
//! gravity 9.8, pole mass 0.1 kg. Only the (half) pole length and the cart
//! mass vary between environments.

use std::cell::Cell;
use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const GRAVITY: f64 = 9.8;
pub const POLE_MASS: f64 = 0.1;
pub const FORCE_MAG: f64 = 10.0;
pub const TAU: f64 = 0.02;
pub const X_THRESHOLD: f64 = 2.4;
pub const THETA_THRESHOLD: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;
pub const MAX_EPISODE_STEPS: usize = 500;
pub const RESET_NOISE: f64 = 0.05;

pub const POLE_LENGTH_RANGE: (f64, f64) = (0.1, 2.0);
pub const CART_MASS_RANGE: (f64, f64) = (0.5, 2.0);

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("step called on a terminal state")]
    TerminalState,
    #[error("environment set is empty")]
    EmptyEnvironmentSet,
    #[error("invalid action index {0}")]
    InvalidAction(usize),
    #[error("episode cap must be at least 1")]
    ZeroCap,
    #[error("manifest: {0}")]
    Manifest(String),
}

/// Push direction applied to the cart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Left = 0,
    Right = 1,
}

impl Action {
    pub const COUNT: usize = 2;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Result<Self, EnvError> {
        match index {
            0 => Ok(Action::Left),
            1 => Ok(Action::Right),
            other => Err(EnvError::InvalidAction(other)),
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Action::Left => Action::Right,
            Action::Right => Action::Left,
        }
    }

    fn force(self) -> f64 {
        match self {
            Action::Left => -FORCE_MAG,
            Action::Right => FORCE_MAG,
        }
    }
}

/// Dynamics parameters of one CartPole variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvParams {
    pub env_id: u32,
    /// Half-pole length, the `length` attribute of CartPole-v1.
    pub pole_length: f64,
    pub cart_mass: f64,
}

impl EnvParams {
    /// Unmodified CartPole-v1.
    pub fn standard(env_id: u32) -> Self {
        EnvParams {
            env_id,
            pole_length: 0.5,
            cart_mass: 1.0,
        }
    }

    /// Maps two unit-interval draws onto the sampling rectangle.
    pub fn from_unit(env_id: u32, u_length: f64, u_mass: f64) -> Self {
        let (l0, l1) = POLE_LENGTH_RANGE;
        let (m0, m1) = CART_MASS_RANGE;
        EnvParams {
            env_id,
            pole_length: l0 + (l1 - l0) * u_length,
            cart_mass: m0 + (m1 - m0) * u_mass,
        }
    }
}

/// Draws pole length first, then cart mass.
pub fn sample_env_params<R: Rng + ?Sized>(rng: &mut R, env_id: u32) -> EnvParams {
    let u_length: f64 = rng.random();
    let u_mass: f64 = rng.random();
    EnvParams::from_unit(env_id, u_length, u_mass)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CartState {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

impl CartState {
    pub const DIM: usize = 4;

    pub fn new(x: f64, x_dot: f64, theta: f64, theta_dot: f64) -> Self {
        CartState {
            x,
            x_dot,
            theta,
            theta_dot,
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.x_dot, self.theta, self.theta_dot]
    }

    pub fn from_slice(values: &[f64]) -> Self {
        CartState::new(values[0], values[1], values[2], values[3])
    }

    pub fn negated(self) -> Self {
        CartState::new(-self.x, -self.x_dot, -self.theta, -self.theta_dot)
    }

    pub fn is_terminal(&self) -> bool {
        self.x.abs() > X_THRESHOLD || self.theta.abs() > THETA_THRESHOLD
    }
}

impl fmt::Display for CartState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(x={:.4}, x_dot={:.4}, theta={:.4}, theta_dot={:.4})",
            self.x, self.x_dot, self.theta, self.theta_dot
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub next_state: CartState,
    pub reward: f64,
    pub done: bool,
    pub truncated: bool,
}

thread_local! {
    static STEP_CALLS: Cell<u64> = const { Cell::new(0) };
}

/// Number of [`step`] evaluations performed on the calling thread so far.
pub fn step_calls_on_this_thread() -> u64 {
    STEP_CALLS.with(Cell::get)
}

/// One Euler step of the cart-pole equations. `truncated` is always false
/// here; the episode cap is tracked by [`CartPole`] and [`run_episode`].
pub fn step(state: &CartState, action: Action, params: &EnvParams) -> Result<StepResult, EnvError> {
    if state.is_terminal() {
        return Err(EnvError::TerminalState);
    }
    STEP_CALLS.with(|c| c.set(c.get() + 1));
    let force = action.force();
    let total_mass = params.cart_mass + POLE_MASS;
    let polemass_length = POLE_MASS * params.pole_length;
    let (sin_theta, cos_theta) = state.theta.sin_cos();

    let temp = (force + polemass_length * state.theta_dot * state.theta_dot * sin_theta) / total_mass;
    let theta_acc = (GRAVITY * sin_theta - cos_theta * temp)
        / (params.pole_length * (4.0 / 3.0 - POLE_MASS * cos_theta * cos_theta / total_mass));
    let x_acc = temp - polemass_length * theta_acc * cos_theta / total_mass;

    let next_state = CartState {
        x: state.x + TAU * state.x_dot,
        x_dot: state.x_dot + TAU * x_acc,
        theta: state.theta + TAU * state.theta_dot,
        theta_dot: state.theta_dot + TAU * theta_acc,
    };
    Ok(StepResult {
        next_state,
        reward: 1.0,
        done: next_state.is_terminal(),
        truncated: false,
    })
}

/// Initial state with every component uniform in ±0.05, drawn in field order.
pub fn reset<R: Rng + ?Sized>(rng: &mut R) -> CartState {
    let mut draw = || rng.random_range(-RESET_NOISE..=RESET_NOISE);
    let x = draw();
    let x_dot = draw();
    let theta = draw();
    let theta_dot = draw();
    CartState::new(x, x_dot, theta, theta_dot)
}

/// Single-environment episode API with a step cap.
#[derive(Debug, Clone)]
pub struct CartPole {
    params: EnvParams,
    state: CartState,
    steps: usize,
    cap: usize,
    finished: bool,
}

impl CartPole {
    pub fn new(params: EnvParams) -> Self {
        CartPole {
            params,
            state: CartState::default(),
            steps: 0,
            cap: MAX_EPISODE_STEPS,
            finished: true,
        }
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    pub fn params(&self) -> &EnvParams {
        &self.params
    }

    pub fn state(&self) -> CartState {
        self.state
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> CartState {
        self.state = reset(rng);
        self.steps = 0;
        self.finished = false;
        self.state
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult, EnvError> {
        if self.finished {
            return Err(EnvError::TerminalState);
        }
        let mut result = step(&self.state, action, &self.params)?;
        self.steps += 1;
        result.truncated = !result.done && self.steps >= self.cap;
        self.state = result.next_state;
        self.finished = result.done || result.truncated;
        Ok(result)
    }
}

/// Switches uniformly at random to one of its member environments on every reset.
#[derive(Debug, Clone)]
pub struct MultiEnv {
    envs: Vec<EnvParams>,
    active: CartPole,
}

impl MultiEnv {
    pub fn new(envs: Vec<EnvParams>) -> Result<Self, EnvError> {
        let first = *envs.first().ok_or(EnvError::EmptyEnvironmentSet)?;
        Ok(MultiEnv {
            envs,
            active: CartPole::new(first),
        })
    }

    pub fn envs(&self) -> &[EnvParams] {
        &self.envs
    }

    pub fn active_params(&self) -> &EnvParams {
        self.active.params()
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> (u32, CartState) {
        let pick = rng.random_range(0..self.envs.len());
        self.active = CartPole::new(self.envs[pick]).with_cap(self.active.cap);
        let state = self.active.reset(rng);
        (self.envs[pick].env_id, state)
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult, EnvError> {
        self.active.step(action)
    }
}

/// Functional form of [`MultiEnv::reset`].
pub fn multi_env_reset<R: Rng + ?Sized>(
    envs: &[EnvParams],
    rng: &mut R,
) -> Result<(u32, CartState), EnvError> {
    let mut multi = MultiEnv::new(envs.to_vec())?;
    Ok(multi.reset(rng))
}

/// One environment step as recorded by an episode rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStep {
    pub state: CartState,
    pub action: Action,
    pub reward: f64,
    pub next_state: CartState,
    /// Termination only; truncation at the cap is reported on the episode.
    pub done: bool,
    pub env_id: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub ret: f64,
    pub steps: Vec<EpisodeStep>,
    pub truncated: bool,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// All visited states including the final one.
    pub fn states(&self) -> Vec<CartState> {
        let mut states: Vec<CartState> = self.steps.iter().map(|s| s.state).collect();
        if let Some(last) = self.steps.last() {
            states.push(last.next_state);
        }
        states
    }
}

/// Rolls out one episode from a fresh reset.
pub fn run_episode<R, P>(mut policy: P, params: &EnvParams, rng: &mut R, cap: usize) -> Result<Episode, EnvError>
where
    R: Rng + ?Sized,
    P: FnMut(&CartState) -> Action,
{
    if cap == 0 {
        return Err(EnvError::ZeroCap);
    }
    let mut env = CartPole::new(*params).with_cap(cap);
    let mut state = env.reset(rng);
    let mut steps = Vec::new();
    let mut ret = 0.0;
    loop {
        let action = policy(&state);
        let result = env.step(action)?;
        ret += result.reward;
        steps.push(EpisodeStep {
            state,
            action,
            reward: result.reward,
            next_state: result.next_state,
            done: result.done,
            env_id: params.env_id,
        });
        state = result.next_state;
        if result.done || result.truncated {
            return Ok(Episode {
                ret,
                steps,
                truncated: result.truncated,
            });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvRole {
    Source,
    New,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub env_id: u32,
    pub label: String,
    pub role: EnvRole,
    pub pole_length: f64,
    pub cart_mass: f64,
}

impl ManifestEntry {
    pub fn params(&self) -> EnvParams {
        EnvParams {
            env_id: self.env_id,
            pole_length: self.pole_length,
            cart_mass: self.cart_mass,
        }
    }
}

/// Environment-set manifest shared by every pipeline stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvManifest {
    pub seed: u64,
    pub environments: Vec<ManifestEntry>,
}

impl EnvManifest {
    /// Samples `n_source` source environments (ids `0..n_source`, labels `S1..`)
    /// followed by `n_new` held-out ones (labels `N1..`) from one seeded stream.
    pub fn sample(seed: u64, n_source: usize, n_new: usize) -> Self {
        let mut rng = crate::rng::seeded(seed);
        let mut environments = Vec::with_capacity(n_source + n_new);
        for i in 0..n_source + n_new {
            let params = sample_env_params(&mut rng, i as u32);
            let (role, label) = if i < n_source {
                (EnvRole::Source, format!("S{}", i + 1))
            } else {
                (EnvRole::New, format!("N{}", i - n_source + 1))
            };
            environments.push(ManifestEntry {
                env_id: params.env_id,
                label,
                role,
                pole_length: params.pole_length,
                cart_mass: params.cart_mass,
            });
        }
        EnvManifest { seed, environments }
    }

    pub fn source_envs(&self) -> Vec<EnvParams> {
        self.with_role(EnvRole::Source)
    }

    pub fn new_envs(&self) -> Vec<EnvParams> {
        self.with_role(EnvRole::New)
    }

    fn with_role(&self, role: EnvRole) -> Vec<EnvParams> {
        self.environments
            .iter()
            .filter(|e| e.role == role)
            .map(ManifestEntry::params)
            .collect()
    }

    /// Held-out entries in id order, with their labels.
    pub fn new_entries(&self) -> Vec<&ManifestEntry> {
        self.environments.iter().filter(|e| e.role == EnvRole::New).collect()
    }

    pub fn get(&self, env_id: u32) -> Option<&ManifestEntry> {
        self.environments.iter().find(|e| e.env_id == env_id)
    }

    pub fn by_label(&self, label: &str) -> Option<&ManifestEntry> {
        self.environments.iter().find(|e| e.label == label)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let mut ids: Vec<u32> = self.environments.iter().map(|e| e.env_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(EnvError::Manifest("duplicate env_id".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(path, json + "\n")
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let manifest: EnvManifest = serde_json::from_str(&text).map_err(std::io::Error::other)?;
        manifest
            .validate()
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        Ok(manifest)
    }
}
