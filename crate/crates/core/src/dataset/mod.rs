//! Offline transition datasets tagged with environment ids.
//!
//! A [`Dataset`] is an ordered list of transitions sharing one state
//! dimension. Baseline datasets hold raw 4-dim CartPole states; the two
//! augmented variants append a per-environment suffix (a learned latent
//! encoding, or the true pole length and cart mass) to every state.

pub mod format;

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::cartpole::Action;
use crate::cartpole::{CartState, EnvManifest, Episode};
use crate::encoder::LatentEncoding;

pub use format::{load, save, DatasetMeta, BUF_MAGIC, BUF_VERSION};

pub const WINDOW_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("state dimension {got} does not match dataset dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{variant} datasets cannot have state dimension {state_dim}")]
    InvalidVariantDim { variant: Variant, state_dim: usize },
    #[error("operation requires a baseline dataset, found {0}")]
    NotBaseline(Variant),
    #[error("env_id {0} does not occur in the dataset")]
    UnknownEnv(u32),
    #[error("no augmentation suffix for env_id {0}")]
    MissingSuffix(u32),
    #[error("window length must be at least 2")]
    WindowTooShort,
    #[error("{0}")]
    Format(String),
    #[error("checksum mismatch: stored {stored:#018x}, computed {computed:#018x}")]
    Checksum { stored: u64, computed: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DatasetError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Baseline,
    AugEncoding,
    AugTrue,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Baseline, Variant::AugEncoding, Variant::AugTrue];

    pub fn code(self) -> u8 {
        match self {
            Variant::Baseline => 0,
            Variant::AugEncoding => 1,
            Variant::AugTrue => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Variant::ALL.into_iter().find(|v| v.code() == code)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::AugEncoding => "aug_encoding",
            Variant::AugTrue => "aug_true",
        }
    }

    /// Column heading used in reports.
    pub fn display_name(self) -> &'static str {
        match self {
            Variant::Baseline => "Baseline",
            Variant::AugEncoding => "TEA",
            Variant::AugTrue => "AUG-TRUE",
        }
    }

    fn dim_allowed(self, state_dim: usize) -> bool {
        match self {
            Variant::Baseline => state_dim == CartState::DIM,
            Variant::AugTrue => state_dim == CartState::DIM + 2,
            Variant::AugEncoding => state_dim > CartState::DIM,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "baseline" => Ok(Variant::Baseline),
            "aug_encoding" | "tea" => Ok(Variant::AugEncoding),
            "aug_true" => Ok(Variant::AugTrue),
            other => Err(format!("unknown variant '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
    pub env_id: u32,
}

/// 16 consecutive states of one episode and the 15 actions between them.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryWindow {
    pub states: Vec<CartState>,
    pub actions: Vec<Action>,
    pub env_id: u32,
    /// Buffer index of the transition leaving `states[0]`.
    pub first_transition: usize,
}

impl TrajectoryWindow {
    /// Interleaved `[s0, a0, s1, a1, ..., a14, s15]`; actions as raw 0.0 / 1.0.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.flat_len());
        for (i, s) in self.states.iter().enumerate() {
            out.extend_from_slice(&s.to_array());
            if let Some(a) = self.actions.get(i) {
                out.push(a.index() as f64);
            }
        }
        out
    }

    pub fn flat_len(&self) -> usize {
        flat_window_len(self.states.len())
    }
}

/// Length of a flattened window of `window_len` states: `16 * 4 + 15 = 79`.
pub fn flat_window_len(window_len: usize) -> usize {
    window_len * CartState::DIM + window_len.saturating_sub(1)
}

/// Cuts one episode's states into non-overlapping windows aligned to its start.
pub fn episode_windows(episode: &Episode, window_len: usize) -> Vec<TrajectoryWindow> {
    let states = episode.states();
    let actions: Vec<Action> = episode.steps.iter().map(|s| s.action).collect();
    let env_id = episode.steps.first().map_or(0, |s| s.env_id);
    (0..states.len() / window_len)
        .map(|k| {
            let start = k * window_len;
            TrajectoryWindow {
                states: states[start..start + window_len].to_vec(),
                actions: actions[start..start + window_len - 1].to_vec(),
                env_id,
                first_transition: start,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    variant: Variant,
    state_dim: usize,
    transitions: Vec<Transition>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn new(variant: Variant, state_dim: usize) -> Result<Self> {
        if !variant.dim_allowed(state_dim) {
            return Err(DatasetError::InvalidVariantDim { variant, state_dim });
        }
        Ok(Dataset {
            variant,
            state_dim,
            transitions: Vec::new(),
            meta: DatasetMeta::default(),
        })
    }

    pub fn baseline() -> Self {
        Self::new(Variant::Baseline, CartState::DIM).unwrap()
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn append(&mut self, t: Transition) -> Result<()> {
        for got in [t.state.len(), t.next_state.len()] {
            if got != self.state_dim {
                return Err(DatasetError::DimensionMismatch {
                    expected: self.state_dim,
                    got,
                });
            }
        }
        self.transitions.push(t);
        Ok(())
    }

    /// Records every step of a rolled-out episode.
    pub fn append_episode(&mut self, episode: &Episode) -> Result<()> {
        for s in &episode.steps {
            self.append(Transition {
                state: s.state.to_array().to_vec(),
                action: s.action,
                reward: s.reward,
                next_state: s.next_state.to_array().to_vec(),
                done: s.done,
                env_id: s.env_id,
            })?;
        }
        Ok(())
    }

    /// Distinct environment ids in ascending order.
    pub fn env_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.transitions.iter().map(|t| t.env_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn count_by_env(&self) -> BTreeMap<u32, usize> {
        let mut counts = BTreeMap::new();
        for t in &self.transitions {
            *counts.entry(t.env_id).or_insert(0) += 1;
        }
        counts
    }

    /// Contiguous index ranges forming episodes.
    ///
    /// Truncated episodes are stored with `done = false`, so an episode also
    /// ends where the next transition does not start from this one's
    /// `next_state` or belongs to another environment.
    pub fn episodes(&self) -> Vec<Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for (i, t) in self.transitions.iter().enumerate() {
            let boundary = match self.transitions.get(i + 1) {
                None => true,
                Some(next) => t.done || next.env_id != t.env_id || next.state != t.next_state,
            };
            if boundary {
                out.push(start..i + 1);
                start = i + 1;
            }
        }
        out
    }

    /// Non-overlapping windows of `window_len` states from every episode of `env_id`.
    pub fn extract_windows(&self, env_id: u32, window_len: usize) -> Result<Vec<TrajectoryWindow>> {
        if self.variant != Variant::Baseline {
            return Err(DatasetError::NotBaseline(self.variant));
        }
        if window_len < 2 {
            return Err(DatasetError::WindowTooShort);
        }
        if !self.transitions.iter().any(|t| t.env_id == env_id) {
            return Err(DatasetError::UnknownEnv(env_id));
        }
        let mut windows = Vec::new();
        for range in self.episodes() {
            let episode = &self.transitions[range.clone()];
            if episode[0].env_id != env_id {
                continue;
            }
            let n_states = episode.len() + 1;
            for k in 0..n_states / window_len {
                let start = k * window_len;
                let states = (start..start + window_len)
                    .map(|i| match episode.get(i) {
                        Some(t) => CartState::from_slice(&t.state),
                        None => CartState::from_slice(&episode[i - 1].next_state),
                    })
                    .collect();
                let actions = episode[start..start + window_len - 1].iter().map(|t| t.action).collect();
                windows.push(TrajectoryWindow {
                    states,
                    actions,
                    env_id,
                    first_transition: range.start + start,
                });
            }
        }
        Ok(windows)
    }

    fn augment_with<F>(&self, variant: Variant, suffix_dim: usize, suffix_for: F) -> Result<Dataset>
    where
        F: Fn(u32) -> Option<Vec<f64>>,
    {
        if self.variant != Variant::Baseline {
            return Err(DatasetError::NotBaseline(self.variant));
        }
        let mut suffixes = BTreeMap::new();
        for id in self.env_ids() {
            let suffix = suffix_for(id).ok_or(DatasetError::MissingSuffix(id))?;
            if suffix.len() != suffix_dim {
                return Err(DatasetError::DimensionMismatch {
                    expected: suffix_dim,
                    got: suffix.len(),
                });
            }
            suffixes.insert(id, suffix);
        }
        let mut out = Dataset::new(variant, self.state_dim + suffix_dim)?;
        out.meta = self.meta.clone();
        out.transitions = self
            .transitions
            .iter()
            .map(|t| {
                let suffix = &suffixes[&t.env_id];
                let extend = |s: &[f64]| [s, suffix.as_slice()].concat();
                Transition {
                    state: extend(&t.state),
                    next_state: extend(&t.next_state),
                    ..t.clone()
                }
            })
            .collect();
        Ok(out)
    }

    /// Appends each transition's environment encoding to its states.
    pub fn augment_with_encoding(&self, encodings: &BTreeMap<u32, LatentEncoding>) -> Result<Dataset> {
        let dim = encodings.values().next().map_or(0, |e| e.values.len());
        self.augment_with(Variant::AugEncoding, dim, |id| encodings.get(&id).map(|e| e.values.clone()))
    }

    /// Appends `[pole_length, cart_mass]` from the manifest to every state.
    pub fn augment_with_true_params(&self, manifest: &EnvManifest) -> Result<Dataset> {
        self.augment_with(Variant::AugTrue, 2, |id| {
            manifest.get(id).map(|e| vec![e.pole_length, e.cart_mass])
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cartpole::{run_episode, EnvParams};
    use crate::rng::seeded;

    fn transition(env_id: u32, state: [f64; 4], next: [f64; 4], done: bool) -> Transition {
        Transition {
            state: state.to_vec(),
            action: Action::Right,
            reward: 1.0,
            next_state: next.to_vec(),
            done,
            env_id,
        }
    }

    /// Synthetic episode of `steps` transitions with distinct, chained states.
    fn push_episode(ds: &mut Dataset, env_id: u32, steps: usize, tag: f64, terminal: bool) {
        for i in 0..steps {
            let s = [tag, i as f64, 0.0, 0.0];
            let n = [tag, (i + 1) as f64, 0.0, 0.0];
            let mut t = transition(env_id, s, n, terminal && i + 1 == steps);
            t.action = Action::from_index(i % 2).unwrap();
            ds.append(t).unwrap();
        }
    }

    #[test]
    fn append_checks_dimension_and_keeps_order() {
        let mut ds = Dataset::baseline();
        ds.append(transition(0, [0.0; 4], [0.0; 4], false)).unwrap();
        assert_eq!(ds.len(), 1);
        let bad = Transition {
            state: vec![0.0; 6],
            next_state: vec![0.0; 6],
            ..transition(0, [0.0; 4], [0.0; 4], false)
        };
        assert!(matches!(ds.append(bad), Err(DatasetError::DimensionMismatch { .. })));
        let mut big = Dataset::baseline();
        for i in 0..10_000 {
            big.append(transition(0, [i as f64, 0.0, 0.0, 0.0], [0.0; 4], false)).unwrap();
        }
        assert!(big.transitions().iter().enumerate().all(|(i, t)| t.state[0] == i as f64));
    }

    #[test]
    fn variant_dims_enforced() {
        assert!(Dataset::new(Variant::AugTrue, 6).is_ok());
        assert!(Dataset::new(Variant::AugTrue, 8).is_err());
        assert!(Dataset::new(Variant::Baseline, 5).is_err());
        assert!(Dataset::new(Variant::AugEncoding, 8).is_ok());
    }

    #[test]
    fn window_counts_at_boundaries() {
        for (steps, expected) in [(16, 1), (14, 0), (15, 1), (40, 2), (47, 3)] {
            let mut ds = Dataset::baseline();
            push_episode(&mut ds, 3, steps, 1.0, true);
            let w = ds.extract_windows(3, 16).unwrap();
            assert_eq!(w.len(), expected, "{steps} steps");
        }
        let mut ds = Dataset::baseline();
        push_episode(&mut ds, 3, 40, 1.0, true);
        let w = ds.extract_windows(3, 16).unwrap();
        assert_eq!(w[0].states[0].x_dot, 0.0);
        assert_eq!(w[0].states[15].x_dot, 15.0);
        assert_eq!(w[1].states[0].x_dot, 16.0);
        assert_eq!(w[1].states[15].x_dot, 31.0);
        assert_eq!(w[1].first_transition, 16);
    }

    #[test]
    fn truncated_episodes_split_on_state_discontinuity() {
        let mut ds = Dataset::baseline();
        // Two truncated episodes (done=false) back to back, 20 steps each.
        push_episode(&mut ds, 0, 20, 1.0, false);
        push_episode(&mut ds, 0, 20, 2.0, false);
        assert_eq!(ds.episodes(), vec![0..20, 20..40]);
        let w = ds.extract_windows(0, 16).unwrap();
        assert_eq!(w.len(), 2);
        assert!(w.iter().all(|w| w.states.iter().all(|s| s.x == w.states[0].x)));
    }

    #[test]
    fn windows_filter_by_env_and_reject_unknown_or_augmented() {
        let mut ds = Dataset::baseline();
        push_episode(&mut ds, 0, 33, 1.0, true);
        push_episode(&mut ds, 1, 17, 2.0, true);
        assert_eq!(ds.extract_windows(0, 16).unwrap().len(), 2);
        assert_eq!(ds.extract_windows(1, 16).unwrap().len(), 1);
        assert!(matches!(ds.extract_windows(7, 16), Err(DatasetError::UnknownEnv(7))));
        let manifest = EnvManifest::sample(1, 2, 0);
        let aug = ds.augment_with_true_params(&manifest).unwrap();
        assert!(matches!(aug.extract_windows(0, 16), Err(DatasetError::NotBaseline(_))));
    }

    #[test]
    fn flatten_layout() {
        let mut states = vec![CartState::default(); 16];
        let w = TrajectoryWindow {
            states: states.clone(),
            actions: vec![Action::Left; 15],
            env_id: 0,
            first_transition: 0,
        };
        assert_eq!(w.flatten(), vec![0.0; 79]);
        states[3] = CartState::new(1.0, 2.0, 3.0, 4.0);
        let mut actions = vec![Action::Left; 15];
        actions[14] = Action::Right;
        let w = TrajectoryWindow { states, actions, env_id: 0, first_transition: 0 };
        let flat = w.flatten();
        assert_eq!(flat.len(), 79);
        assert_eq!(&flat[15..19], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(flat[74], 1.0);
        assert_eq!(flat_window_len(16), 79);
    }

    #[test]
    fn episode_windows_agree_with_buffer_windows() {
        let params = EnvParams::standard(2);
        let policy = |s: &CartState| if s.theta_dot > 0.0 { Action::Right } else { Action::Left };
        let ep = run_episode(policy, &params, &mut seeded(8), 100).unwrap();
        let mut ds = Dataset::baseline();
        ds.append_episode(&ep).unwrap();
        let a = episode_windows(&ep, 16);
        let b = ds.extract_windows(2, 16).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 101 / 16);
    }

    #[test]
    fn augmentation_appends_per_env_suffix() {
        let mut ds = Dataset::baseline();
        push_episode(&mut ds, 0, 5, 1.0, true);
        push_episode(&mut ds, 1, 5, 2.0, true);
        let zero: BTreeMap<u32, LatentEncoding> = [0, 1]
            .into_iter()
            .map(|id| (id, LatentEncoding { env_id: id, values: vec![0.0; 4], n_trajectories: 5 }))
            .collect();
        let aug = ds.augment_with_encoding(&zero).unwrap();
        assert_eq!(aug.state_dim(), 8);
        assert_eq!(aug.variant(), Variant::AugEncoding);
        for (a, o) in aug.transitions().iter().zip(ds.transitions()) {
            assert_eq!(a.state, [o.state.as_slice(), &[0.0; 4]].concat());
            assert_eq!(a.action, o.action);
            assert_eq!(a.done, o.done);
        }
        assert!(matches!(aug.augment_with_encoding(&zero), Err(DatasetError::NotBaseline(_))));
        let mut partial = zero.clone();
        partial.remove(&1);
        assert!(matches!(ds.augment_with_encoding(&partial), Err(DatasetError::MissingSuffix(1))));
    }

    #[test]
    fn true_param_augmentation() {
        let mut ds = Dataset::baseline();
        push_episode(&mut ds, 0, 3, 1.0, true);
        push_episode(&mut ds, 1, 3, 2.0, true);
        let mut manifest = EnvManifest::sample(3, 2, 0);
        manifest.environments[0].pole_length = 0.5;
        manifest.environments[0].cart_mass = 1.0;
        let aug = ds.augment_with_true_params(&manifest).unwrap();
        assert_eq!(aug.state_dim(), 6);
        for t in aug.transitions().iter().filter(|t| t.env_id == 0) {
            assert_eq!(&t.state[4..], &[0.5, 1.0]);
            assert_eq!(&t.next_state[4..], &[0.5, 1.0]);
        }
        let s0 = &aug.transitions()[0].state[4..];
        let s1 = &aug.transitions()[3].state[4..];
        assert_ne!(s0, s1);
        manifest.environments.remove(1);
        assert!(matches!(ds.augment_with_true_params(&manifest), Err(DatasetError::MissingSuffix(1))));
    }
}
