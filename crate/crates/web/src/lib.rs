//! Browser bindings for exploring the parameterized CartPole.
//!
//! Each exported function returns a JSON string so the page needs no glue
//! beyond `JSON.parse`. The plain-Rust versions are public for native tests.

use rand::Rng;
use serde::Serialize;
use tea_core::cartpole::{run_episode, Action, CartState, EnvManifest, EnvParams, POLE_LENGTH_RANGE, CART_MASS_RANGE};
use tea_core::rng::seeded;
use wasm_bindgen::prelude::*;

/// Action selector used by the demo.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Controller {
    Random,
    /// Linear state feedback tuned for the standard pole.
    Feedback,
}

impl Controller {
    pub fn parse(name: &str) -> Result<Self, String> {
        match name {
            "random" => Ok(Controller::Random),
            "feedback" => Ok(Controller::Feedback),
            other => Err(format!("unknown controller '{other}'")),
        }
    }
}

fn feedback(s: &CartState) -> Action {
    if s.theta + 0.5 * s.theta_dot + 0.01 * s.x + 0.1 * s.x_dot > 0.0 {
        Action::Right
    } else {
        Action::Left
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub states: Vec<[f64; 4]>,
    pub actions: Vec<usize>,
    pub ret: f64,
    pub truncated: bool,
    pub pole_length: f64,
    pub cart_mass: f64,
}

pub fn simulate(pole_length: f64, cart_mass: f64, controller: Controller, seed: u64, cap: usize) -> Result<Trajectory, String> {
    if !(pole_length > 0.0 && cart_mass > 0.0) {
        return Err("pole length and cart mass must be positive".into());
    }
    let params = EnvParams {
        env_id: 0,
        pole_length,
        cart_mass,
    };
    let mut rng = seeded(seed);
    let mut policy_rng = seeded(seed ^ 0x5eed);
    let policy = |s: &CartState| match controller {
        Controller::Feedback => feedback(s),
        Controller::Random => {
            if policy_rng.random_bool(0.5) {
                Action::Right
            } else {
                Action::Left
            }
        }
    };
    let ep = run_episode(policy, &params, &mut rng, cap.max(1)).map_err(|e| e.to_string())?;
    Ok(Trajectory {
        states: ep.states().iter().map(|s| s.to_array()).collect(),
        actions: ep.steps.iter().map(|s| s.action.index()).collect(),
        ret: ep.ret,
        truncated: ep.truncated,
        pole_length,
        cart_mass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReturnSurface {
    pub pole_lengths: Vec<f64>,
    pub cart_masses: Vec<f64>,
    /// `returns[i][j]` is the mean return at `pole_lengths[i]`, `cart_masses[j]`.
    pub returns: Vec<Vec<f64>>,
}

/// Mean return of `controller` over a `resolution x resolution` grid spanning
/// the sampling ranges of both parameters.
pub fn return_surface(resolution: usize, controller: Controller, episodes: usize, seed: u64) -> Result<ReturnSurface, String> {
    if resolution < 2 || episodes == 0 {
        return Err("need resolution >= 2 and at least one episode".into());
    }
    let axis = |(lo, hi): (f64, f64)| -> Vec<f64> {
        (0..resolution)
            .map(|i| lo + (hi - lo) * i as f64 / (resolution - 1) as f64)
            .collect()
    };
    let pole_lengths = axis(POLE_LENGTH_RANGE);
    let cart_masses = axis(CART_MASS_RANGE);
    let mut returns = Vec::with_capacity(resolution);
    for &l in &pole_lengths {
        let mut row = Vec::with_capacity(resolution);
        for &m in &cart_masses {
            let mut total = 0.0;
            for k in 0..episodes {
                total += simulate(l, m, controller, seed.wrapping_add(k as u64), 500)?.ret;
            }
            row.push(total / episodes as f64);
        }
        returns.push(row);
    }
    Ok(ReturnSurface {
        pole_lengths,
        cart_masses,
        returns,
    })
}

fn to_json<T: Serialize>(value: Result<T, String>) -> Result<String, JsValue> {
    let value = value.map_err(|e| JsValue::from_str(&e))?;
    serde_json::to_string(&value).map_err(|e| JsValue::from_str(&e.to_string()))
}

/// One episode under the chosen controller (`"random"` or `"feedback"`).
#[wasm_bindgen]
pub fn simulate_episode(pole_length: f64, cart_mass: f64, controller: &str, seed: u32) -> Result<String, JsValue> {
    to_json(Controller::parse(controller).and_then(|c| simulate(pole_length, cart_mass, c, u64::from(seed), 500)))
}

/// Source and held-out environment sets drawn from `seed`.
#[wasm_bindgen]
pub fn sample_environments(seed: u32, n_source: u32, n_new: u32) -> Result<String, JsValue> {
    to_json(Ok(EnvManifest::sample(u64::from(seed), n_source as usize, n_new as usize)))
}

/// Mean-return grid over pole length and cart mass.
#[wasm_bindgen]
pub fn return_grid(resolution: u32, controller: &str, episodes: u32, seed: u32) -> Result<String, JsValue> {
    to_json(Controller::parse(controller).and_then(|c| return_surface(resolution as usize, c, episodes as usize, u64::from(seed))))
}
