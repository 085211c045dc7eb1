//! Field irrigation under uncertain weather.
//!
//! Soil moisture `m` in `[0, 50]` percent on 100 states, irrigation `i` in
//! `[0, 150]` mm on 75 inputs, net weather `e` in `[-20, 20]` mm on 40
//! disturbances. Moisture evolves as `clamp(m + i/3 + e, 0, 50)` and is
//! snapped to the nearest state. Dry soil (the ten lowest states) costs 1200
//! per stage; otherwise the cost is `(m - 50)^2 / 100`, plus `20 i` for
//! water.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AffineMap, Empirical, EmpiricalTable, FiniteSystem, FiniteSystemParts};
use crate::scenarios::{Builtin, PenaltyGrid, RolloutDefaults, RolloutModelName, ScenarioFile, UnitMaps};

pub const N_STATES: usize = 100;
pub const N_INPUTS: usize = 75;
pub const N_DIST: usize = 40;
/// Moisture at or below the tenth state counts as dry.
pub const DRY_STATES: usize = 10;
pub const DRY_COST: f64 = 1200.0;
pub const WATER_PRICE: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IrrigationParams {
    pub horizon: usize,
    /// Weights of the uniform, first and second weather components.
    pub mixture_weights: [f64; 3],
    /// Share of a concentrated component placed on its interval.
    pub concentration: f64,
    /// Weather intervals (mm) of the two concentrated components.
    pub intervals: [[f64; 2]; 2],
}

impl Default for IrrigationParams {
    fn default() -> Self {
        Self {
            horizon: 8,
            mixture_weights: [1.0 / 3.0; 3],
            concentration: 0.95,
            intervals: [[-15.0, -5.0], [-13.0, -2.0]],
        }
    }
}

pub fn moisture_map() -> AffineMap {
    AffineMap::spanning(0.0, 50.0, N_STATES)
}

pub fn irrigation_map() -> AffineMap {
    AffineMap::spanning(0.0, 150.0, N_INPUTS)
}

pub fn weather_map() -> AffineMap {
    AffineMap::spanning(-20.0, 20.0, N_DIST)
}

/// Nearest state to moisture `s`, ties to the lower state.
fn snap(s: f64, map: &AffineMap) -> usize {
    let t = (s - map.offset) / map.slope;
    let lo = t.floor();
    let idx = if t - lo > 0.5 { lo + 1.0 } else { lo };
    (idx.max(0.0) as usize).min(N_STATES - 1)
}

fn moisture_cost(x: usize, m: &AffineMap) -> f64 {
    if x < DRY_STATES {
        DRY_COST
    } else {
        (m.apply(x) - 50.0).powi(2) / 100.0
    }
}

fn weather_distribution(p: &IrrigationParams) -> Result<Vec<f64>> {
    let e = weather_map();
    let uniform = vec![1.0 / N_DIST as f64; N_DIST];
    let mut components = vec![uniform.clone()];
    for [lo, hi] in p.intervals {
        let inside: Vec<usize> = (0..N_DIST).filter(|&w| (lo..=hi).contains(&e.apply(w))).collect();
        if inside.is_empty() {
            return Err(Error::InvalidArgument(format!("weather interval [{lo}, {hi}] contains no disturbance")));
        }
        let mut c: Vec<f64> = uniform.iter().map(|u| (1.0 - p.concentration) * u).collect();
        for &w in &inside {
            c[w] += p.concentration / inside.len() as f64;
        }
        components.push(c);
    }
    let total: f64 = p.mixture_weights.iter().sum();
    if p.mixture_weights.iter().any(|&w| !(w >= 0.0)) || !(total > 0.0) {
        return Err(Error::InvalidArgument(format!("mixture weights must be nonnegative with positive sum: {:?}", p.mixture_weights)));
    }
    let mut r = vec![0.0; N_DIST];
    for (wgt, c) in p.mixture_weights.iter().zip(&components) {
        for (rw, cw) in r.iter_mut().zip(c) {
            *rw += wgt * cw;
        }
    }
    let s: f64 = r.iter().sum();
    r.iter_mut().for_each(|v| *v /= s);
    Ok(r)
}

pub fn build_irrigation_with(p: &IrrigationParams) -> Result<FiniteSystem> {
    if !(0.0..=1.0).contains(&p.concentration) {
        return Err(Error::InvalidArgument(format!("concentration must lie in [0, 1], got {}", p.concentration)));
    }
    let (m, i, e) = (moisture_map(), irrigation_map(), weather_map());
    let mut transition = Vec::with_capacity(N_STATES * N_INPUTS * N_DIST);
    let mut stage_cost = Vec::with_capacity(N_STATES * N_INPUTS);
    for x in 0..N_STATES {
        for u in 0..N_INPUTS {
            for w in 0..N_DIST {
                let s = (m.apply(x) + i.apply(u) / 3.0 + e.apply(w)).clamp(0.0, 50.0);
                transition.push(snap(s, &m) as u32);
            }
            stage_cost.push(moisture_cost(x, &m) + WATER_PRICE * i.apply(u));
        }
    }
    let terminal_cost = (0..N_STATES).map(|x| moisture_cost(x, &m)).collect();
    Ok(FiniteSystem::new(FiniteSystemParts {
        n_states: N_STATES,
        n_inputs: N_INPUTS,
        n_dist: N_DIST,
        horizon: p.horizon,
        transition,
        stage_cost,
        terminal_cost,
        empirical: Empirical::Stationary(EmpiricalTable::shared(weather_distribution(p)?)),
    })?)
}

/// The default irrigation system over eight stages.
pub fn build_irrigation() -> FiniteSystem {
    build_irrigation_with(&IrrigationParams::default()).expect("default parameters are valid")
}

/// Initial moisture state of the bundled protocol (about 30 percent).
pub const INITIAL_STATE: usize = 59;

/// The irrigation system with unit maps, the four reference penalty pairs
/// and rollout defaults.
pub fn irrigation_scenario() -> ScenarioFile {
    let mut s = ScenarioFile::finite(build_irrigation());
    s.name = Some("irrigation".into());
    s.description = Some(
        "Soil moisture (0-50 %) on 100 states, irrigation (0-150 mm) on 75 inputs, weather (-20..20 mm) on 40 disturbances, 8 stages."
            .into(),
    );
    s.maps = UnitMaps { state: Some(moisture_map()), input: Some(irrigation_map()), disturbance: Some(weather_map()) };
    s.penalty_grid =
        Some(PenaltyGrid { pairs: vec![(0.0, 0.0), (0.0, 100.0), (30.0, 100.0), (100.0, 100.0)], ..Default::default() });
    s.rollout = Some(RolloutDefaults { n_rollouts: 5000, seed: 2024, initial_state: INITIAL_STATE, model: RolloutModelName::Empirical });
    s.builtin = Some(Builtin { name: "irrigation".into(), params: serde_json::Value::Null });
    s
}
