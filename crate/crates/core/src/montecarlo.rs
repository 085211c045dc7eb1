//! Monte-Carlo rollouts of solved finite policies.
//!
//! Rollout `i` draws from stream `i` of a [`CounterRng`]: counter 0 picks the
//! initial state, counter `k + 1` the disturbance at stage `k`. Draws therefore
//! do not depend on scheduling, and per-stage statistics are folded in rollout
//! order so results are bit-identical for any thread count.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use rayon::prelude::*;

use crate::columnar::{fmt_num, write_atomic, Table};
use crate::error::{Error, Result};
use crate::model::{AdversaryRow, AffineMap, EmpiricalTable, FiniteSystem, SolveResult, PROBABILITY_TOL};
use crate::rng::CounterRng;

/// Where disturbances come from during a rollout.
#[derive(Debug, Clone, PartialEq)]
pub enum DisturbanceModel {
    /// The system's empirical distribution.
    Empirical,
    /// The solved adversary at the policy's input.
    Adversarial,
    /// An external table, laid out like the empirical one.
    FixedTable(EmpiricalTable),
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    State(usize),
    Distribution(Vec<f64>),
}

/// Raw trajectories go to `path` when `n_rollouts * (h + 1)` exceeds `threshold_visits`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpillSpec {
    pub path: PathBuf,
    pub threshold_visits: usize,
}

/// Default spill threshold in state visits.
pub const DEFAULT_SPILL_THRESHOLD: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutSpec {
    pub n_rollouts: usize,
    pub seed: u64,
    pub model: DisturbanceModel,
    pub initial: InitialState,
    /// Physical units for the reported state statistics.
    pub state_map: Option<AffineMap>,
    pub spill: Option<SpillSpec>,
}

impl RolloutSpec {
    pub fn new(n_rollouts: usize, seed: u64, initial: InitialState) -> Self {
        Self { n_rollouts, seed, model: DisturbanceModel::Empirical, initial, state_map: None, spill: None }
    }
}

/// Per-stage statistics over all rollouts.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStats {
    pub n_rollouts: usize,
    /// `h + 1` entries, stage 0 first.
    pub mean_state: Vec<f64>,
    pub std_state: Vec<f64>,
    /// `mean +- std`.
    pub sigma_band: Vec<(f64, f64)>,
    /// `mean +- 2 std`.
    pub two_sigma_band: Vec<(f64, f64)>,
    /// Mean of the cumulative stage plus terminal cost.
    pub mean_cost: f64,
    /// Sample standard deviation of the cumulative cost.
    pub cost_std: f64,
}

impl TrajectoryStats {
    /// Header `stage,mean,sigma_low,sigma_high,two_sigma_low,two_sigma_high`.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["stage", "mean", "sigma_low", "sigma_high", "two_sigma_low", "two_sigma_high"]);
        for (k, m) in self.mean_state.iter().enumerate() {
            let (s0, s1) = self.sigma_band[k];
            let (t0, t1) = self.two_sigma_band[k];
            t.push_row(&[k], &[*m, s0, s1, t0, t1]);
        }
        t
    }

    pub fn cost_std_error(&self) -> f64 {
        self.cost_std / (self.n_rollouts as f64).sqrt()
    }
}

/// Raw trajectories, when kept.
#[derive(Debug, Clone, PartialEq)]
pub enum RawTrajectories {
    /// `n_rollouts x (h + 1)` state indices and one cost per rollout.
    Memory { states: Vec<u32>, costs: Vec<f64> },
    /// Written as `rollout,x_0..x_h,cost` rows.
    Spilled(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutOutput {
    pub stats: TrajectoryStats,
    pub raw: RawTrajectories,
}

/// Inverse CDF: first index whose running sum exceeds `u`.
///
/// Falls back to the last positive entry when rounding leaves the total
/// below `u`.
pub fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if acc > u {
            return i;
        }
    }
    last_positive
}

fn check_row(row: &[f64], what: &str) -> Result<()> {
    let sum: f64 = row.iter().sum();
    if row.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > PROBABILITY_TOL * row.len().max(1) as f64 {
        return Err(Error::InvalidArgument(format!("{what} is not a probability vector (sum {sum})")));
    }
    Ok(())
}

fn validate(sys: &FiniteSystem, result: &SolveResult, spec: &RolloutSpec) -> Result<()> {
    if spec.n_rollouts == 0 {
        return Err(Error::InvalidArgument("n_rollouts must be at least 1".into()));
    }
    if result.n_states() != sys.n_states()
        || result.n_inputs() != sys.n_inputs()
        || result.n_dist() != sys.n_dist()
        || result.horizon() != sys.horizon()
    {
        return Err(Error::ModelMismatch(format!(
            "result is {}x{}x{} over {} stages, system is {}x{}x{} over {}",
            result.n_states(),
            result.n_inputs(),
            result.n_dist(),
            result.horizon(),
            sys.n_states(),
            sys.n_inputs(),
            sys.n_dist(),
            sys.horizon()
        )));
    }
    match &spec.initial {
        InitialState::State(x) if *x >= sys.n_states() => {
            return Err(Error::InvalidArgument(format!("initial state {x} out of range")));
        }
        InitialState::Distribution(p) => {
            if p.len() != sys.n_states() {
                return Err(Error::InvalidArgument("initial distribution has the wrong length".into()));
            }
            check_row(p, "initial distribution")?;
        }
        _ => {}
    }
    if let DisturbanceModel::FixedTable(t) = &spec.model {
        let n = EmpiricalTable::n_rows(t.layout, sys.n_states(), sys.n_inputs());
        if t.rows.len() != n * sys.n_dist() {
            return Err(Error::InvalidArgument(format!("fixed table needs {n} rows of {} entries", sys.n_dist())));
        }
        for (i, row) in t.rows.chunks(sys.n_dist()).enumerate() {
            check_row(row, &format!("fixed table row {i}"))?;
        }
    }
    Ok(())
}

fn simulate_one(sys: &FiniteSystem, result: &SolveResult, spec: &RolloutSpec, rng: &CounterRng, i: usize, states: &mut [u32]) -> f64 {
    let stream = i as u64;
    let mut x = match &spec.initial {
        InitialState::State(x) => *x,
        InitialState::Distribution(p) => sample_index(p, rng.uniform_at(stream, 0)),
    };
    let mut cost = 0.0;
    states[0] = x as u32;
    for k in 0..sys.horizon() {
        let u = result.policy(k, x);
        cost += sys.stage_cost(x, u);
        let draw = || rng.uniform_at(stream, k as u64 + 1);
        let w = match &spec.model {
            DisturbanceModel::Empirical => sample_index(sys.empirical(k, x, u), draw()),
            DisturbanceModel::Adversarial => match result.adversary_row(k, x) {
                AdversaryRow::Distribution(p) => sample_index(p, draw()),
                AdversaryRow::WorstCase(w) => w,
            },
            DisturbanceModel::FixedTable(t) => {
                sample_index(t.row(x, u, sys.n_inputs(), sys.n_dist()).expect("validated table"), draw())
            }
        };
        x = sys.next_state(x, u, w);
        states[k + 1] = x as u32;
    }
    cost + sys.terminal_cost()[x]
}

#[derive(Default, Clone, Copy)]
struct Welford {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, v: f64) {
        self.n += 1;
        let d = v - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (v - self.mean);
    }

    fn std(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0).sqrt()
        }
    }
}

/// Rollouts simulated per parallel batch.
const BATCH: usize = 8192;

/// Simulates `spec.n_rollouts` closed-loop trajectories and summarizes them.
pub fn rollout(sys: &FiniteSystem, result: &SolveResult, spec: &RolloutSpec) -> Result<RolloutOutput> {
    validate(sys, result, spec)?;
    let h = sys.horizon();
    let width = h + 1;
    let rng = CounterRng::new(spec.seed);
    let map = spec.state_map.unwrap_or(AffineMap { offset: 0.0, slope: 1.0 });

    let spill_path = spec
        .spill
        .as_ref()
        .filter(|s| spec.n_rollouts.saturating_mul(width) > s.threshold_visits)
        .map(|s| s.path.clone());
    let mut spill_writer = match &spill_path {
        Some(path) => {
            let tmp = path.with_extension("partial");
            if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })?;
            }
            let f = fs::File::create(&tmp).map_err(|e| Error::Io { path: tmp.clone(), source: e })?;
            let mut w = BufWriter::new(f);
            let mut header = String::from("rollout");
            for k in 0..width {
                header.push_str(&format!(",x_{k}"));
            }
            header.push_str(",cost\n");
            w.write_all(header.as_bytes()).map_err(|e| Error::Io { path: tmp.clone(), source: e })?;
            Some((w, tmp))
        }
        None => None,
    };

    let mut stage_stats = vec![Welford::default(); width];
    let mut cost_stats = Welford::default();
    let mut kept_states = Vec::new();
    let mut kept_costs = Vec::new();

    let mut start = 0;
    while start < spec.n_rollouts {
        let end = (start + BATCH).min(spec.n_rollouts);
        let mut states = vec![0u32; (end - start) * width];
        let costs: Vec<f64> = states
            .par_chunks_mut(width)
            .enumerate()
            .map(|(j, row)| simulate_one(sys, result, spec, &rng, start + j, row))
            .collect();
        for (j, (row, &c)) in states.chunks(width).zip(&costs).enumerate() {
            for (acc, &x) in stage_stats.iter_mut().zip(row) {
                acc.push(map.apply(x as usize));
            }
            cost_stats.push(c);
            if let Some((w, tmp)) = spill_writer.as_mut() {
                let mut line = (start + j).to_string();
                for x in row {
                    line.push(',');
                    line.push_str(&x.to_string());
                }
                line.push(',');
                line.push_str(&fmt_num(c));
                line.push('\n');
                w.write_all(line.as_bytes()).map_err(|e| Error::Io { path: tmp.clone(), source: e })?;
            }
        }
        if spill_writer.is_none() {
            kept_states.extend_from_slice(&states);
            kept_costs.extend_from_slice(&costs);
        }
        start = end;
    }

    let raw = match (spill_writer, spill_path) {
        (Some((mut w, tmp)), Some(path)) => {
            w.flush().map_err(|e| Error::Io { path: tmp.clone(), source: e })?;
            drop(w);
            fs::rename(&tmp, &path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
            RawTrajectories::Spilled(path)
        }
        _ => RawTrajectories::Memory { states: kept_states, costs: kept_costs },
    };

    let mean_state: Vec<f64> = stage_stats.iter().map(|s| s.mean).collect();
    let std_state: Vec<f64> = stage_stats.iter().map(Welford::std).collect();
    let band = |k: f64| mean_state.iter().zip(&std_state).map(|(m, s)| (m - k * s, m + k * s)).collect();
    let stats = TrajectoryStats {
        n_rollouts: spec.n_rollouts,
        sigma_band: band(1.0),
        two_sigma_band: band(2.0),
        mean_state,
        std_state,
        mean_cost: cost_stats.mean,
        cost_std: cost_stats.std(),
    };
    Ok(RolloutOutput { stats, raw })
}

/// Per-rollout cumulative costs, in rollout order.
///
/// Two policies evaluated with the same spec see the same uniform draws,
/// which makes paired comparisons much sharper than independent ones.
pub fn rollout_costs(sys: &FiniteSystem, result: &SolveResult, spec: &RolloutSpec) -> Result<Vec<f64>> {
    validate(sys, result, spec)?;
    let rng = CounterRng::new(spec.seed);
    let width = sys.horizon() + 1;
    Ok((0..spec.n_rollouts)
        .into_par_iter()
        .map_init(|| vec![0u32; width], |buf, i| simulate_one(sys, result, spec, &rng, i, buf))
        .collect())
}

/// Monte-Carlo mean of the cumulative cost and its standard error.
pub fn empirical_cost_estimate(sys: &FiniteSystem, result: &SolveResult, spec: &RolloutSpec) -> Result<(f64, f64)> {
    let costs = rollout_costs(sys, result, spec)?;
    let mut acc = Welford::default();
    costs.iter().for_each(|&c| acc.push(c));
    Ok((acc.mean, acc.std() / (costs.len() as f64).sqrt()))
}

/// Writes the per-stage table atomically.
pub fn write_stats(stats: &TrajectoryStats, path: &std::path::Path) -> Result<()> {
    write_atomic(path, stats.to_table().render().as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finite::solve_backward;
    use crate::model::{Empirical, FiniteSystemParts, Penalties};

    /// Walk on 0..n: input 0 stays, input 1 moves by the disturbance {-1, +1}.
    fn walk(n: usize, h: usize, r: [f64; 2]) -> FiniteSystem {
        let mut transition = Vec::new();
        for x in 0..n {
            for u in 0..2 {
                for w in 0..2 {
                    let step = if u == 0 { 0 } else if w == 0 { -1 } else { 1 };
                    transition.push((x as i64 + step).clamp(0, n as i64 - 1) as u32);
                }
            }
        }
        FiniteSystem::new(FiniteSystemParts {
            n_states: n,
            n_inputs: 2,
            n_dist: 2,
            horizon: h,
            transition,
            stage_cost: (0..n).flat_map(|x| [x as f64 + 0.5, x as f64]).collect(),
            terminal_cost: (0..n).map(|x| (x as f64 - 2.0).powi(2)).collect(),
            empirical: Empirical::Stationary(EmpiricalTable::shared(r.to_vec())),
        })
        .unwrap()
    }

    #[test]
    fn inverse_cdf() {
        assert_eq!(sample_index(&[0.25, 0.0, 0.75], 0.0), 0);
        assert_eq!(sample_index(&[0.25, 0.0, 0.75], 0.25), 2);
        assert_eq!(sample_index(&[0.0, 1.0], 0.0), 1);
        assert_eq!(sample_index(&[0.5, 0.5 - 1e-15, 0.0], 0.9999999999999999), 1);
    }

    #[test]
    fn deterministic_system_has_zero_bands() {
        let sys = walk(5, 4, [0.0, 1.0]);
        let res = solve_backward(&sys, &Penalties::new(1.0, 1.0).unwrap()).unwrap();
        let out = rollout(&sys, &res, &RolloutSpec::new(50, 3, InitialState::State(2))).unwrap();
        for (k, (lo, hi)) in out.stats.two_sigma_band.iter().enumerate() {
            assert_eq!(lo, hi, "stage {k}");
        }
        assert_eq!(out.stats.cost_std, 0.0);
    }

    #[test]
    fn same_seed_same_output() {
        let sys = walk(7, 6, [0.3, 0.7]);
        let res = solve_backward(&sys, &Penalties::new(2.0, 1.0).unwrap()).unwrap();
        let spec = RolloutSpec {
            model: DisturbanceModel::Adversarial,
            ..RolloutSpec::new(999, 11, InitialState::Distribution(vec![1.0 / 7.0; 7]))
        };
        let a = rollout(&sys, &res, &spec).unwrap();
        let b = rollout(&sys, &res, &spec).unwrap();
        assert_eq!(a, b);
        let c = rollout(&sys, &res, &RolloutSpec { seed: 12, ..spec }).unwrap();
        assert_ne!(a.stats, c.stats);
    }

    #[test]
    fn zero_cost_system_estimates_zero() {
        let mut parts = walk(4, 3, [0.5, 0.5]).into_parts();
        parts.stage_cost.iter_mut().for_each(|c| *c = 0.0);
        parts.terminal_cost.iter_mut().for_each(|c| *c = 0.0);
        let sys = FiniteSystem::new(parts).unwrap();
        let res = solve_backward(&sys, &Penalties::MINIMAX).unwrap();
        let est = empirical_cost_estimate(&sys, &res, &RolloutSpec::new(100, 0, InitialState::State(1))).unwrap();
        assert_eq!(est, (0.0, 0.0));
    }

    #[test]
    fn mismatched_result_is_rejected() {
        let sys = walk(4, 3, [0.5, 0.5]);
        let other = walk(5, 3, [0.5, 0.5]);
        let res = solve_backward(&other, &Penalties::MINIMAX).unwrap();
        let err = rollout(&sys, &res, &RolloutSpec::new(1, 0, InitialState::State(0))).unwrap_err();
        assert!(matches!(err, Error::ModelMismatch(_)));
    }

    #[test]
    fn spill_writes_every_rollout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("raw.csv");
        let sys = walk(5, 2, [0.5, 0.5]);
        let res = solve_backward(&sys, &Penalties::new(1.0, 1.0).unwrap()).unwrap();
        let spec = RolloutSpec {
            spill: Some(SpillSpec { path: path.clone(), threshold_visits: 10 }),
            ..RolloutSpec::new(20, 0, InitialState::State(2))
        };
        let out = rollout(&sys, &res, &spec).unwrap();
        assert_eq!(out.raw, RawTrajectories::Spilled(path.clone()));
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 21);
        assert!(text.starts_with("rollout,x_0,x_1,x_2,cost\n"));
        let kept = rollout(&sys, &res, &RolloutSpec { spill: None, ..spec }).unwrap();
        assert_eq!(kept.stats, out.stats);
    }
}
