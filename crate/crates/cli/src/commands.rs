use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use minsoftmax::columnar::{fmt_num, Table};
use minsoftmax::lq::{critical_gamma_h, solve_finite_horizon, solve_infinite_horizon, CertifySpec, RiccatiConfig};
use minsoftmax::montecarlo::{rollout, write_stats, DisturbanceModel, InitialState, RolloutSpec, SpillSpec, DEFAULT_SPILL_THRESHOLD};
use minsoftmax::scenarios::{
    build_fig3_scenario, build_fig4_scenario, irrigation_scenario, load_scenario, save_scenario, PenaltyGrid, RolloutModelName,
    ScenarioFile, ScenarioPayload,
};
use minsoftmax::verify::{
    attenuation_suite, limits_suite, quadrature_points, quadrature_suite, random_finite_system, scalar_benchmark, simplex_suite_random,
    simplex_suite_system, Check, Status,
};
use minsoftmax::{solve_backward, Error, FiniteSystem, Horizon, LqSystem, Penalties, Result, SolveResult};

use crate::output::{ensure_dir, finite_policy_hash, gain_cells, gain_hash, write_finite, write_lq_finite, write_lq_infinite};
use crate::{Bundled, Command, Failure, ModelArg, Suite};

/// Simplex grid step and tolerance of the `verify simplex` suite.
const SIMPLEX_STEP: f64 = 1e-3;
const SIMPLEX_TOL: f64 = 1e-3;
/// Quadrature agreement required by `verify quadrature`.
const QUADRATURE_TOL: f64 = 1e-6;

pub fn run(cmd: Command) -> std::result::Result<(), Failure> {
    match cmd {
        Command::Validate { scenario } => validate(&scenario)?,
        Command::Solve { scenario, gamma_h, gamma_e, out, x0 } => solve(&scenario, gamma_h, gamma_e, &out, x0.as_deref())?,
        Command::Sweep { scenario, gamma_h, gamma_e, pairs, out, x0 } => {
            let sc = load_scenario(&scenario)?;
            let points = penalty_points(gamma_h.as_deref(), gamma_e.as_deref(), pairs.as_deref(), sc.penalty_grid.as_ref())?;
            sweep(&sc, &points, &out, x0.as_deref())?
        }
        Command::Simulate { scenario, gamma_h, gamma_e, pairs, n_rollouts, seed, x0, model, spill_threshold, out } => {
            let sc = load_scenario(&scenario)?;
            let points = penalty_points(gamma_h.as_deref(), gamma_e.as_deref(), pairs.as_deref(), sc.penalty_grid.as_ref())?;
            simulate(&sc, &points, SimulateArgs { n_rollouts, seed, x0, model, spill_threshold }, &out)?
        }
        Command::Verify { scenario, suite, gamma_h, gamma_e, seed, states, margin, nodes, out } => {
            let sc = scenario.as_deref().map(load_scenario).transpose()?;
            let checks = verify(sc.as_ref(), suite, VerifyArgs { gamma_h, gamma_e, seed, states, margin, nodes })?;
            for c in &checks {
                println!("{c}");
            }
            if let Some(dir) = out {
                ensure_dir(&dir)?;
                let mut t = Table::new(&["check", "status", "observed", "expected", "tolerance"]);
                for c in &checks {
                    let cells =
                        [c.name.replace(',', ";"), c.status.to_string(), fmt_num(c.observed), fmt_num(c.expected), fmt_num(c.tolerance)];
                    t.push_cells(&cells);
                }
                t.write(&dir.join("verify.csv"))?;
            }
            let failed = checks.iter().filter(|c| c.status == Status::Fail).count();
            if failed > 0 {
                return Err(Failure::Verify { failed });
            }
        }
        Command::Critical { scenario, horizon, out } => critical(&scenario, horizon.as_deref(), out.as_deref())?,
        Command::Export { name, path } => export(name, &path)?,
    }
    Ok(())
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| invalid(format!("{what}: cannot parse {s:?} as a number")))
}

pub fn parse_list(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(|p| parse_f64(p, what)).collect()
}

pub fn parse_pairs(s: &str) -> Result<Vec<(f64, f64)>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let (h, e) = p.split_once(':').ok_or_else(|| invalid(format!("--pairs: expected gh:ge, got {p:?}")))?;
            Ok((parse_f64(h, "--pairs")?, parse_f64(e, "--pairs")?))
        })
        .collect()
}

/// Penalty points from the flags, falling back to the scenario's grid.
fn penalty_points(gh: Option<&str>, ge: Option<&str>, pairs: Option<&str>, grid: Option<&PenaltyGrid>) -> Result<Vec<(f64, f64)>> {
    let mut points = match (gh, ge) {
        (Some(h), Some(e)) => {
            PenaltyGrid { gamma_h: parse_list(h, "--gamma-h")?, gamma_e: parse_list(e, "--gamma-e")?, pairs: vec![] }.points()
        }
        (None, None) => vec![],
        _ => return Err(invalid("--gamma-h and --gamma-e must be given together")),
    };
    if let Some(p) = pairs {
        points.extend(parse_pairs(p)?);
    }
    if points.is_empty() {
        points = grid.map(PenaltyGrid::points).unwrap_or_default();
    }
    if points.is_empty() {
        return Err(invalid("no penalty points: pass --gamma-h/--gamma-e or --pairs, or add a penalty_grid to the scenario"));
    }
    for &(h, e) in &points {
        Penalties::new(h, e)?;
    }
    Ok(points)
}

fn point_label(gh: f64, ge: f64) -> String {
    format!("gh{}_ge{}", fmt_num(gh), fmt_num(ge))
}

fn validate(path: &Path) -> Result<()> {
    let sc = load_scenario(path)?;
    let name = sc.name.clone().unwrap_or_else(|| "unnamed".into());
    match &sc.payload {
        ScenarioPayload::Finite(s) => println!(
            "ok: finite scenario {name}: {} states, {} inputs, {} disturbances, horizon {}",
            s.n_states(),
            s.n_inputs(),
            s.n_dist(),
            s.horizon()
        ),
        ScenarioPayload::Lq(s) => {
            let h = s.horizon().finite().map_or("infinite".to_string(), |h| h.to_string());
            println!("ok: lq scenario {name}: n_x {}, n_u {}, n_w {}, horizon {h}", s.n_x(), s.n_u(), s.n_w())
        }
    }
    Ok(())
}

/// Initial state index for a finite J_0: the flag, the rollout default, or 0.
fn finite_x0(sc: &ScenarioFile, sys: &FiniteSystem, x0: Option<&str>) -> Result<usize> {
    let x = match x0 {
        Some(s) => s.trim().parse::<usize>().map_err(|_| invalid(format!("--x0: expected a state index, got {s:?}")))?,
        None => sc.rollout.as_ref().map_or(0, |r| r.initial_state),
    };
    if x >= sys.n_states() {
        return Err(invalid(format!("--x0: state {x} out of range (n_states = {})", sys.n_states())));
    }
    Ok(x)
}

fn lq_x0(lq: &LqSystem, x0: Option<&str>) -> Result<DVector<f64>> {
    match x0 {
        None => Ok(DVector::zeros(lq.n_x())),
        Some(s) => {
            let v = parse_list(s, "--x0")?;
            if v.len() != lq.n_x() {
                return Err(invalid(format!("--x0: expected {} coordinates, got {}", lq.n_x(), v.len())));
            }
            Ok(DVector::from_vec(v))
        }
    }
}

enum LqAny {
    Finite(minsoftmax::lq::LqSolution),
    Infinite(minsoftmax::lq::InfiniteHorizonSolution),
}

impl LqAny {
    fn solve(lq: &LqSystem, pen: &Penalties) -> Result<Self> {
        let cfg = RiccatiConfig::default();
        match lq.horizon() {
            Horizon::Finite(_) => Ok(LqAny::Finite(solve_finite_horizon(lq, pen, &cfg)?)),
            Horizon::Infinite(_) => Ok(LqAny::Infinite(solve_infinite_horizon(lq, pen, &cfg)?)),
        }
    }

    /// `x'P_0 x + zeta_0`, or `x'P x` for the stationary solution.
    fn j0(&self, x: &DVector<f64>) -> f64 {
        match self {
            LqAny::Finite(s) => s.value(0, x),
            LqAny::Infinite(s) => (x.transpose() * &s.p_bar * x)[0],
        }
    }

    fn gains(&self) -> Vec<&DMatrix<f64>> {
        match self {
            LqAny::Finite(s) => s.gains.iter().collect(),
            LqAny::Infinite(s) => vec![&s.gain],
        }
    }

    fn write(&self, dir: &Path) -> Result<()> {
        match self {
            LqAny::Finite(s) => write_lq_finite(s, dir),
            LqAny::Infinite(s) => write_lq_infinite(s, dir),
        }
    }
}

fn solve(path: &Path, gamma_h: f64, gamma_e: f64, out: &Path, x0: Option<&str>) -> Result<()> {
    let sc = load_scenario(path)?;
    let pen = Penalties::new(gamma_h, gamma_e)?;
    match &sc.payload {
        ScenarioPayload::Finite(sys) => {
            let x = finite_x0(&sc, sys, x0)?;
            let res = solve_backward(sys, &pen)?;
            write_finite(sys, &res, out)?;
            println!("j0={} x0={x} policy_hash={}", fmt_num(res.value(0, x)), finite_policy_hash(&res));
        }
        ScenarioPayload::Lq(lq) => {
            let x = lq_x0(lq, x0)?;
            let sol = LqAny::solve(lq, &pen)?;
            sol.write(out)?;
            println!("j0={} policy_hash={}", fmt_num(sol.j0(&x)), gain_hash(&sol.gains()));
        }
    }
    Ok(())
}

struct PointRow {
    j0: f64,
    hash: String,
    /// Policy entries for Hamming distances.
    cells: Vec<String>,
    status: String,
}

impl PointRow {
    fn failed(e: &Error) -> Self {
        log::warn!("{e}");
        Self { j0: f64::NAN, hash: String::new(), cells: vec![], status: e.kind().to_string() }
    }
}

fn policy_cells(res: &SolveResult) -> Vec<String> {
    res.policy_table().iter().map(|u| u.to_string()).collect()
}

fn hamming(a: &[String], b: &[String]) -> Option<usize> {
    (a.len() == b.len() && !a.is_empty()).then(|| a.iter().zip(b).filter(|(x, y)| x != y).count())
}

/// Solves every point into `out/<label>/` and writes `out/summary.csv`.
///
/// Finite Hamming distances are to the `(0, 0)` policy. An LQ game has no
/// solution at `gamma_h = 0`, so LQ distances count differing printed gain
/// entries relative to the first point that solved.
fn sweep(sc: &ScenarioFile, points: &[(f64, f64)], out: &Path, x0: Option<&str>) -> Result<()> {
    ensure_dir(out)?;
    let rows: Vec<PointRow>;
    let reference: Option<Vec<String>>;
    match &sc.payload {
        ScenarioPayload::Finite(sys) => {
            let x = finite_x0(sc, sys, x0)?;
            rows = points
                .par_iter()
                .map(|&(gh, ge)| {
                    let run = || -> Result<PointRow> {
                        let res = solve_backward(sys, &Penalties::new(gh, ge)?)?;
                        write_finite(sys, &res, &out.join(point_label(gh, ge)))?;
                        Ok(PointRow { j0: res.value(0, x), hash: finite_policy_hash(&res), cells: policy_cells(&res), status: "ok".into() })
                    };
                    run().unwrap_or_else(|e| PointRow::failed(&e))
                })
                .collect();
            reference = match points.iter().position(|&p| p == (0.0, 0.0)) {
                Some(i) if rows[i].status == "ok" => Some(rows[i].cells.clone()),
                _ => solve_backward(sys, &Penalties::MINIMAX).ok().map(|r| policy_cells(&r)),
            };
        }
        ScenarioPayload::Lq(lq) => {
            let x = lq_x0(lq, x0)?;
            rows = points
                .par_iter()
                .map(|&(gh, ge)| {
                    let run = || -> Result<PointRow> {
                        let sol = LqAny::solve(lq, &Penalties::new(gh, ge)?)?;
                        sol.write(&out.join(point_label(gh, ge)))?;
                        let g = sol.gains();
                        Ok(PointRow { j0: sol.j0(&x), hash: gain_hash(&g), cells: gain_cells(&g), status: "ok".into() })
                    };
                    run().unwrap_or_else(|e| PointRow::failed(&e))
                })
                .collect();
            reference = rows.iter().find(|r| r.status == "ok").map(|r| r.cells.clone());
        }
    }

    let mut t = Table::new(&["gamma_h", "gamma_e", "j0", "policy_hash", "hamming", "status"]);
    for (&(gh, ge), r) in points.iter().zip(&rows) {
        let ham = reference.as_ref().and_then(|refc| hamming(&r.cells, refc)).map_or(String::new(), |d| d.to_string());
        t.push_cells(&[fmt_num(gh), fmt_num(ge), fmt_num(r.j0), r.hash.clone(), ham, r.status.clone()]);
    }
    t.write(&out.join("summary.csv"))?;
    print!("{}", t.render());
    Ok(())
}

struct SimulateArgs {
    n_rollouts: Option<usize>,
    seed: Option<u64>,
    x0: Option<usize>,
    model: Option<ModelArg>,
    spill_threshold: Option<usize>,
}

/// One `stats_<label>.csv` per penalty point plus `simulate.csv`.
fn simulate(sc: &ScenarioFile, points: &[(f64, f64)], args: SimulateArgs, out: &Path) -> Result<()> {
    let sys = sc.as_finite().ok_or_else(|| invalid("simulate needs a finite scenario"))?;
    let defaults = sc.rollout.as_ref();
    let n = args.n_rollouts.or(defaults.map(|r| r.n_rollouts)).ok_or_else(|| invalid("--n-rollouts is required (no rollout defaults in the scenario)"))?;
    if n == 0 {
        return Err(invalid("--n-rollouts must be at least 1"));
    }
    let seed = args.seed.or(defaults.map(|r| r.seed)).unwrap_or(0);
    let x0 = args.x0.or(defaults.map(|r| r.initial_state)).unwrap_or(0);
    let model = match args.model {
        Some(ModelArg::Empirical) => DisturbanceModel::Empirical,
        Some(ModelArg::Adversarial) => DisturbanceModel::Adversarial,
        None => match defaults.map(|r| r.model) {
            Some(RolloutModelName::Adversarial) => DisturbanceModel::Adversarial,
            _ => DisturbanceModel::Empirical,
        },
    };
    ensure_dir(out)?;
    let mut summary = Table::new(&["gamma_h", "gamma_e", "n_rollouts", "seed", "mean_cost", "cost_std_error", "stats_file"]);
    for &(gh, ge) in points {
        let res = solve_backward(sys, &Penalties::new(gh, ge)?)?;
        let label = point_label(gh, ge);
        let spec = RolloutSpec {
            n_rollouts: n,
            seed,
            model: model.clone(),
            initial: InitialState::State(x0),
            state_map: sc.maps.state,
            spill: Some(SpillSpec {
                path: out.join(format!("raw_{label}.csv")),
                threshold_visits: args.spill_threshold.unwrap_or(DEFAULT_SPILL_THRESHOLD),
            }),
        };
        let run = rollout(sys, &res, &spec)?;
        let file = format!("stats_{label}.csv");
        write_stats(&run.stats, &out.join(&file))?;
        summary.push_cells(&[
            fmt_num(gh),
            fmt_num(ge),
            n.to_string(),
            seed.to_string(),
            fmt_num(run.stats.mean_cost),
            fmt_num(run.stats.cost_std_error()),
            file,
        ]);
    }
    summary.write(&out.join("simulate.csv"))?;
    print!("{}", summary.render());
    Ok(())
}

struct VerifyArgs {
    gamma_h: f64,
    gamma_e: f64,
    seed: u64,
    states: usize,
    margin: f64,
    nodes: usize,
}

fn verify(sc: Option<&ScenarioFile>, suite: Suite, a: VerifyArgs) -> Result<Vec<Check>> {
    let pen = Penalties::new(a.gamma_h, a.gamma_e)?;
    let finite = |sc: Option<&ScenarioFile>| -> Result<FiniteSystem> {
        match sc {
            Some(s) => s.as_finite().cloned().ok_or_else(|| invalid("this suite needs a finite scenario")),
            None => Ok(random_finite_system(a.states, 3, 4, 4, a.seed)),
        }
    };
    let lq = |sc: Option<&ScenarioFile>, default: Horizon| -> Result<LqSystem> {
        match sc {
            Some(s) => s.as_lq().cloned().ok_or_else(|| invalid("this suite needs an lq scenario")),
            None => Ok(scalar_benchmark(default)),
        }
    };
    match suite {
        Suite::Simplex => match sc {
            Some(_) => simplex_suite_system(&finite(sc)?, &pen, SIMPLEX_STEP, SIMPLEX_TOL, 200),
            None => simplex_suite_random(50, 3, a.seed, SIMPLEX_STEP, SIMPLEX_TOL),
        },
        Suite::Quadrature => quadrature_suite(&lq(sc, Horizon::Finite(1))?, &pen, &quadrature_points(), a.nodes, QUADRATURE_TOL),
        Suite::Limits => limits_suite(&finite(sc)?),
        Suite::Attenuation => attenuation_suite(&lq(sc, Horizon::INFINITE)?, a.margin, &CertifySpec { seed: a.seed, ..CertifySpec::default() }),
    }
}

fn parse_horizon(s: &str) -> Result<Horizon> {
    if s.eq_ignore_ascii_case("infinite") || s.eq_ignore_ascii_case("inf") {
        return Ok(Horizon::INFINITE);
    }
    s.trim().parse::<usize>().map(Horizon::Finite).map_err(|_| invalid(format!("--horizon: expected a stage count or `infinite`, got {s:?}")))
}

fn critical(path: &Path, horizon: Option<&str>, out: Option<&Path>) -> Result<()> {
    let sc = load_scenario(path)?;
    let lq = sc.as_lq().ok_or_else(|| invalid("critical needs an lq scenario"))?;
    let horizon = horizon.map(parse_horizon).transpose()?.unwrap_or(lq.horizon());
    let c = critical_gamma_h(lq, horizon, &RiccatiConfig::default())?;
    let mut t = Table::new(&["gamma_h", "lower", "attenuation"]);
    t.push_row(&[], &[c.gamma_h, c.lower, c.attenuation]);
    if let Some(dir) = out {
        ensure_dir(dir)?;
        t.write(&dir.join("critical.csv"))?;
    }
    print!("{}", t.render());
    Ok(())
}

/// The scalar benchmark `x' = x + u + w` with unit weights over one stage.
pub fn lq_scalar_scenario() -> ScenarioFile {
    let mut s = ScenarioFile::lq(scalar_benchmark(Horizon::Finite(1)));
    s.name = Some("lq_scalar".into());
    s.description = Some("Scalar x' = x + u + w with unit state, input and terminal weights, one stage.".into());
    s.penalty_grid = Some(PenaltyGrid { gamma_h: vec![4.0, 8.0], gamma_e: vec![0.0, 1.0, 10.0, 100.0], pairs: vec![] });
    s
}

fn export(name: Bundled, path: &PathBuf) -> Result<()> {
    let sc = match name {
        Bundled::Irrigation => irrigation_scenario(),
        Bundled::Fig3 => build_fig3_scenario(),
        Bundled::Fig4 => build_fig4_scenario(),
        Bundled::LqScalar => lq_scalar_scenario(),
    };
    for p in save_scenario(&sc, path)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_and_pairs_parse() {
        assert_eq!(parse_list("0, 1,10,", "x").unwrap(), vec![0.0, 1.0, 10.0]);
        assert_eq!(parse_pairs("0:0,30:100").unwrap(), vec![(0.0, 0.0), (30.0, 100.0)]);
        assert!(parse_pairs("30").is_err());
        assert!(parse_list("a", "x").is_err());
    }

    #[test]
    fn flags_override_scenario_grid() {
        let grid = PenaltyGrid { gamma_h: vec![], gamma_e: vec![], pairs: vec![(5.0, 5.0)] };
        assert_eq!(penalty_points(Some("0,1"), Some("2"), None, Some(&grid)).unwrap(), vec![(0.0, 2.0), (1.0, 2.0)]);
        assert_eq!(penalty_points(None, None, None, Some(&grid)).unwrap(), vec![(5.0, 5.0)]);
        assert!(penalty_points(Some("1"), None, None, None).is_err());
        assert!(penalty_points(None, None, Some("-1:0"), None).is_err());
        assert!(penalty_points(None, None, None, None).is_err());
    }

    #[test]
    fn horizons_parse() {
        assert_eq!(parse_horizon("infinite").unwrap(), Horizon::INFINITE);
        assert_eq!(parse_horizon("3").unwrap(), Horizon::Finite(3));
        assert!(parse_horizon("-1").is_err());
    }

    #[test]
    fn hamming_needs_equal_lengths() {
        let a: Vec<String> = ["1", "2", "3"].map(String::from).to_vec();
        let b: Vec<String> = ["1", "0", "3"].map(String::from).to_vec();
        assert_eq!(hamming(&a, &b), Some(1));
        assert_eq!(hamming(&a, &b[..2]), None);
    }
}
