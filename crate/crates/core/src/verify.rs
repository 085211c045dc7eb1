//! Verification suites that pit the solvers against the oracles and the
//! classical limit regimes. Each suite returns one [`Check`] per comparison.

use std::fmt;

use nalgebra::{dvector, DMatrix};

use crate::error::{Error, Result};
use crate::finite::{alpha_row, q_value, solve_backward, solve_limit, LimitRegime};
use crate::lq::{certify_attenuation, critical_gamma_h, solve_finite_horizon, solve_infinite_horizon, CertifySpec, RiccatiConfig};
use crate::model::{Empirical, EmpiricalTable, FiniteSystem, FiniteSystemParts, Horizon, LqSystem, Penalties};
use crate::oracle::{gaussian_quadrature_q, simplex_search, MAX_SIMPLEX_DIM};
use crate::rng::CounterRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        })
    }
}

/// One comparison: `|observed - expected| <= tolerance` unless noted.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub observed: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub status: Status,
}

impl Check {
    pub fn close(name: impl Into<String>, observed: f64, expected: f64, tolerance: f64) -> Self {
        let ok = (observed - expected).abs() <= tolerance;
        Self { name: name.into(), observed, expected, tolerance, status: if ok { Status::Pass } else { Status::Fail } }
    }

    /// Passes when `observed <= bound + tolerance`.
    pub fn at_most(name: impl Into<String>, observed: f64, bound: f64, tolerance: f64) -> Self {
        let ok = observed <= bound + tolerance;
        Self { name: name.into(), observed, expected: bound, tolerance, status: if ok { Status::Pass } else { Status::Fail } }
    }

    pub fn flag(name: impl Into<String>, ok: bool) -> Self {
        Self {
            name: name.into(),
            observed: f64::from(u8::from(ok)),
            expected: 1.0,
            tolerance: 0.0,
            status: if ok { Status::Pass } else { Status::Fail },
        }
    }

    pub fn skip(name: impl Into<String>) -> Self {
        Self { name: name.into(), observed: f64::NAN, expected: f64::NAN, tolerance: 0.0, status: Status::Skip }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} observed={:.12e} expected={:.12e} tol={:e}",
            self.status, self.name, self.observed, self.expected, self.tolerance
        )
    }
}

pub fn all_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.status != Status::Fail)
}

/// Random system with costs in `[0, 1]`, uniform successors and one shared
/// empirical row whose mode is unique with probability one.
pub fn random_finite_system(n_states: usize, n_inputs: usize, n_dist: usize, horizon: usize, seed: u64) -> FiniteSystem {
    let rng = CounterRng::new(seed);
    let mut c = 0u64;
    let mut next = || {
        c += 1;
        rng.uniform_at(0, c)
    };
    let transition = (0..n_states * n_inputs * n_dist).map(|_| (next() * n_states as f64) as u32).collect();
    let stage_cost = (0..n_states * n_inputs).map(|_| next()).collect();
    let terminal_cost = (0..n_states).map(|_| next()).collect();
    let raw: Vec<f64> = (0..n_dist).map(|_| 0.05 + next()).collect();
    let s: f64 = raw.iter().sum();
    FiniteSystem::new(FiniteSystemParts {
        n_states,
        n_inputs,
        n_dist,
        horizon,
        transition,
        stage_cost,
        terminal_cost,
        empirical: Empirical::Stationary(EmpiricalTable::shared(raw.iter().map(|v| v / s).collect())),
    })
    .expect("random system is valid")
}

/// Softmax value against exhaustive simplex search on random rows of
/// `n_dist <= 4` disturbances, one instance per seed offset.
pub fn simplex_suite_random(instances: usize, n_dist: usize, seed: u64, step: f64, tol: f64) -> Result<Vec<Check>> {
    let rng = CounterRng::new(seed);
    let grid = [0.5, 1.0, 5.0];
    let mut out = Vec::with_capacity(instances);
    for i in 0..instances {
        let s = i as u64;
        let raw: Vec<f64> = (0..n_dist).map(|w| 0.02 + rng.uniform_at(s, w as u64)).collect();
        let total: f64 = raw.iter().sum();
        let r: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let j: Vec<f64> = (0..n_dist).map(|w| 20.0 * rng.uniform_at(s, 100 + w as u64) - 10.0).collect();
        let gh = grid[i % 3];
        let ge = grid[(i / 3) % 3];
        let pen = Penalties::new(gh, ge)?;
        out.push(simplex_check(&format!("instance {i} (gamma_h={gh}, gamma_e={ge})"), &r, &j, &pen, step, tol)?);
    }
    Ok(out)
}

fn simplex_check(name: &str, r: &[f64], j: &[f64], pen: &Penalties, step: f64, tol: f64) -> Result<Check> {
    let alpha: Vec<f64> = r
        .iter()
        .zip(j)
        .map(|(&rw, &jw)| if pen.gamma_h() == 0.0 { jw } else if rw > 0.0 { pen.gamma_h() * rw.ln() + jw } else { f64::NEG_INFINITY })
        .collect();
    let closed = q_value(&alpha.into(), pen)?;
    let best = simplex_search(r, j, pen, step)?;
    Ok(Check::close(name, best.value, closed, tol))
}

/// Simplex check on every `(x, u)` of the last stage of a small system.
pub fn simplex_suite_system(sys: &FiniteSystem, pen: &Penalties, step: f64, tol: f64, max_checks: usize) -> Result<Vec<Check>> {
    if sys.n_dist() > MAX_SIMPLEX_DIM {
        return Err(Error::DimensionTooLarge { len: sys.n_dist(), max: MAX_SIMPLEX_DIM });
    }
    let k = sys.horizon() - 1;
    let next = sys.terminal_cost();
    let mut out = Vec::new();
    'outer: for x in 0..sys.n_states() {
        for u in 0..sys.n_inputs() {
            if out.len() >= max_checks {
                break 'outer;
            }
            let j: Vec<f64> = sys.successors(x, u).iter().map(|&s| next[s as usize]).collect();
            let r = sys.empirical(k, x, u);
            let alpha = alpha_row(sys, k, x, u, next, pen);
            let closed = q_value(&alpha, pen)?;
            let best = simplex_search(r, &j, pen, step)?;
            out.push(Check::close(format!("k={k} x={x} u={u}"), best.value, closed, tol));
        }
    }
    Ok(out)
}

/// Closed-form `Q_0(x, u)` against trapezoid quadrature on a square grid.
pub fn quadrature_suite(lq: &LqSystem, pen: &Penalties, points: &[f64], n_nodes: usize, tol: f64) -> Result<Vec<Check>> {
    if lq.n_x() != 1 || lq.n_u() != 1 || lq.n_w() != 1 {
        return Err(Error::InvalidArgument("quadrature suite needs a scalar system".into()));
    }
    let lq1 = match lq.horizon() {
        Horizon::Finite(_) => lq.clone(),
        Horizon::Infinite(_) => lq.with_horizon(Horizon::Finite(1)),
    };
    let sol = solve_finite_horizon(&lq1, pen, &RiccatiConfig::default())?;
    let mut out = Vec::new();
    for &x in points {
        for &u in points {
            let (xv, uv) = (dvector![x], dvector![u]);
            let closed = sol.q_value(&lq1, 0, &xv, &uv);
            let quad = gaussian_quadrature_q(&lq1, &sol.p_mats[1], sol.zetas[1], &xv, &uv, pen, None, n_nodes)?;
            out.push(Check::close(format!("x={x} u={u}"), quad, closed, tol));
        }
    }
    Ok(out)
}

fn policy_match(a: &[u32], b: &[u32]) -> f64 {
    a.iter().zip(b).filter(|(x, y)| x != y).count() as f64
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn modal_likelihood_is_constant(sys: &FiniteSystem) -> bool {
    let mut seen: Option<(f64, usize)> = None;
    for k in 0..sys.horizon() {
        for x in 0..sys.n_states() {
            for u in 0..sys.n_inputs() {
                let r = sys.empirical(k, x, u);
                let m = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let count = r.iter().filter(|&&v| v == m).count();
                if count != 1 {
                    return false;
                }
                match seen {
                    None => seen = Some((m, 1)),
                    Some((s, _)) if s != m => return false,
                    _ => {}
                }
            }
        }
    }
    true
}

/// The four corner regimes of the penalty plane.
pub fn limits_suite(sys: &FiniteSystem) -> Result<Vec<Check>> {
    let mut out = Vec::new();

    let minimax = solve_backward(sys, &Penalties::MINIMAX)?;
    let direct = solve_limit(sys, LimitRegime::Minimax)?;
    out.push(Check::close("minimax at (0, 0): max |J - J_minimax|", max_diff(minimax.values(), direct.values()), 0.0, 1e-10));

    for gamma in [0.5, 1.0, 2.0] {
        let soft = solve_backward(sys, &Penalties::new(gamma, gamma)?)?;
        let direct = solve_limit(sys, LimitRegime::RiskSensitive(1.0 / gamma))?;
        out.push(Check::close(
            format!("risk-sensitive at gamma_h = gamma_e = {gamma}: max |J - J_rs|"),
            max_diff(soft.values(), direct.values()),
            0.0,
            1e-10,
        ));
    }

    let soft = solve_backward(sys, &Penalties::new(1e6, 1e6)?)?;
    let direct = solve_limit(sys, LimitRegime::Sdp)?;
    out.push(Check::close("expected cost at gamma_h = gamma_e = 1e6: max |J - J_sdp|", max_diff(soft.values(), direct.values()), 0.0, 1e-4));

    if modal_likelihood_is_constant(sys) {
        let soft = solve_backward(sys, &Penalties::new(1e9, 0.0)?)?;
        let direct = solve_limit(sys, LimitRegime::MlCe)?;
        out.push(Check::close(
            "most-likely disturbance at (gamma_h, gamma_e) = (1e9, 0): policy mismatches",
            policy_match(soft.policy_table(), direct.policy_table()),
            0.0,
            0.0,
        ));
    } else {
        out.push(Check::skip("most-likely disturbance: modal likelihood differs across (x, u) or is tied"));
    }
    Ok(out)
}

/// Certifies the infinite-horizon controller at `margin` times the critical
/// likelihood factor against `gamma^2 = gamma_h / 2`.
pub fn attenuation_suite(lq: &LqSystem, margin: f64, spec: &CertifySpec) -> Result<Vec<Check>> {
    let cfg = RiccatiConfig::default();
    let crit = critical_gamma_h(lq, Horizon::INFINITE, &cfg)?;
    let gamma_h = margin * crit.gamma_h;
    let pen = Penalties::new(gamma_h, 1.0)?;
    let sol = solve_infinite_horizon(lq, &pen, &cfg)?;
    let gamma = (gamma_h / 2.0).sqrt();
    let spec = CertifySpec { adversary_mean_map: Some(sol.adversary_mean_map.clone()), ..spec.clone() };
    let report = certify_attenuation(lq, &sol.gain, gamma, &spec)?;
    Ok(vec![Check::at_most(
        format!("induced gain at gamma_h = {margin} x critical ({gamma_h:.6}): max ratio vs gamma^2"),
        report.max_ratio,
        report.gamma_sq,
        crate::lq::ATTENUATION_SLACK,
    )])
}

/// Default square grid for the quadrature suite.
pub fn quadrature_points() -> Vec<f64> {
    vec![-3.0, -1.5, 0.0, 1.5, 3.0]
}

/// Scalar benchmark `x' = x + u + w` with unit weights.
pub fn scalar_benchmark(horizon: Horizon) -> LqSystem {
    LqSystem::new(
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 1.0),
        horizon,
    )
    .expect("benchmark is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn limits_on_random_system() {
        let sys = random_finite_system(5, 3, 4, 4, 1);
        let checks = limits_suite(&sys).unwrap();
        assert_eq!(checks.len(), 6);
        assert!(all_pass(&checks), "{checks:#?}");
        assert!(checks.iter().all(|c| c.status == Status::Pass));
    }

    #[test]
    fn simplex_on_small_random_rows() {
        let checks = simplex_suite_random(6, 3, 5, 0.01, 0.05).unwrap();
        assert!(all_pass(&checks), "{checks:#?}");
    }

    #[test]
    fn quadrature_on_benchmark() {
        let lq = scalar_benchmark(Horizon::Finite(2));
        let checks = quadrature_suite(&lq, &Penalties::new(6.0, 1.5).unwrap(), &[-1.0, 0.5], 4001, 1e-6).unwrap();
        assert!(all_pass(&checks), "{checks:#?}");
    }
}
