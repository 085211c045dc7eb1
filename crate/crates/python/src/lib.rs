//! Python bindings: load scenarios, solve finite and LQ problems, roll out
//! policies and query the oracles. Matrices cross the boundary as lists of
//! row lists.

use nalgebra::{DMatrix, DVector};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use minsoftmax::finite::{q_value as lib_q_value, softmax_adversary as lib_softmax};
use minsoftmax::lq::{critical_gamma_h as lib_critical, solve_finite_horizon, solve_infinite_horizon, RiccatiConfig};
use minsoftmax::montecarlo::{rollout, InitialState, RolloutSpec};
use minsoftmax::oracle::simplex_search as lib_simplex;
use minsoftmax::scenarios::{load_scenario as lib_load, ScenarioFile, ScenarioPayload};
use minsoftmax::{solve_backward, AlphaRow, Error, Horizon, LqSystem, Penalties, SolveResult};

create_exception!(minsoftmax, MinsoftmaxError, PyException, "Error raised by the solver; `args[1]` is the error kind.");
create_exception!(minsoftmax, MBelowCritical, MinsoftmaxError, "gamma_h is below the critical likelihood factor.");

fn to_py(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::MBelowCritical { .. } => MBelowCritical::new_err((msg, "MBelowCritical")),
        other => MinsoftmaxError::new_err((msg, other.kind())),
    }
}

fn penalties(gamma_h: f64, gamma_e: f64) -> PyResult<Penalties> {
    Penalties::new(gamma_h, gamma_e).map_err(to_py)
}

fn matrix(rows: &[Vec<f64>], name: &str) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || m == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err(format!("{name} must be a non-empty rectangular list of rows")));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// A parsed scenario file.
#[pyclass(frozen, module = "minsoftmax")]
struct Scenario {
    inner: ScenarioFile,
}

#[pymethods]
impl Scenario {
    /// `"finite"` or `"lq"`.
    #[getter]
    fn kind(&self) -> &'static str {
        match self.inner.payload {
            ScenarioPayload::Finite(_) => "finite",
            ScenarioPayload::Lq(_) => "lq",
        }
    }

    #[getter]
    fn name(&self) -> Option<String> {
        self.inner.name.clone()
    }

    /// Horizon, or `None` when infinite.
    #[getter]
    fn horizon(&self) -> Option<usize> {
        match &self.inner.payload {
            ScenarioPayload::Finite(s) => Some(s.horizon()),
            ScenarioPayload::Lq(s) => s.horizon().finite(),
        }
    }

    /// `(n_states, n_inputs, n_dist)` for finite scenarios, `(n_x, n_u, n_w)` for LQ.
    #[getter]
    fn dims(&self) -> (usize, usize, usize) {
        match &self.inner.payload {
            ScenarioPayload::Finite(s) => (s.n_states(), s.n_inputs(), s.n_dist()),
            ScenarioPayload::Lq(s) => (s.n_x(), s.n_u(), s.n_w()),
        }
    }

    /// Penalty points listed in the scenario.
    fn penalty_points(&self) -> Vec<(f64, f64)> {
        self.inner.penalty_grid.as_ref().map(|g| g.points()).unwrap_or_default()
    }

    /// Solves a finite scenario.
    fn solve(&self, gamma_h: f64, gamma_e: f64) -> PyResult<FiniteSolution> {
        let sys = self.inner.as_finite().ok_or_else(|| PyValueError::new_err("not a finite scenario"))?;
        let res = solve_backward(sys, &penalties(gamma_h, gamma_e)?).map_err(to_py)?;
        Ok(FiniteSolution { res })
    }

    /// Solves a finite scenario and rolls the policy out under the empirical
    /// distribution. Returns `(mean_state, std_state, mean_cost, cost_std_error)`.
    #[pyo3(signature = (gamma_h, gamma_e, n_rollouts, seed, x0))]
    fn simulate(&self, gamma_h: f64, gamma_e: f64, n_rollouts: usize, seed: u64, x0: usize) -> PyResult<(Vec<f64>, Vec<f64>, f64, f64)> {
        let sys = self.inner.as_finite().ok_or_else(|| PyValueError::new_err("not a finite scenario"))?;
        let res = solve_backward(sys, &penalties(gamma_h, gamma_e)?).map_err(to_py)?;
        let mut spec = RolloutSpec::new(n_rollouts, seed, InitialState::State(x0));
        spec.state_map = self.inner.maps.state;
        let out = rollout(sys, &res, &spec).map_err(to_py)?;
        let se = out.stats.cost_std_error();
        Ok((out.stats.mean_state, out.stats.std_state, out.stats.mean_cost, se))
    }

    /// Solves an LQ scenario; see [`solve_lq`].
    fn solve_lq(&self, gamma_h: f64, gamma_e: f64) -> PyResult<LqResult> {
        let lq = self.inner.as_lq().ok_or_else(|| PyValueError::new_err("not an lq scenario"))?;
        solve_lq_system(lq, gamma_h, gamma_e)
    }

    fn __repr__(&self) -> String {
        format!("Scenario(kind={:?}, name={:?}, dims={:?})", self.kind(), self.name(), self.dims())
    }
}

/// Values, policy and adversary of a finite solve.
#[pyclass(frozen, module = "minsoftmax")]
struct FiniteSolution {
    res: SolveResult,
}

#[pymethods]
impl FiniteSolution {
    #[getter]
    fn horizon(&self) -> usize {
        self.res.horizon()
    }

    /// `J_k(x)`.
    fn value(&self, k: usize, x: usize) -> PyResult<f64> {
        self.check(k, x, self.res.horizon())?;
        Ok(self.res.value(k, x))
    }

    /// Input chosen at `(k, x)`.
    fn policy(&self, k: usize, x: usize) -> PyResult<usize> {
        self.check(k, x, self.res.horizon().saturating_sub(1))?;
        Ok(self.res.policy(k, x))
    }

    /// `(h + 1)` rows of `n_states` values.
    fn values(&self) -> Vec<Vec<f64>> {
        self.res.values().chunks(self.res.n_states()).map(<[f64]>::to_vec).collect()
    }

    /// `h` rows of `n_states` inputs.
    fn policy_table(&self) -> Vec<Vec<u32>> {
        self.res.policy_table().chunks(self.res.n_states()).map(<[u32]>::to_vec).collect()
    }

    /// Adversarial distribution at `(k, x)`, or the worst-case index as a
    /// one-hot list when `gamma_e = 0`.
    fn adversary(&self, k: usize, x: usize) -> PyResult<Vec<f64>> {
        self.check(k, x, self.res.horizon().saturating_sub(1))?;
        Ok(match self.res.adversary_row(k, x) {
            minsoftmax::AdversaryRow::Distribution(p) => p.to_vec(),
            minsoftmax::AdversaryRow::WorstCase(w) => {
                let mut v = vec![0.0; self.res.n_dist()];
                v[w] = 1.0;
                v
            }
        })
    }
}

impl FiniteSolution {
    fn check(&self, k: usize, x: usize, max_k: usize) -> PyResult<()> {
        if k > max_k || x >= self.res.n_states() {
            return Err(PyValueError::new_err(format!("(k, x) = ({k}, {x}) out of range")));
        }
        Ok(())
    }
}

/// Riccati solution. Finite horizons carry one entry per stage; infinite
/// horizons carry a single stationary entry and `zeta` is empty.
#[pyclass(frozen, get_all, module = "minsoftmax")]
struct LqResult {
    p: Vec<Vec<Vec<f64>>>,
    zeta: Vec<f64>,
    gains: Vec<Vec<Vec<f64>>>,
    adversary_mean_maps: Vec<Vec<Vec<f64>>>,
    adversary_covs: Vec<Vec<Vec<f64>>>,
}

fn solve_lq_system(lq: &LqSystem, gamma_h: f64, gamma_e: f64) -> PyResult<LqResult> {
    let pen = penalties(gamma_h, gamma_e)?;
    let cfg = RiccatiConfig::default();
    let all = |v: &[DMatrix<f64>]| v.iter().map(rows).collect::<Vec<_>>();
    match lq.horizon() {
        Horizon::Finite(_) => {
            let s = solve_finite_horizon(lq, &pen, &cfg).map_err(to_py)?;
            Ok(LqResult {
                p: all(&s.p_mats),
                zeta: s.zetas,
                gains: all(&s.gains),
                adversary_mean_maps: all(&s.adversary_mean_maps),
                adversary_covs: all(&s.adversary_covs),
            })
        }
        Horizon::Infinite(_) => {
            let s = solve_infinite_horizon(lq, &pen, &cfg).map_err(to_py)?;
            Ok(LqResult {
                p: vec![rows(&s.p_bar)],
                zeta: vec![],
                gains: vec![rows(&s.gain)],
                adversary_mean_maps: vec![rows(&s.adversary_mean_map)],
                adversary_covs: vec![rows(&s.adversary_cov)],
            })
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn lq_from_lists(
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    d: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    q_h: Vec<Vec<f64>>,
    horizon: Option<usize>,
) -> PyResult<LqSystem> {
    let h = horizon.map_or(Horizon::INFINITE, Horizon::Finite);
    LqSystem::new(matrix(&a, "a")?, matrix(&b, "b")?, matrix(&d, "d")?, matrix(&q, "q")?, matrix(&r, "r")?, matrix(&q_h, "q_h")?, h)
        .map_err(|e| to_py(e.into()))
}

#[pyfunction]
fn load_scenario(path: &str) -> PyResult<Scenario> {
    Ok(Scenario { inner: lib_load(path).map_err(to_py)? })
}

/// Solves `x' = Ax + Bu + Dw`; `horizon=None` means infinite.
#[pyfunction]
#[pyo3(signature = (a, b, d, q, r, q_h, horizon, gamma_h, gamma_e))]
#[allow(clippy::too_many_arguments)]
fn solve_lq(
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    d: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    q_h: Vec<Vec<f64>>,
    horizon: Option<usize>,
    gamma_h: f64,
    gamma_e: f64,
) -> PyResult<LqResult> {
    solve_lq_system(&lq_from_lists(a, b, d, q, r, q_h, horizon)?, gamma_h, gamma_e)
}

/// Smallest feasible `gamma_h` as `(gamma_h, lower, attenuation)`.
#[pyfunction]
#[pyo3(signature = (a, b, d, q, r, q_h, horizon))]
fn critical_gamma_h(
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    d: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    q_h: Vec<Vec<f64>>,
    horizon: Option<usize>,
) -> PyResult<(f64, f64, f64)> {
    let lq = lq_from_lists(a, b, d, q, r, q_h, horizon)?;
    let c = lib_critical(&lq, lq.horizon(), &RiccatiConfig::default()).map_err(to_py)?;
    Ok((c.gamma_h, c.lower, c.attenuation))
}

/// Inner value `gamma_e log sum exp(alpha / gamma_e)` (max when `gamma_e = 0`).
#[pyfunction]
fn q_value(alpha: Vec<f64>, gamma_e: f64) -> PyResult<f64> {
    lib_q_value(&AlphaRow(alpha), &penalties(0.0, gamma_e)?).map_err(to_py)
}

/// Softmax adversary `p ∝ exp(alpha / gamma_e)`.
#[pyfunction]
fn softmax_adversary(alpha: Vec<f64>, gamma_e: f64) -> PyResult<Vec<f64>> {
    lib_softmax(&AlphaRow(alpha), &penalties(0.0, gamma_e)?).map_err(to_py)
}

/// Brute-force maximum of the regularized objective over a simplex grid,
/// returned as `(p, value)`.
#[pyfunction]
#[pyo3(signature = (r, j, gamma_h, gamma_e, step=0.001))]
fn simplex_search(r: Vec<f64>, j: Vec<f64>, gamma_h: f64, gamma_e: f64, step: f64) -> PyResult<(Vec<f64>, f64)> {
    let best = lib_simplex(&r, &j, &penalties(gamma_h, gamma_e)?, step).map_err(to_py)?;
    Ok((best.p, best.value))
}

/// `x'P x` for a matrix given as rows; convenience for LQ values.
#[pyfunction]
fn quadratic_form(p: Vec<Vec<f64>>, x: Vec<f64>) -> PyResult<f64> {
    let p = matrix(&p, "p")?;
    if p.ncols() != x.len() || p.nrows() != x.len() {
        return Err(PyValueError::new_err("dimension mismatch"));
    }
    let x = DVector::from_vec(x);
    Ok((x.transpose() * p * &x)[0])
}

#[pymodule]
#[pyo3(name = "minsoftmax")]
fn minsoftmax_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Scenario>()?;
    m.add_class::<FiniteSolution>()?;
    m.add_class::<LqResult>()?;
    m.add_function(wrap_pyfunction!(load_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(solve_lq, m)?)?;
    m.add_function(wrap_pyfunction!(critical_gamma_h, m)?)?;
    m.add_function(wrap_pyfunction!(q_value, m)?)?;
    m.add_function(wrap_pyfunction!(softmax_adversary, m)?)?;
    m.add_function(wrap_pyfunction!(simplex_search, m)?)?;
    m.add_function(wrap_pyfunction!(quadratic_form, m)?)?;
    m.add("MinsoftmaxError", m.py().get_type::<MinsoftmaxError>())?;
    m.add("MBelowCritical", m.py().get_type::<MBelowCritical>())?;
    Ok(())
}
