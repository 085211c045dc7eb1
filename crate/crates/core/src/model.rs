//! Domain types shared by the finite and linear-quadratic solvers.
//!
//! Every type here is validated on construction and immutable afterwards,
//! so instances can be shared freely across worker threads.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ValidationReport, Violation};

/// Input tolerance on empirical row sums.
pub const PROBABILITY_TOL: f64 = 1e-12;
/// Symmetry and definiteness tolerance for LQ weight matrices.
pub const MATRIX_TOL: f64 = 1e-10;

/// Regularization weights of the adversary.
///
/// `gamma_h` is the likelihood factor (weight on the negative cross-entropy to
/// the empirical distribution) and `gamma_e` the temperature (weight on the
/// adversary's own entropy).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Penalties {
    gamma_h: f64,
    gamma_e: f64,
}

impl Penalties {
    pub fn new(gamma_h: f64, gamma_e: f64) -> Result<Self> {
        for (name, v) in [("gamma_h", gamma_h), ("gamma_e", gamma_e)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be a finite nonnegative real, got {v}")));
            }
        }
        Ok(Self { gamma_h, gamma_e })
    }

    /// Unregularized worst case.
    pub const MINIMAX: Penalties = Penalties { gamma_h: 0.0, gamma_e: 0.0 };

    pub fn gamma_h(&self) -> f64 {
        self.gamma_h
    }

    pub fn gamma_e(&self) -> f64 {
        self.gamma_e
    }
}

/// How empirical rows are indexed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmpiricalLayout {
    /// One row shared by every (x, u).
    Shared,
    /// One row per input.
    PerInput,
    /// One row per (x, u), state-major.
    PerStateInput,
}

/// Dense table of empirical disturbance distributions, `n_rows x n_dist`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalTable {
    pub layout: EmpiricalLayout,
    pub rows: Vec<f64>,
}

impl EmpiricalTable {
    pub fn shared(row: Vec<f64>) -> Self {
        Self { layout: EmpiricalLayout::Shared, rows: row }
    }

    pub fn n_rows(layout: EmpiricalLayout, n_states: usize, n_inputs: usize) -> usize {
        match layout {
            EmpiricalLayout::Shared => 1,
            EmpiricalLayout::PerInput => n_inputs,
            EmpiricalLayout::PerStateInput => n_states * n_inputs,
        }
    }

    #[inline]
    fn row_index(&self, x: usize, u: usize, n_inputs: usize) -> usize {
        match self.layout {
            EmpiricalLayout::Shared => 0,
            EmpiricalLayout::PerInput => u,
            EmpiricalLayout::PerStateInput => x * n_inputs + u,
        }
    }

    /// Row used at `(x, u)`; `None` when the table is too short.
    pub fn row(&self, x: usize, u: usize, n_inputs: usize, n_dist: usize) -> Option<&[f64]> {
        let i = self.row_index(x, u, n_inputs);
        self.rows.get(i * n_dist..(i + 1) * n_dist)
    }

    fn row_labels(&self, row: usize, n_inputs: usize) -> (Option<usize>, Option<usize>) {
        match self.layout {
            EmpiricalLayout::Shared => (None, None),
            EmpiricalLayout::PerInput => (None, Some(row)),
            EmpiricalLayout::PerStateInput => (Some(row / n_inputs), Some(row % n_inputs)),
        }
    }
}

/// Index-to-physical map `value = offset + slope * index`, zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub offset: f64,
    pub slope: f64,
}

impl AffineMap {
    /// Endpoint-inclusive map of `n` indices onto `[lo, hi]`.
    pub fn spanning(lo: f64, hi: f64, n: usize) -> Self {
        let slope = if n > 1 { (hi - lo) / (n - 1) as f64 } else { 0.0 };
        Self { offset: lo, slope }
    }

    pub fn apply(&self, index: usize) -> f64 {
        self.offset + self.slope * index as f64
    }
}

/// Empirical distributions, optionally indexed by stage.
#[derive(Debug, Clone, PartialEq)]
pub enum Empirical {
    Stationary(EmpiricalTable),
    PerStage(Vec<EmpiricalTable>),
}

/// Raw, unvalidated pieces of a [`FiniteSystem`].
///
/// Tables are dense: `transition` is indexed `(x * n_inputs + u) * n_dist + w`,
/// `stage_cost` is indexed `x * n_inputs + u`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSystemParts {
    pub n_states: usize,
    pub n_inputs: usize,
    pub n_dist: usize,
    pub horizon: usize,
    pub transition: Vec<u32>,
    pub stage_cost: Vec<f64>,
    pub terminal_cost: Vec<f64>,
    pub empirical: Empirical,
}

/// Deterministic finite control system with empirical disturbance model.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSystem {
    parts: FiniteSystemParts,
}

/// Checks every [`FiniteSystem`] invariant and reports all violations at once.
pub fn validate_finite_system(p: &FiniteSystemParts) -> std::result::Result<(), ValidationReport> {
    let mut report = ValidationReport::default();
    for (field, n) in [
        ("n_states", p.n_states),
        ("n_inputs", p.n_inputs),
        ("n_dist", p.n_dist),
        ("horizon", p.horizon),
    ] {
        if n == 0 {
            report.push(Violation::EmptySpace { field });
        }
    }
    if !report.is_empty() {
        return Err(report);
    }
    let (ns, nu, nw) = (p.n_states, p.n_inputs, p.n_dist);

    let mut dims_ok = true;
    let mut check_len = |report: &mut ValidationReport, field, expected, found| {
        if expected != found {
            report.push(Violation::Dimension { field, expected, found });
            dims_ok = false;
        }
    };
    check_len(&mut report, "transition", ns * nu * nw, p.transition.len());
    check_len(&mut report, "stage_cost", ns * nu, p.stage_cost.len());
    check_len(&mut report, "terminal_cost", ns, p.terminal_cost.len());
    let tables: Vec<(Option<usize>, &EmpiricalTable)> = match &p.empirical {
        Empirical::Stationary(t) => vec![(None, t)],
        Empirical::PerStage(ts) => {
            check_len(&mut report, "empirical stages", p.horizon, ts.len());
            ts.iter().enumerate().map(|(k, t)| (Some(k), t)).collect()
        }
    };
    for (_, t) in &tables {
        let rows = EmpiricalTable::n_rows(t.layout, ns, nu);
        check_len(&mut report, "empirical", rows * nw, t.rows.len());
    }
    if !dims_ok {
        return Err(report);
    }

    for (i, &target) in p.transition.iter().enumerate() {
        if target as usize >= ns {
            let (xu, w) = (i / nw, i % nw);
            report.push(Violation::OutOfRangeTransition {
                state: xu / nu,
                input: xu % nu,
                dist: w,
                target: target as usize,
            });
        }
    }
    for (field, costs) in [("stage_cost", &p.stage_cost), ("terminal_cost", &p.terminal_cost)] {
        for (index, c) in costs.iter().enumerate() {
            if !c.is_finite() {
                report.push(Violation::NonFiniteCost { field, index });
            }
        }
    }
    for (stage, table) in tables {
        for (row, probs) in table.rows.chunks_exact(nw).enumerate() {
            let (state, input) = table.row_labels(row, nu);
            let mut row_ok = true;
            for (dist, &value) in probs.iter().enumerate() {
                if !(value.is_finite() && value >= 0.0) {
                    report.push(Violation::NegativeProbability { stage, state, input, dist, value });
                    row_ok = false;
                }
            }
            let sum: f64 = probs.iter().sum();
            if row_ok && (sum - 1.0).abs() > PROBABILITY_TOL {
                report.push(Violation::NonStochasticRow { stage, state, input, sum });
            }
        }
    }
    report.into_result()
}

impl FiniteSystem {
    /// Validates `parts` and renormalizes every empirical row to sum to one.
    pub fn new(mut parts: FiniteSystemParts) -> std::result::Result<Self, ValidationReport> {
        validate_finite_system(&parts)?;
        let nw = parts.n_dist;
        let normalize = |t: &mut EmpiricalTable| {
            // rows already within summation round-off are left alone so that
            // rebuilding from saved rows reproduces them bit for bit
            let slack = 4.0 * nw as f64 * f64::EPSILON;
            for row in t.rows.chunks_exact_mut(nw) {
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > slack {
                    row.iter_mut().for_each(|p| *p /= s);
                }
            }
        };
        match &mut parts.empirical {
            Empirical::Stationary(t) => normalize(t),
            Empirical::PerStage(ts) => ts.iter_mut().for_each(normalize),
        }
        Ok(Self { parts })
    }

    pub fn n_states(&self) -> usize {
        self.parts.n_states
    }

    pub fn n_inputs(&self) -> usize {
        self.parts.n_inputs
    }

    pub fn n_dist(&self) -> usize {
        self.parts.n_dist
    }

    pub fn horizon(&self) -> usize {
        self.parts.horizon
    }

    #[inline]
    pub fn next_state(&self, x: usize, u: usize, w: usize) -> usize {
        self.parts.transition[(x * self.parts.n_inputs + u) * self.parts.n_dist + w] as usize
    }

    /// Successor states of `(x, u)` for every disturbance.
    #[inline]
    pub fn successors(&self, x: usize, u: usize) -> &[u32] {
        let start = (x * self.parts.n_inputs + u) * self.parts.n_dist;
        &self.parts.transition[start..start + self.parts.n_dist]
    }

    #[inline]
    pub fn stage_cost(&self, x: usize, u: usize) -> f64 {
        self.parts.stage_cost[x * self.parts.n_inputs + u]
    }

    pub fn terminal_cost(&self) -> &[f64] {
        &self.parts.terminal_cost
    }

    /// Empirical distribution `r_k(. | x, u)`.
    #[inline]
    pub fn empirical(&self, k: usize, x: usize, u: usize) -> &[f64] {
        let table = match &self.parts.empirical {
            Empirical::Stationary(t) => t,
            Empirical::PerStage(ts) => &ts[k],
        };
        let row = table.row_index(x, u, self.parts.n_inputs);
        &table.rows[row * self.parts.n_dist..(row + 1) * self.parts.n_dist]
    }

    pub fn parts(&self) -> &FiniteSystemParts {
        &self.parts
    }

    pub fn into_parts(self) -> FiniteSystemParts {
        self.parts
    }

    /// Same system with a different horizon.
    pub fn with_horizon(&self, horizon: usize) -> std::result::Result<Self, ValidationReport> {
        let mut parts = self.parts.clone();
        parts.horizon = horizon;
        Self::new(parts)
    }
}

/// Adversary recorded at the chosen input of every `(k, x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum AdversaryTable {
    /// Softmax distributions, `h x n_states x n_dist`.
    Distribution(Vec<f64>),
    /// Deterministic worst-case disturbance indices, `h x n_states`.
    WorstCase(Vec<u32>),
}

/// Adversary at one `(k, x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdversaryRow<'a> {
    Distribution(&'a [f64]),
    WorstCase(usize),
}

/// Output of a backward recursion on a [`FiniteSystem`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub(crate) horizon: usize,
    pub(crate) n_states: usize,
    pub(crate) n_inputs: usize,
    pub(crate) n_dist: usize,
    /// `(h + 1) x n_states`, stage-major.
    pub(crate) values: Vec<f64>,
    /// `h x n_states`.
    pub(crate) policy: Vec<u32>,
    pub(crate) adversary: AdversaryTable,
    /// Debug-only adversary tables for every input, `h x n_states x n_inputs x n_dist`.
    pub(crate) full_adversary: Option<Vec<f64>>,
}

impl SolveResult {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn n_dist(&self) -> usize {
        self.n_dist
    }

    pub fn value(&self, k: usize, x: usize) -> f64 {
        self.values[k * self.n_states + x]
    }

    /// `J_k` over all states.
    pub fn values_at(&self, k: usize) -> &[f64] {
        &self.values[k * self.n_states..(k + 1) * self.n_states]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn policy(&self, k: usize, x: usize) -> usize {
        self.policy[k * self.n_states + x] as usize
    }

    pub fn policy_at(&self, k: usize) -> &[u32] {
        &self.policy[k * self.n_states..(k + 1) * self.n_states]
    }

    pub fn policy_table(&self) -> &[u32] {
        &self.policy
    }

    pub fn adversary(&self) -> &AdversaryTable {
        &self.adversary
    }

    pub fn adversary_row(&self, k: usize, x: usize) -> AdversaryRow<'_> {
        let i = k * self.n_states + x;
        match &self.adversary {
            AdversaryTable::Distribution(p) => AdversaryRow::Distribution(&p[i * self.n_dist..(i + 1) * self.n_dist]),
            AdversaryTable::WorstCase(idx) => AdversaryRow::WorstCase(idx[i] as usize),
        }
    }

    /// Adversary at an arbitrary input, if full tables were requested.
    pub fn full_adversary_row(&self, k: usize, x: usize, u: usize) -> Option<&[f64]> {
        let table = self.full_adversary.as_ref()?;
        let i = (k * self.n_states + x) * self.n_inputs + u;
        Some(&table[i * self.n_dist..(i + 1) * self.n_dist])
    }
}

/// Planning horizon of an LQ problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Horizon {
    Finite(usize),
    Infinite(InfiniteTag),
}

/// Serialized as the string `"infinite"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfiniteTag {
    Infinite,
}

impl Horizon {
    pub const INFINITE: Horizon = Horizon::Infinite(InfiniteTag::Infinite);

    pub fn finite(self) -> Option<usize> {
        match self {
            Horizon::Finite(h) => Some(h),
            Horizon::Infinite(_) => None,
        }
    }
}

/// Linear dynamics `x' = Ax + Bu + Dw` with quadratic costs.
#[derive(Debug, Clone, PartialEq)]
pub struct LqSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    d: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    q_h: DMatrix<f64>,
    horizon: Horizon,
}

pub(crate) fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

pub(crate) fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).abs().max()
}

impl LqSystem {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        d: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        q_h: DMatrix<f64>,
        horizon: Horizon,
    ) -> std::result::Result<Self, ValidationReport> {
        let mut report = ValidationReport::default();
        let n = a.nrows();
        let nu = b.ncols();
        if n == 0 {
            report.push(Violation::EmptySpace { field: "A" });
        }
        if nu == 0 {
            report.push(Violation::EmptySpace { field: "B" });
        }
        if d.ncols() == 0 {
            report.push(Violation::EmptySpace { field: "D" });
        }
        if horizon == Horizon::Finite(0) {
            report.push(Violation::EmptySpace { field: "horizon" });
        }
        let shapes: [(&'static str, &DMatrix<f64>, usize, usize); 6] = [
            ("A", &a, n, n),
            ("B", &b, n, nu),
            ("D", &d, n, d.ncols()),
            ("Q", &q, n, n),
            ("R", &r, nu, nu),
            ("Q_h", &q_h, n, n),
        ];
        for (field, m, rows, cols) in shapes {
            if m.nrows() != rows || m.ncols() != cols {
                report.push(Violation::Dimension { field, expected: rows * cols, found: m.nrows() * m.ncols() });
            } else if m.iter().any(|v| !v.is_finite()) {
                report.push(Violation::NonFiniteEntry { field });
            }
        }
        if !report.is_empty() {
            return Err(report);
        }
        for (field, m, definite) in [("Q", &q, false), ("Q_h", &q_h, false), ("R", &r, true)] {
            let asym = max_asymmetry(m);
            if asym > MATRIX_TOL {
                report.push(Violation::NotSymmetric { field, asymmetry: asym });
                continue;
            }
            let min_eig = min_symmetric_eigenvalue(m);
            if definite && min_eig <= MATRIX_TOL {
                report.push(Violation::NotDefinite { field, min_eigenvalue: min_eig });
            } else if !definite && min_eig < -MATRIX_TOL {
                report.push(Violation::NotSemidefinite { field, min_eigenvalue: min_eig });
            }
        }
        report.into_result()?;
        Ok(Self { a, b, d, q, r, q_h, horizon })
    }

    /// Scalar system, handy for benchmarks.
    pub fn scalar(a: f64, b: f64, d: f64, q: f64, r: f64, q_h: f64, horizon: Horizon) -> std::result::Result<Self, ValidationReport> {
        let m = |v| DMatrix::from_element(1, 1, v);
        Self::new(m(a), m(b), m(d), m(q), m(r), m(q_h), horizon)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn q_h(&self) -> &DMatrix<f64> {
        &self.q_h
    }

    pub fn horizon(&self) -> Horizon {
        self.horizon
    }

    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_w(&self) -> usize {
        self.d.ncols()
    }

    pub fn with_horizon(&self, horizon: Horizon) -> Self {
        Self { horizon, ..self.clone() }
    }

    pub fn with_d(&self, d: DMatrix<f64>) -> std::result::Result<Self, ValidationReport> {
        Self::new(self.a.clone(), self.b.clone(), d, self.q.clone(), self.r.clone(), self.q_h.clone(), self.horizon)
    }

    /// `x'Qx + u'Ru`.
    pub fn stage_cost(&self, x: &nalgebra::DVector<f64>, u: &nalgebra::DVector<f64>) -> f64 {
        (x.transpose() * &self.q * x)[0] + (u.transpose() * &self.r * u)[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state(row: Vec<f64>, transition: Vec<u32>) -> FiniteSystemParts {
        FiniteSystemParts {
            n_states: 2,
            n_inputs: 1,
            n_dist: 2,
            horizon: 1,
            transition,
            stage_cost: vec![0.0, 0.0],
            terminal_cost: vec![0.0, 1.0],
            empirical: Empirical::Stationary(EmpiricalTable {
                layout: EmpiricalLayout::PerStateInput,
                rows: [row.clone(), row].concat(),
            }),
        }
    }

    #[test]
    fn uniform_rows_validate() {
        assert!(FiniteSystem::new(two_state(vec![0.5, 0.5], vec![0, 1, 0, 1])).is_ok());
    }

    #[test]
    fn non_stochastic_row_reported_with_indices() {
        let report = validate_finite_system(&two_state(vec![0.5, 0.6], vec![0, 1, 0, 1])).unwrap_err();
        assert!(matches!(
            report.violations[0],
            Violation::NonStochasticRow { state: Some(0), input: Some(0), .. }
        ));
        // both rows are broken
        assert_eq!(report.violations.len(), 2);
    }

    #[test]
    fn off_by_one_transition() {
        let report = validate_finite_system(&two_state(vec![0.5, 0.5], vec![0, 2, 0, 1])).unwrap_err();
        assert_eq!(
            report.violations,
            vec![Violation::OutOfRangeTransition { state: 0, input: 0, dist: 1, target: 2 }]
        );
    }

    #[test]
    fn non_finite_cost() {
        let mut parts = two_state(vec![0.5, 0.5], vec![0, 1, 0, 1]);
        parts.terminal_cost[1] = f64::NAN;
        let report = validate_finite_system(&parts).unwrap_err();
        assert_eq!(report.violations, vec![Violation::NonFiniteCost { field: "terminal_cost", index: 1 }]);
    }

    #[test]
    fn rows_renormalized_exactly() {
        let row = vec![0.1, 0.2, 0.3, 0.4 + 5e-13];
        let parts = FiniteSystemParts {
            n_states: 1,
            n_inputs: 1,
            n_dist: 4,
            horizon: 1,
            transition: vec![0; 4],
            stage_cost: vec![0.0],
            terminal_cost: vec![0.0],
            empirical: Empirical::Stationary(EmpiricalTable::shared(row)),
        };
        let sys = FiniteSystem::new(parts).unwrap();
        let s: f64 = sys.empirical(0, 0, 0).iter().sum();
        assert!((s - 1.0).abs() <= 2.0 * f64::EPSILON);
    }

    #[test]
    fn per_stage_empirical_indexing() {
        let mut parts = two_state(vec![0.5, 0.5], vec![0, 1, 0, 1]);
        parts.horizon = 2;
        parts.empirical = Empirical::PerStage(vec![
            EmpiricalTable::shared(vec![1.0, 0.0]),
            EmpiricalTable::shared(vec![0.25, 0.75]),
        ]);
        let sys = FiniteSystem::new(parts).unwrap();
        assert_eq!(sys.empirical(1, 1, 0), &[0.25, 0.75]);
        assert_eq!(sys.empirical(0, 0, 0), &[1.0, 0.0]);
    }

    #[test]
    fn penalties_reject_negative() {
        assert!(Penalties::new(-1.0, 0.0).is_err());
        assert!(Penalties::new(0.0, f64::NAN).is_err());
    }

    #[test]
    fn lq_rejects_asymmetric_q() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        let eye = DMatrix::identity(2, 2);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let err = LqSystem::new(eye.clone(), b.clone(), b, q, one, eye, Horizon::Finite(3)).unwrap_err();
        assert!(matches!(err.violations[0], Violation::NotSymmetric { field: "Q", .. }));
    }

    #[test]
    fn lq_rejects_singular_r() {
        let err = LqSystem::scalar(1.0, 1.0, 1.0, 1.0, 0.0, 1.0, Horizon::Finite(1)).unwrap_err();
        assert!(matches!(err.violations[0], Violation::NotDefinite { field: "R", .. }));
    }

    #[test]
    fn horizon_serde() {
        assert_eq!(serde_json::to_string(&Horizon::INFINITE).unwrap(), "\"infinite\"");
        assert_eq!(serde_json::from_str::<Horizon>("8").unwrap(), Horizon::Finite(8));
    }
}
