//! Finite-space approximation of a scalar LQ system.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::{Empirical, EmpiricalTable, FiniteSystem, FiniteSystemParts, LqSystem, Penalties};

/// Uniform endpoint-inclusive grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, n: usize) -> Self {
        Self { lo, hi, n }
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn value(&self, i: usize) -> f64 {
        self.lo + self.step() * i as f64
    }

    /// Nearest index, saturating at the ends.
    pub fn nearest(&self, v: f64) -> usize {
        let t = ((v - self.lo) / self.step()).round();
        t.clamp(0.0, (self.n - 1) as f64) as usize
    }

    fn check(&self, axis: &'static str) -> Result<()> {
        if self.n < 3 {
            return Err(Error::DegenerateGrid { axis, points: self.n });
        }
        if !(self.lo.is_finite() && self.hi.is_finite() && self.hi > self.lo) {
            return Err(Error::InvalidArgument(format!("{axis} range [{}, {}] is empty", self.lo, self.hi)));
        }
        Ok(())
    }
}

/// Grid version of `x' = ax + bu + dw` with costs `q x^2 + r u^2`,
/// terminal `q_h x^2`, and standard normal disturbance masses on the `w`
/// cells (cell edges at midpoints, outer cells unbounded).
///
/// The caller picks ranges wide enough for the state excursions of interest;
/// transitions saturate at the grid ends.
pub fn discretize_scalar_lq(lq: &LqSystem, x: Grid, u: Grid, w: Grid) -> Result<FiniteSystem> {
    if lq.n_x() != 1 || lq.n_u() != 1 || lq.n_w() != 1 {
        return Err(Error::InvalidArgument("discretization needs a scalar system".into()));
    }
    let horizon = lq
        .horizon()
        .finite()
        .ok_or_else(|| Error::InvalidArgument("discretization needs a finite horizon".into()))?;
    x.check("x")?;
    u.check("u")?;
    w.check("w")?;
    let (a, b, d) = (lq.a()[0], lq.b()[0], lq.d()[0]);
    let (q, r, q_h) = (lq.q()[0], lq.r()[0], lq.q_h()[0]);

    let normal = Normal::standard();
    let hw = 0.5 * w.step();
    let mut probs: Vec<f64> = (0..w.n)
        .map(|j| {
            let c = w.value(j);
            let upper = if j + 1 == w.n { 1.0 } else { normal.cdf(c + hw) };
            let lower = if j == 0 { 0.0 } else { normal.cdf(c - hw) };
            (upper - lower).max(0.0)
        })
        .collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);

    let mut transition = Vec::with_capacity(x.n * u.n * w.n);
    let mut stage_cost = Vec::with_capacity(x.n * u.n);
    for i in 0..x.n {
        let xv = x.value(i);
        for k in 0..u.n {
            let uv = u.value(k);
            let base = a * xv + b * uv;
            transition.extend((0..w.n).map(|j| x.nearest(base + d * w.value(j)) as u32));
            stage_cost.push(q * xv * xv + r * uv * uv);
        }
    }
    Ok(FiniteSystem::new(FiniteSystemParts {
        n_states: x.n,
        n_inputs: u.n,
        n_dist: w.n,
        horizon,
        transition,
        stage_cost,
        terminal_cost: (0..x.n).map(|i| q_h * x.value(i).powi(2)).collect(),
        empirical: Empirical::Stationary(EmpiricalTable::shared(probs)),
    })?)
}

/// Per-stage shift of the grid value relative to the continuous one.
///
/// Cell masses are about `density * dw`, so each stage's log-sum-exp picks up
/// `gamma_h log dw` from the likelihood term and loses `gamma_e log dw` from
/// turning the integral into a sum: the grid value exceeds the continuous
/// value by `horizon * (gamma_h - gamma_e) log dw`.
pub fn lattice_offset(pen: &Penalties, w: Grid) -> f64 {
    (pen.gamma_h() - pen.gamma_e()) * w.step().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Horizon;

    fn benchmark() -> LqSystem {
        LqSystem::scalar(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, Horizon::Finite(1)).unwrap()
    }

    #[test]
    fn symmetric_w_grid_gives_symmetric_masses() {
        let sys = discretize_scalar_lq(&benchmark(), Grid::new(-3.0, 3.0, 7), Grid::new(-1.0, 1.0, 3), Grid::new(-4.0, 4.0, 9))
            .unwrap();
        let r = sys.empirical(0, 0, 0);
        for j in 0..9 {
            assert!((r[j] - r[8 - j]).abs() < 1e-15);
        }
    }

    #[test]
    fn saturates_at_edges() {
        let sys = discretize_scalar_lq(&benchmark(), Grid::new(-3.0, 3.0, 7), Grid::new(-1.0, 1.0, 3), Grid::new(-4.0, 4.0, 9))
            .unwrap();
        // x = 3, u = 1, w = 4 overshoots to 8
        assert_eq!(sys.next_state(6, 2, 8), 6);
        assert_eq!(sys.next_state(0, 0, 0), 0);
        // x = 0, u = 0, w = 1 lands on state 1.0
        assert_eq!(sys.next_state(3, 1, 5), 4);
    }

    #[test]
    fn degenerate_grid() {
        let err = discretize_scalar_lq(&benchmark(), Grid::new(-1.0, 1.0, 2), Grid::new(-1.0, 1.0, 3), Grid::new(-1.0, 1.0, 3))
            .unwrap_err();
        assert!(matches!(err, Error::DegenerateGrid { axis: "x", points: 2 }));
    }
}
