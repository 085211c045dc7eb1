//! Brute-force verifiers for the closed forms.
//!
//! [`simplex_search`] maximizes the adversary's regularized objective by
//! exhaustive enumeration of a simplex grid, and [`gaussian_quadrature_q`]
//! integrates the scalar LQ softmax numerically. Neither shares code with the
//! solvers they check.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{LqSystem, Penalties};

/// Largest distribution length [`simplex_search`] accepts.
pub const MAX_SIMPLEX_DIM: usize = 4;

/// `sum p j + gamma_h sum p log r - gamma_e sum p log p`, with `0 log 0 = 0`.
///
/// Equals `E_p[j] - gamma_h H_c(p, r) + gamma_e H(p)`. When `gamma_h = 0`
/// the cross-entropy term is dropped entirely, so `r` may vanish where `p`
/// does not.
pub fn regularized_objective(p: &[f64], r: &[f64], j: &[f64], pen: &Penalties) -> Result<f64> {
    if p.len() != r.len() || p.len() != j.len() {
        return Err(Error::InvalidArgument(format!("lengths differ: p {}, r {}, j {}", p.len(), r.len(), j.len())));
    }
    let (gh, ge) = (pen.gamma_h(), pen.gamma_e());
    let mut total = 0.0;
    for (index, ((&pw, &rw), &jw)) in p.iter().zip(r).zip(j).enumerate() {
        if pw <= 0.0 {
            continue;
        }
        if gh > 0.0 {
            if rw <= 0.0 {
                return Err(Error::SupportViolation { index });
            }
            total += gh * pw * rw.ln();
        }
        total += pw * jw - ge * pw * pw.ln();
    }
    Ok(total)
}

/// Grid maximizer of [`regularized_objective`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexOptimum {
    pub p: Vec<f64>,
    pub value: f64,
    /// Grid points evaluated, including infeasible ones.
    pub evaluated: u64,
}

fn for_each_composition(parts: usize, total: usize, prefix: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    if parts == 1 {
        prefix.push(total);
        f(prefix);
        prefix.pop();
        return;
    }
    for c in 0..=total {
        prefix.push(c);
        for_each_composition(parts - 1, total - c, prefix, f);
        prefix.pop();
    }
}

/// Exhaustive search over `{p : p_w = c_w * step, sum c_w = n}` with
/// `n = round(1 / step)`, boundary included.
///
/// Points putting mass where `r = 0` (with `gamma_h > 0`) are skipped. Ties
/// go to the first point in lexicographic order of the counts.
pub fn simplex_search(r: &[f64], j: &[f64], pen: &Penalties, grid_step: f64) -> Result<SimplexOptimum> {
    let dim = r.len();
    if dim > MAX_SIMPLEX_DIM {
        return Err(Error::DimensionTooLarge { len: dim, max: MAX_SIMPLEX_DIM });
    }
    if dim == 0 || j.len() != dim {
        return Err(Error::InvalidArgument(format!("need equal nonzero lengths, got r {dim}, j {}", j.len())));
    }
    if !(grid_step > 0.0 && grid_step <= 0.5) {
        return Err(Error::InvalidArgument(format!("grid_step must lie in (0, 0.5], got {grid_step}")));
    }
    let n = (1.0 / grid_step).round() as usize;
    let scale = 1.0 / n as f64;

    let per_head: Vec<(Option<Candidate>, u64)> = (0..=n)
        .into_par_iter()
        .map(|head| {
            let mut best: Option<Candidate> = None;
            let mut count = 0u64;
            let mut p = vec![0.0; dim];
            let mut prefix = vec![head];
            let mut visit = |c: &[usize]| {
                count += 1;
                for (pw, &cw) in p.iter_mut().zip(c) {
                    *pw = cw as f64 * scale;
                }
                if let Ok(v) = regularized_objective(&p, r, j, pen) {
                    if best.as_ref().is_none_or(|(b, _)| v > *b) {
                        best = Some((v, c.to_vec()));
                    }
                }
            };
            if dim == 1 {
                if head == n {
                    visit(&prefix);
                }
            } else {
                for_each_composition(dim - 1, n - head, &mut prefix, &mut visit);
            }
            (best, count)
        })
        .collect();

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut evaluated = 0;
    for (cand, count) in per_head {
        evaluated += count;
        if let Some((v, c)) = cand {
            if best.as_ref().is_none_or(|(b, _)| v > *b) {
                best = Some((v, c));
            }
        }
    }
    let (value, counts) = best.ok_or(Error::AllAlphasInfinite(None))?;
    Ok(SimplexOptimum { p: counts.iter().map(|&c| c as f64 * scale).collect(), value, evaluated })
}

/// Objective value and grid coordinates of a simplex point.
type Candidate = (f64, Vec<usize>);

/// Default window half-width in adversary standard deviations.
pub const QUADRATURE_SIGMAS: f64 = 10.0;

/// `gamma_e log integral exp(alpha(w) / gamma_e) dw` for a scalar disturbance,
/// with `alpha(w) = gamma_h log N(w; 0, 1) + (xi + D w)' P (xi + D w) + zeta`
/// and `xi = A x + B u`.
///
/// The window is centred on the maximizer of `alpha`, located from a
/// parabola through `alpha(-1), alpha(0), alpha(1)`; `half_width` defaults
/// to ten standard deviations of the adversary's Gaussian. Composite
/// trapezoid with `n_points` nodes.
#[allow(clippy::too_many_arguments)]
pub fn gaussian_quadrature_q(
    lq: &LqSystem,
    p_next: &nalgebra::DMatrix<f64>,
    zeta_next: f64,
    x: &DVector<f64>,
    u: &DVector<f64>,
    pen: &Penalties,
    half_width: Option<f64>,
    n_points: usize,
) -> Result<f64> {
    if lq.n_w() != 1 {
        return Err(Error::InvalidArgument(format!("quadrature needs a scalar disturbance, n_w = {}", lq.n_w())));
    }
    let ge = pen.gamma_e();
    if ge <= 0.0 {
        return Err(Error::InvalidArgument("quadrature needs gamma_e > 0".into()));
    }
    if n_points < 2 {
        return Err(Error::InvalidArgument(format!("n_points must be at least 2, got {n_points}")));
    }
    if p_next.nrows() != lq.n_x() || p_next.ncols() != lq.n_x() || x.len() != lq.n_x() || u.len() != lq.n_u() {
        return Err(Error::InvalidArgument("argument dimensions do not match the system".into()));
    }
    let gh = pen.gamma_h();
    let xi = lq.a() * x + lq.b() * u;
    let d = lq.d().column(0).into_owned();
    let log_rho = -0.5 * (2.0 * std::f64::consts::PI).ln();
    let alpha = |w: f64| {
        let s = &xi + &d * w;
        let log_r = log_rho - 0.5 * w * w;
        let lik = if gh == 0.0 { 0.0 } else { gh * log_r };
        lik + (s.transpose() * p_next * &s)[0] + zeta_next
    };

    let (am, a0, ap) = (alpha(-1.0), alpha(0.0), alpha(1.0));
    let curvature = 0.5 * (ap + am) - a0;
    if !(curvature < 0.0) {
        return Err(Error::DivergentIntegrand { curvature });
    }
    let slope = 0.5 * (ap - am);
    let centre = -slope / (2.0 * curvature);
    let sigma = (ge / (-2.0 * curvature)).sqrt();
    let hw = half_width.unwrap_or(QUADRATURE_SIGMAS * sigma);
    if !(hw > 0.0 && hw.is_finite()) {
        return Err(Error::InvalidArgument(format!("half_width must be positive, got {hw}")));
    }

    let step = 2.0 * hw / (n_points - 1) as f64;
    let exps: Vec<f64> = (0..n_points).map(|i| alpha(centre - hw + i as f64 * step) / ge).collect();
    let m = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let last = n_points - 1;
    let sum: f64 = exps
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            let wgt = if i == 0 || i == last { 0.5 } else { 1.0 };
            wgt * (e - m).exp()
        })
        .sum();
    Ok(ge * (m + (sum * step).ln()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Horizon;
    use approx::assert_abs_diff_eq;
    use nalgebra::{dvector, DMatrix};

    fn pen(gh: f64, ge: f64) -> Penalties {
        Penalties::new(gh, ge).unwrap()
    }

    #[test]
    fn objective_hand_values() {
        let r = [0.5, 0.5];
        let j = [0.0, 1.0];
        assert_abs_diff_eq!(regularized_objective(&[1.0, 0.0], &r, &j, &pen(1.0, 0.0)).unwrap(), 0.5f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(
            regularized_objective(&[0.5, 0.5], &r, &j, &pen(0.0, 1.0)).unwrap(),
            0.5 + 2f64.ln(),
            epsilon = 1e-15
        );
        // p = r and gamma_e = gamma_h: the KL term vanishes
        let r3 = [0.2, 0.3, 0.5];
        let j3 = [1.0, -2.0, 4.0];
        let expect: f64 = r3.iter().zip(&j3).map(|(a, b)| a * b).sum();
        assert_abs_diff_eq!(regularized_objective(&r3, &r3, &j3, &pen(2.5, 2.5)).unwrap(), expect, epsilon = 1e-14);
    }

    #[test]
    fn objective_support_violation() {
        let err = regularized_objective(&[0.5, 0.5], &[1.0, 0.0], &[0.0, 0.0], &pen(1.0, 1.0)).unwrap_err();
        assert!(matches!(err, Error::SupportViolation { index: 1 }));
        assert!(regularized_objective(&[0.5, 0.5], &[1.0, 0.0], &[0.0, 0.0], &pen(0.0, 1.0)).is_ok());
    }

    #[test]
    fn simplex_coin() {
        let best = simplex_search(&[0.5, 0.5], &[0.0, 1.0], &pen(1.0, 1.0), 0.001).unwrap();
        assert_abs_diff_eq!(best.value, (1.0 + 1f64.exp()).ln() + 0.5f64.ln(), epsilon = 1e-6);
        assert_abs_diff_eq!(best.value, 0.620115, epsilon = 1e-6);
        assert_abs_diff_eq!(best.p[0], 0.269, epsilon = 1e-9);
        assert_eq!(best.evaluated, 1001);
    }

    #[test]
    fn simplex_linear_and_max_entropy() {
        let best = simplex_search(&[0.2, 0.3, 0.5], &[1.0, 3.0, 2.0], &pen(0.0, 0.0), 0.01).unwrap();
        assert_eq!(best.p, vec![0.0, 1.0, 0.0]);
        let best = simplex_search(&[0.2, 0.8], &[0.0, 0.0], &pen(0.0, 1.0), 0.01).unwrap();
        assert_eq!(best.p, vec![0.5, 0.5]);
        assert_abs_diff_eq!(best.value, 2f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn simplex_rejects_large_dim_and_bad_step() {
        let r = vec![0.2; 5];
        assert!(matches!(
            simplex_search(&r, &r, &pen(1.0, 1.0), 0.1),
            Err(Error::DimensionTooLarge { len: 5, max: 4 })
        ));
        assert!(simplex_search(&[0.5, 0.5], &[0.0, 0.0], &pen(1.0, 1.0), 0.6).is_err());
        assert!(simplex_search(&[0.5, 0.5], &[0.0, 0.0], &pen(1.0, 1.0), 0.0).is_err());
    }

    #[test]
    fn simplex_skips_unsupported_points() {
        let best = simplex_search(&[1.0, 0.0, 0.0], &[0.0, 5.0, 9.0], &pen(1.0, 1.0), 0.1).unwrap();
        assert_eq!(best.p, vec![1.0, 0.0, 0.0]);
    }

    fn benchmark() -> LqSystem {
        LqSystem::scalar(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, Horizon::Finite(1)).unwrap()
    }

    #[test]
    fn quadrature_benchmark() {
        let lq = benchmark();
        let p = DMatrix::from_element(1, 1, 1.0);
        let q = gaussian_quadrature_q(&lq, &p, 0.0, &dvector![1.0], &dvector![0.0], &pen(4.0, 1.0), Some(10.0), 100_000)
            .unwrap();
        // xi = 1, F_a(1) = 2, offset -3/2 log 2pi - 1/2 log 2
        let closed = 2.0 - 1.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * 2f64.ln();
        assert_abs_diff_eq!(q, closed, epsilon = 1e-9);
        let origin =
            gaussian_quadrature_q(&lq, &p, 0.0, &dvector![0.0], &dvector![0.0], &pen(4.0, 1.0), None, 2_000).unwrap();
        assert_abs_diff_eq!(origin, closed - 2.0, epsilon = 1e-9);
    }

    #[test]
    fn quadrature_divergent_below_critical() {
        let lq = benchmark();
        let p = DMatrix::from_element(1, 1, 1.0);
        let err = gaussian_quadrature_q(&lq, &p, 0.0, &dvector![1.0], &dvector![0.0], &pen(2.0, 1.0), None, 100)
            .unwrap_err();
        assert!(matches!(err, Error::DivergentIntegrand { .. }));
    }
}
