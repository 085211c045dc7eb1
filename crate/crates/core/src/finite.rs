//! Backward minsoftmax value iteration on finite spaces.
//!
//! At every stage the adversary's regularized maximization is solved in
//! closed form: with `alpha_w = gamma_h log r(w|x,u) + J_{k+1}(f(x,u,w))`
//! the adversary is `softmax(alpha / gamma_e)` and the inner value is
//! `gamma_e * logsumexp(alpha / gamma_e)`, degenerating to `max_w alpha_w`
//! at zero temperature. The controller then minimizes `g(x,u) + Q(u)`.

use rayon::prelude::*;

use crate::error::{Error, Result, Site};
use crate::model::{AdversaryTable, FiniteSystem, Penalties, SolveResult};

/// Temperatures below this are handled by the max branch.
pub const TEMPERATURE_FLOOR: f64 = 1e-12;

/// Per-disturbance exponents `alpha_w`; entries may be `-inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaRow(pub Vec<f64>);

impl AlphaRow {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for AlphaRow {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

#[inline]
fn is_zero_temperature(gamma_e: f64) -> bool {
    gamma_e < TEMPERATURE_FLOOR
}

/// `gamma_h log r`, with `gamma_h = 0` meaning "no likelihood constraint".
#[inline]
fn likelihood_term(gamma_h: f64, r: f64) -> f64 {
    if gamma_h == 0.0 {
        0.0
    } else if r > 0.0 {
        gamma_h * r.ln()
    } else {
        f64::NEG_INFINITY
    }
}

#[inline]
fn fill_alpha(sys: &FiniteSystem, k: usize, x: usize, u: usize, next_values: &[f64], gamma_h: f64, out: &mut [f64]) {
    let r = sys.empirical(k, x, u);
    for ((a, &next), &rw) in out.iter_mut().zip(sys.successors(x, u)).zip(r) {
        *a = likelihood_term(gamma_h, rw) + next_values[next as usize];
    }
}

/// Builds the exponent row for `(k, x, u)` given `J_{k+1}`.
pub fn alpha_row(sys: &FiniteSystem, k: usize, x: usize, u: usize, next_values: &[f64], pen: &Penalties) -> AlphaRow {
    let mut out = vec![0.0; sys.n_dist()];
    fill_alpha(sys, k, x, u, next_values, pen.gamma_h(), &mut out);
    AlphaRow(out)
}

#[inline]
fn max_and_index(alpha: &[f64]) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, &a) in alpha.iter().enumerate() {
        if a > best.0 {
            best = (a, i);
        }
    }
    best
}

#[inline]
fn q_slice(alpha: &[f64], gamma_e: f64) -> Option<f64> {
    let (m, _) = max_and_index(alpha);
    if m == f64::NEG_INFINITY {
        return None;
    }
    if is_zero_temperature(gamma_e) {
        return Some(m);
    }
    let s: f64 = alpha.iter().map(|&a| ((a - m) / gamma_e).exp()).sum();
    Some(m + gamma_e * s.ln())
}

#[inline]
fn softmax_into(alpha: &[f64], gamma_e: f64, out: &mut [f64]) -> Option<()> {
    let (m, _) = max_and_index(alpha);
    if m == f64::NEG_INFINITY {
        return None;
    }
    let mut s = 0.0;
    for (o, &a) in out.iter_mut().zip(alpha) {
        *o = ((a - m) / gamma_e).exp();
        s += *o;
    }
    out.iter_mut().for_each(|o| *o /= s);
    Some(())
}

/// Inner value of the adversary's problem.
pub fn q_value(alpha: &AlphaRow, pen: &Penalties) -> Result<f64> {
    q_slice(&alpha.0, pen.gamma_e()).ok_or(Error::AllAlphasInfinite(None))
}

/// Closed-form adversarial distribution, `p_w ∝ exp(alpha_w / gamma_e)`.
pub fn softmax_adversary(alpha: &AlphaRow, pen: &Penalties) -> Result<Vec<f64>> {
    if is_zero_temperature(pen.gamma_e()) {
        return Err(Error::TemperatureZero);
    }
    let mut out = vec![0.0; alpha.0.len()];
    softmax_into(&alpha.0, pen.gamma_e(), &mut out).ok_or(Error::AllAlphasInfinite(None))?;
    Ok(out)
}

/// Smallest index attaining `max_w alpha_w`.
pub fn worst_case_index(alpha: &AlphaRow) -> Result<usize> {
    let (m, i) = max_and_index(&alpha.0);
    if m == f64::NEG_INFINITY {
        return Err(Error::AllAlphasInfinite(None));
    }
    Ok(i)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SolveOptions {
    /// Also keep the adversary of every input, not only the chosen one.
    pub full_adversary: bool,
}

/// Minsoftmax backward recursion over the whole horizon.
pub fn solve_backward(sys: &FiniteSystem, pen: &Penalties) -> Result<SolveResult> {
    solve_backward_with(sys, pen, &SolveOptions::default())
}

struct StateOutcome {
    value: f64,
    input: u32,
    adversary: Vec<f64>,
    worst: u32,
    full: Vec<f64>,
}

pub fn solve_backward_with(sys: &FiniteSystem, pen: &Penalties, opts: &SolveOptions) -> Result<SolveResult> {
    let (h, ns, nu, nw) = (sys.horizon(), sys.n_states(), sys.n_inputs(), sys.n_dist());
    let gamma_h = pen.gamma_h();
    let gamma_e = pen.gamma_e();
    let zero_temp = is_zero_temperature(gamma_e);

    let mut values = vec![0.0; (h + 1) * ns];
    values[h * ns..].copy_from_slice(sys.terminal_cost());
    let mut policy = vec![0u32; h * ns];
    let mut adv_dist = if zero_temp { Vec::new() } else { vec![0.0; h * ns * nw] };
    let mut adv_worst = if zero_temp { vec![0u32; h * ns] } else { Vec::new() };
    let mut full = opts.full_adversary.then(|| vec![0.0; h * ns * nu * nw]);

    for k in (0..h).rev() {
        let (head, tail) = values.split_at_mut((k + 1) * ns);
        let next_values = &tail[..ns];
        let current = &mut head[k * ns..];

        let outcomes: Vec<Result<StateOutcome>> = (0..ns)
            .into_par_iter()
            .map(|x| {
                let mut alpha = vec![0.0; nw];
                let mut best = (f64::INFINITY, 0usize);
                let mut full_rows = if opts.full_adversary { vec![0.0; nu * nw] } else { Vec::new() };
                for u in 0..nu {
                    fill_alpha(sys, k, x, u, next_values, gamma_h, &mut alpha);
                    let q = q_slice(&alpha, gamma_e)
                        .ok_or(Error::AllAlphasInfinite(Some(Site { stage: k, state: x, input: u })))?;
                    let total = sys.stage_cost(x, u) + q;
                    if total < best.0 {
                        best = (total, u);
                    }
                    if opts.full_adversary {
                        let row = &mut full_rows[u * nw..(u + 1) * nw];
                        if zero_temp {
                            let (_, i) = max_and_index(&alpha);
                            row.iter_mut().enumerate().for_each(|(w, p)| *p = if w == i { 1.0 } else { 0.0 });
                        } else {
                            softmax_into(&alpha, gamma_e, row);
                        }
                    }
                }
                let (value, u) = best;
                fill_alpha(sys, k, x, u, next_values, gamma_h, &mut alpha);
                let (adversary, worst) = if zero_temp {
                    (Vec::new(), max_and_index(&alpha).1 as u32)
                } else {
                    let mut p = vec![0.0; nw];
                    softmax_into(&alpha, gamma_e, &mut p);
                    (p, 0)
                };
                Ok(StateOutcome { value, input: u as u32, adversary, worst, full: full_rows })
            })
            .collect();

        for (x, outcome) in outcomes.into_iter().enumerate() {
            let o = outcome?;
            current[x] = o.value;
            policy[k * ns + x] = o.input;
            if zero_temp {
                adv_worst[k * ns + x] = o.worst;
            } else {
                let i = k * ns + x;
                adv_dist[i * nw..(i + 1) * nw].copy_from_slice(&o.adversary);
            }
            if let Some(full) = full.as_mut() {
                let i = (k * ns + x) * nu;
                full[i * nw..(i + nu) * nw].copy_from_slice(&o.full);
            }
        }
    }

    Ok(SolveResult {
        horizon: h,
        n_states: ns,
        n_inputs: nu,
        n_dist: nw,
        values,
        policy,
        adversary: if zero_temp { AdversaryTable::WorstCase(adv_worst) } else { AdversaryTable::Distribution(adv_dist) },
        full_adversary: full,
    })
}

/// Classical control paradigms recovered at the corners of the penalty plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LimitRegime {
    /// Worst disturbance regardless of likelihood.
    Minimax,
    /// Plan against the most likely disturbance.
    MlCe,
    /// `min_u g + (1/gamma) log E_r exp(gamma J)`.
    RiskSensitive(f64),
    /// Expected cost under the empirical distribution.
    Sdp,
}

/// Direct implementation of a limit regime, independent of the softmax path.
///
/// Intended as a comparator for [`solve_backward`] at extreme penalties.
pub fn solve_limit(sys: &FiniteSystem, regime: LimitRegime) -> Result<SolveResult> {
    if let LimitRegime::RiskSensitive(g) = regime {
        if !(g.is_finite() && g > 0.0) {
            return Err(Error::InvalidArgument(format!("risk sensitivity must be positive, got {g}")));
        }
    }
    let (h, ns, nu, nw) = (sys.horizon(), sys.n_states(), sys.n_inputs(), sys.n_dist());
    let deterministic = matches!(regime, LimitRegime::Minimax | LimitRegime::MlCe);
    let mut values = vec![0.0; (h + 1) * ns];
    values[h * ns..].copy_from_slice(sys.terminal_cost());
    let mut policy = vec![0u32; h * ns];
    let mut worst = vec![0u32; if deterministic { h * ns } else { 0 }];
    let mut dist = vec![0.0; if deterministic { 0 } else { h * ns * nw }];

    // (continuation value, adversary index, adversary distribution)
    let evaluate = |k: usize, x: usize, u: usize, next: &[f64]| -> (f64, usize, Vec<f64>) {
        let succ = sys.successors(x, u);
        let r = sys.empirical(k, x, u);
        let j = |w: usize| next[succ[w] as usize];
        match regime {
            LimitRegime::Minimax => {
                let mut best = (f64::NEG_INFINITY, 0);
                for w in 0..nw {
                    if j(w) > best.0 {
                        best = (j(w), w);
                    }
                }
                (best.0, best.1, Vec::new())
            }
            LimitRegime::MlCe => {
                let mut mode = 0;
                for w in 1..nw {
                    if r[w] > r[mode] {
                        mode = w;
                    }
                }
                (j(mode), mode, Vec::new())
            }
            LimitRegime::Sdp => ((0..nw).map(|w| r[w] * j(w)).sum(), 0, r.to_vec()),
            LimitRegime::RiskSensitive(g) => {
                let shift = (0..nw).filter(|&w| r[w] > 0.0).map(|w| g * j(w)).fold(f64::NEG_INFINITY, f64::max);
                let weights: Vec<f64> =
                    (0..nw).map(|w| if r[w] > 0.0 { r[w] * (g * j(w) - shift).exp() } else { 0.0 }).collect();
                let total: f64 = weights.iter().sum();
                let tilted = weights.iter().map(|v| v / total).collect();
                ((shift + total.ln()) / g, 0, tilted)
            }
        }
    };

    for k in (0..h).rev() {
        let next = values[(k + 1) * ns..(k + 2) * ns].to_vec();
        for x in 0..ns {
            let mut best: Option<(f64, usize, usize, Vec<f64>)> = None;
            for u in 0..nu {
                let (cont, w, p) = evaluate(k, x, u, &next);
                let total = sys.stage_cost(x, u) + cont;
                if best.as_ref().is_none_or(|b| total < b.0) {
                    best = Some((total, u, w, p));
                }
            }
            let (total, u, w, p) = best.expect("n_inputs >= 1");
            values[k * ns + x] = total;
            policy[k * ns + x] = u as u32;
            let i = k * ns + x;
            if deterministic {
                worst[i] = w as u32;
            } else {
                dist[i * nw..(i + 1) * nw].copy_from_slice(&p);
            }
        }
    }

    Ok(SolveResult {
        horizon: h,
        n_states: ns,
        n_inputs: nu,
        n_dist: nw,
        values,
        policy,
        adversary: if deterministic { AdversaryTable::WorstCase(worst) } else { AdversaryTable::Distribution(dist) },
        full_adversary: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Empirical, EmpiricalTable, FiniteSystemParts};
    use approx::assert_abs_diff_eq;

    fn pen(h: f64, e: f64) -> Penalties {
        Penalties::new(h, e).unwrap()
    }

    /// One state, one input, two disturbances leading to terminal costs 0 and 1.
    fn coin() -> FiniteSystem {
        FiniteSystem::new(FiniteSystemParts {
            n_states: 3,
            n_inputs: 1,
            n_dist: 2,
            horizon: 1,
            transition: vec![1, 2, 1, 2, 1, 2],
            stage_cost: vec![0.0; 3],
            terminal_cost: vec![0.0, 0.0, 1.0],
            empirical: Empirical::Stationary(EmpiricalTable::shared(vec![0.5, 0.5])),
        })
        .unwrap()
    }

    #[test]
    fn q_value_logsumexp() {
        // log(1 + e)
        assert_abs_diff_eq!(q_value(&vec![0.0, 1.0].into(), &pen(0.0, 1.0)).unwrap(), 1.313_261_687_518_222_6, epsilon = 1e-15);
        assert_eq!(q_value(&vec![0.0, 1.0].into(), &pen(0.0, 0.0)).unwrap(), 1.0);
        // 5 + 2 log 3
        let q = q_value(&vec![5.0, 5.0, 5.0].into(), &pen(0.0, 2.0)).unwrap();
        assert_abs_diff_eq!(q, 5.0 + 2.0 * 3f64.ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(q, 7.197_224_577_336_219, epsilon = 1e-12);
    }

    #[test]
    fn q_value_ignores_neg_infinity() {
        let q = q_value(&vec![f64::NEG_INFINITY, 2.0].into(), &pen(1.0, 1.0)).unwrap();
        assert_abs_diff_eq!(q, 2.0, epsilon = 1e-15);
        assert!(matches!(
            q_value(&vec![f64::NEG_INFINITY; 2].into(), &pen(1.0, 1.0)),
            Err(Error::AllAlphasInfinite(None))
        ));
    }

    #[test]
    fn q_value_tiny_temperature_takes_max_branch() {
        let q = q_value(&vec![0.0, 1.0].into(), &pen(0.0, 1e-13)).unwrap();
        assert_eq!(q, 1.0);
        // no overflow just above the floor
        let q = q_value(&vec![0.0, 1.0].into(), &pen(0.0, 1e-11)).unwrap();
        assert_abs_diff_eq!(q, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn softmax_two_point() {
        let alpha = AlphaRow(vec![0.5f64.ln(), 0.5f64.ln() + 1.0]);
        let p = softmax_adversary(&alpha, &pen(1.0, 1.0)).unwrap();
        let e = std::f64::consts::E;
        assert_abs_diff_eq!(p[0], 1.0 / (1.0 + e), epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], e / (1.0 + e), epsilon = 1e-15);
        assert_abs_diff_eq!(p[0], 0.268_941, epsilon = 1e-6);
    }

    #[test]
    fn softmax_uniform_and_hot() {
        let p = softmax_adversary(&vec![3.0; 4].into(), &pen(0.0, 1.0)).unwrap();
        p.iter().for_each(|&v| assert_abs_diff_eq!(v, 0.25, epsilon = 1e-15));
        let p = softmax_adversary(&vec![0.0, 0.05, 0.1].into(), &pen(0.0, 100.0)).unwrap();
        p.iter().for_each(|&v| assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-3));
    }

    #[test]
    fn softmax_zero_where_excluded() {
        let p = softmax_adversary(&vec![f64::NEG_INFINITY, 0.0, 1.0].into(), &pen(1.0, 1.0)).unwrap();
        assert_eq!(p[0], 0.0);
        assert!(matches!(softmax_adversary(&vec![0.0].into(), &pen(1.0, 0.0)), Err(Error::TemperatureZero)));
    }

    #[test]
    fn worst_case_ties_low() {
        assert_eq!(worst_case_index(&vec![3.0, 7.0, 7.0].into()).unwrap(), 1);
    }

    #[test]
    fn worst_case_ml_ce_regime() {
        let gh = 1e9;
        let alpha = AlphaRow(vec![gh * 0.9f64.ln(), gh * 0.1f64.ln() + 1e6]);
        assert_eq!(worst_case_index(&alpha).unwrap(), 0);
    }

    #[test]
    fn alpha_row_excludes_impossible_only_with_likelihood() {
        let sys = FiniteSystem::new(FiniteSystemParts {
            n_states: 2,
            n_inputs: 1,
            n_dist: 2,
            horizon: 1,
            transition: vec![0, 1, 0, 1],
            stage_cost: vec![0.0; 2],
            terminal_cost: vec![0.0, 5.0],
            empirical: Empirical::Stationary(EmpiricalTable::shared(vec![1.0, 0.0])),
        })
        .unwrap();
        let next = sys.terminal_cost();
        assert_eq!(alpha_row(&sys, 0, 0, 0, next, &pen(0.0, 0.0)).0, vec![0.0, 5.0]);
        assert_eq!(alpha_row(&sys, 0, 0, 0, next, &pen(2.0, 0.0)).0, vec![0.0, f64::NEG_INFINITY]);
    }

    #[test]
    fn coin_risk_sensitive() {
        let res = solve_backward(&coin(), &pen(1.0, 1.0)).unwrap();
        let expected = (0.5 + 0.5 * std::f64::consts::E).ln();
        assert_abs_diff_eq!(res.value(0, 0), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(res.value(0, 0), 0.620_115, epsilon = 1e-6);
        assert_eq!(res.values_at(1), coin().terminal_cost());
    }

    #[test]
    fn coin_sdp_and_minimax_corners() {
        let res = solve_backward(&coin(), &pen(1e6, 1e6)).unwrap();
        assert_abs_diff_eq!(res.value(0, 0), 0.5, epsilon = 1e-5);
        let res = solve_backward(&coin(), &pen(0.0, 0.0)).unwrap();
        assert_eq!(res.value(0, 0), 1.0);
        assert!(matches!(res.adversary_row(0, 0), crate::model::AdversaryRow::WorstCase(1)));
    }

    #[test]
    fn coin_limits() {
        let sys = coin();
        assert_abs_diff_eq!(solve_limit(&sys, LimitRegime::Sdp).unwrap().value(0, 0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(
            solve_limit(&sys, LimitRegime::RiskSensitive(1.0)).unwrap().value(0, 0),
            0.620_115,
            epsilon = 1e-6
        );
        assert_eq!(solve_limit(&sys, LimitRegime::Minimax).unwrap().value(0, 0), 1.0);
        assert!(solve_limit(&sys, LimitRegime::RiskSensitive(0.0)).is_err());
    }

    #[test]
    fn input_tie_breaks_low() {
        let sys = FiniteSystem::new(FiniteSystemParts {
            n_states: 1,
            n_inputs: 3,
            n_dist: 1,
            horizon: 2,
            transition: vec![0, 0, 0],
            stage_cost: vec![1.0, 0.5, 0.5],
            terminal_cost: vec![0.0],
            empirical: Empirical::Stationary(EmpiricalTable::shared(vec![1.0])),
        })
        .unwrap();
        let res = solve_backward(&sys, &pen(1.0, 1.0)).unwrap();
        assert_eq!(res.policy_at(0), &[1]);
        assert_eq!(res.policy_at(1), &[1]);
        assert_abs_diff_eq!(res.value(0, 0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn full_adversary_matches_chosen_row() {
        let sys = coin();
        let res = solve_backward_with(&sys, &pen(1.0, 1.0), &SolveOptions { full_adversary: true }).unwrap();
        let chosen = match res.adversary_row(0, 0) {
            crate::model::AdversaryRow::Distribution(p) => p.to_vec(),
            _ => unreachable!(),
        };
        assert_eq!(res.full_adversary_row(0, 0, 0).unwrap(), &chosen[..]);
    }
}
