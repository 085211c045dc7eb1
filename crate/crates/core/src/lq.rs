//! Minsoftmax on linear dynamics with quadratic cost and a standard
//! Gaussian empirical disturbance.
//!
//! The value stays quadratic, `J_k(x) = x'P_k x + zeta_k`, with
//!
//! ```text
//! M(P)   = gamma_h I - 2 D'PD                       (must be positive definite)
//! F_a(P) = P + 2 PD M(P)^{-1} D'P                   (adversary inflation)
//! F_c(P) = Q + A'PA - A'PB (B'PB + R)^{-1} B'PA      (control contraction)
//! P_k    = F_c(F_a(P_{k+1})),  P_h = Q_h
//! ```
//!
//! The adversary is Gaussian with mean `M^{-1} 2 D'P (A - BG) x` and
//! covariance `gamma_e M^{-1}`; gains do not depend on `gamma_e`.
//! `F_a` carries the factor 2 that completing the square in
//! `-gamma_h/2 |w|^2 + (xi + Dw)'P(xi + Dw)` produces; this is the form
//! for which `gamma^2 = gamma_h / 2` is the H-infinity attenuation level.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};
use crate::model::{max_asymmetry, min_symmetric_eigenvalue, Horizon, LqSystem, Penalties};
use crate::rng::CounterRng;

/// Convergence control for the Riccati iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiccatiConfig {
    /// Spectral-norm change per iteration that counts as converged.
    pub fixed_point_tol: f64,
    pub max_iters: usize,
    /// Margin required for positive definiteness checks.
    pub psd_tol: f64,
}

impl Default for RiccatiConfig {
    fn default() -> Self {
        Self { fixed_point_tol: 1e-10, max_iters: 100_000, psd_tol: 1e-10 }
    }
}

impl RiccatiConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fixed_point_tol > 0.0 && self.psd_tol > 0.0 && self.max_iters > 0) {
            return Err(Error::InvalidArgument(format!("tolerances must be positive: {self:?}")));
        }
        Ok(())
    }
}

const ASYMMETRY_WARN: f64 = 1e-8;

fn symmetrize(x: DMatrix<f64>, what: &str) -> DMatrix<f64> {
    let asym = max_asymmetry(&x);
    if asym > ASYMMETRY_WARN * x.abs().max().max(1.0) {
        log::warn!("{what}: asymmetry {asym:e} before symmetrization");
    }
    (&x + x.transpose()) * 0.5
}

fn spectral_norm_sym(x: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(x.clone()).eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// `gamma_h I - 2 D'PD`.
pub fn adversary_weight(p: &DMatrix<f64>, lq: &LqSystem, gamma_h: f64) -> DMatrix<f64> {
    let d = lq.d();
    DMatrix::identity(d.ncols(), d.ncols()) * gamma_h - (d.transpose() * p * d) * 2.0
}

/// Cholesky of `m` after checking `m - psd_tol I` is positive definite.
fn definite_cholesky(m: &DMatrix<f64>, psd_tol: f64) -> Option<Cholesky<f64, Dyn>> {
    let shifted = m - DMatrix::identity(m.nrows(), m.ncols()) * psd_tol;
    Cholesky::new(shifted)?;
    Cholesky::new(m.clone())
}

struct Inflation {
    fa: DMatrix<f64>,
    m: DMatrix<f64>,
    m_chol: Cholesky<f64, Dyn>,
}

fn inflate(p: &DMatrix<f64>, lq: &LqSystem, gamma_h: f64, psd_tol: f64, stage: Option<usize>) -> Result<Inflation> {
    let m = adversary_weight(p, lq, gamma_h);
    let m_chol = definite_cholesky(&m, psd_tol)
        .ok_or_else(|| Error::MBelowCritical { stage, min_eigenvalue: min_symmetric_eigenvalue(&m) })?;
    let dtp = lq.d().transpose() * p;
    let fa = p + dtp.transpose() * m_chol.solve(&dtp) * 2.0;
    Ok(Inflation { fa: symmetrize(fa, "F_a"), m, m_chol })
}

/// Adversary inflation `F_a(P) = P + 2 PD (gamma_h I - 2 D'PD)^{-1} D'P`.
pub fn f_a(p: &DMatrix<f64>, lq: &LqSystem, gamma_h: f64, psd_tol: f64) -> Result<DMatrix<f64>> {
    Ok(inflate(p, lq, gamma_h, psd_tol, None)?.fa)
}

/// `(R + B'PB)^{-1} B'PA`.
fn riccati_gain(p: &DMatrix<f64>, lq: &LqSystem) -> Result<DMatrix<f64>> {
    let (a, b) = (lq.a(), lq.b());
    let s = lq.r() + b.transpose() * p * b;
    let chol = Cholesky::new(s).ok_or(Error::SingularControlHessian)?;
    Ok(chol.solve(&(b.transpose() * p * a)))
}

/// Control contraction `F_c(P) = Q + A'PA - A'PB (B'PB + R)^{-1} B'PA`.
pub fn f_c(p: &DMatrix<f64>, lq: &LqSystem) -> Result<DMatrix<f64>> {
    let a = lq.a();
    let k = riccati_gain(p, lq)?;
    let out = lq.q() + a.transpose() * p * a - a.transpose() * p * lq.b() * k;
    Ok(symmetrize(out, "F_c"))
}

/// Feedback gain `G(P) = (R + B'F_a(P)B)^{-1} B'F_a(P)A`, applied as `u = -Gx`.
pub fn gain(p: &DMatrix<f64>, lq: &LqSystem, gamma_h: f64, psd_tol: f64) -> Result<DMatrix<f64>> {
    riccati_gain(&f_a(p, lq, gamma_h, psd_tol)?, lq)
}

fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    chol.l_dirty().diagonal().iter().map(|v| 2.0 * v.ln()).sum()
}

/// `zeta_k - zeta_{k+1}`.
fn zeta_increment(m_chol: &Cholesky<f64, Dyn>, pen: &Penalties, n_w: usize) -> f64 {
    let half_nw = n_w as f64 / 2.0;
    let (gh, ge) = (pen.gamma_h(), pen.gamma_e());
    if ge < crate::finite::TEMPERATURE_FLOOR {
        // limit of the gamma_e log(det M / gamma_e^n_w) / 2 term is zero
        -gh * half_nw * (2.0 * PI).ln()
    } else {
        (ge - gh) * half_nw * (2.0 * PI).ln() - ge * (log_det(m_chol) - n_w as f64 * ge.ln()) / 2.0
    }
}

/// Finite-horizon solution; stage-indexed vectors hold the quantities used
/// when acting at stage `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqSolution {
    pub penalties: Penalties,
    /// `P_0 .. P_h`.
    pub p_mats: Vec<DMatrix<f64>>,
    /// `zeta_0 .. zeta_h`.
    pub zetas: Vec<f64>,
    /// `G(P_{k+1})` for `k = 0 .. h-1`; the control is `u_k = -G x_k`.
    pub gains: Vec<DMatrix<f64>>,
    /// `M_{k+1}` for `k = 0 .. h-1`.
    pub m_mats: Vec<DMatrix<f64>>,
    /// `F_a(P_{k+1})` for `k = 0 .. h-1`.
    pub inflated: Vec<DMatrix<f64>>,
    /// `M_{k+1}^{-1} 2 D'P_{k+1} (A - B G_k)`.
    pub adversary_mean_maps: Vec<DMatrix<f64>>,
    /// `gamma_e M_{k+1}^{-1}`.
    pub adversary_covs: Vec<DMatrix<f64>>,
}

impl LqSolution {
    pub fn horizon(&self) -> usize {
        self.gains.len()
    }

    /// `x'P_k x + zeta_k`.
    pub fn value(&self, k: usize, x: &DVector<f64>) -> f64 {
        (x.transpose() * &self.p_mats[k] * x)[0] + self.zetas[k]
    }

    /// Inner adversary value `Q_k(x, u)` with `xi = Ax + Bu`.
    pub fn q_value(&self, lq: &LqSystem, k: usize, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let xi = lq.a() * x + lq.b() * u;
        (xi.transpose() * &self.inflated[k] * &xi)[0] + self.zetas[k]
    }

    pub fn control(&self, k: usize, x: &DVector<f64>) -> DVector<f64> {
        -(&self.gains[k] * x)
    }

    pub fn adversary_mean(&self, k: usize, x: &DVector<f64>) -> DVector<f64> {
        &self.adversary_mean_maps[k] * x
    }
}

/// Backward recursion from `P_h = Q_h, zeta_h = 0`.
pub fn solve_finite_horizon(lq: &LqSystem, pen: &Penalties, cfg: &RiccatiConfig) -> Result<LqSolution> {
    cfg.validate()?;
    let h = lq
        .horizon()
        .finite()
        .ok_or_else(|| Error::InvalidArgument("finite-horizon solve needs a finite horizon".into()))?;
    let (a, b, d) = (lq.a(), lq.b(), lq.d());
    let n_w = lq.n_w();

    let mut p_mats = vec![DMatrix::zeros(0, 0); h + 1];
    let mut zetas = vec![0.0; h + 1];
    p_mats[h] = lq.q_h().clone();
    let mut gains = Vec::with_capacity(h);
    let mut m_mats = Vec::with_capacity(h);
    let mut inflated = Vec::with_capacity(h);
    let mut means = Vec::with_capacity(h);
    let mut covs = Vec::with_capacity(h);

    for k in (0..h).rev() {
        let p_next = &p_mats[k + 1];
        let Inflation { fa, m, m_chol } = inflate(p_next, lq, pen.gamma_h(), cfg.psd_tol, Some(k + 1))?;
        let g = riccati_gain(&fa, lq)?;
        let p_k = f_c(&fa, lq)?;
        let a_g = a - b * &g;
        let mean_map = m_chol.solve(&(d.transpose() * p_next * &a_g)) * 2.0;
        let cov = m_chol.inverse() * pen.gamma_e();
        zetas[k] = zeta_increment(&m_chol, pen, n_w) + zetas[k + 1];
        debug_assert!(min_symmetric_eigenvalue(&p_k) >= -1e-9 * p_k.abs().max().max(1.0));
        p_mats[k] = p_k;
        gains.push(g);
        m_mats.push(m);
        inflated.push(fa);
        means.push(mean_map);
        covs.push(symmetrize(cov, "adversary covariance"));
    }
    gains.reverse();
    m_mats.reverse();
    inflated.reverse();
    means.reverse();
    covs.reverse();

    Ok(LqSolution {
        penalties: *pen,
        p_mats,
        zetas,
        gains,
        m_mats,
        inflated,
        adversary_mean_maps: means,
        adversary_covs: covs,
    })
}

/// Stationary solution of `P = F_c(F_a(P))`.
#[derive(Debug, Clone, PartialEq)]
pub struct InfiniteHorizonSolution {
    pub p_bar: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    pub m_bar: DMatrix<f64>,
    pub adversary_mean_map: DMatrix<f64>,
    pub adversary_cov: DMatrix<f64>,
    pub iterations: usize,
}

/// Iterates `P <- F_c(F_a(P))` from `Q_h` until the spectral-norm change
/// drops below `cfg.fixed_point_tol`.
pub fn solve_infinite_horizon(lq: &LqSystem, pen: &Penalties, cfg: &RiccatiConfig) -> Result<InfiniteHorizonSolution> {
    cfg.validate()?;
    let mut p = lq.q_h().clone();
    let mut last_change = f64::INFINITY;
    for it in 1..=cfg.max_iters {
        let inf = inflate(&p, lq, pen.gamma_h(), cfg.psd_tol, None)?;
        let next = f_c(&inf.fa, lq)?;
        last_change = spectral_norm_sym(&(&next - &p));
        p = next;
        if last_change < cfg.fixed_point_tol {
            let Inflation { fa, m, m_chol } = inflate(&p, lq, pen.gamma_h(), cfg.psd_tol, None)?;
            let g = riccati_gain(&fa, lq)?;
            let a_g = lq.a() - lq.b() * &g;
            let mean_map = m_chol.solve(&(lq.d().transpose() * &p * &a_g)) * 2.0;
            let cov = symmetrize(m_chol.inverse() * pen.gamma_e(), "adversary covariance");
            return Ok(InfiniteHorizonSolution {
                p_bar: p,
                gain: g,
                m_bar: m,
                adversary_mean_map: mean_map,
                adversary_cov: cov,
                iterations: it,
            });
        }
    }
    Err(Error::NoConvergence { iterations: cfg.max_iters, last_change })
}

/// Infimum of feasible likelihood factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalGamma {
    /// Smallest feasible `gamma_h` found (upper end of the final bracket).
    pub gamma_h: f64,
    /// Largest infeasible `gamma_h` probed.
    pub lower: f64,
    /// H-infinity attenuation level `sqrt(gamma_h / 2)`.
    pub attenuation: f64,
}

const GAMMA_H_LIMIT: f64 = 1e12;
const BRACKET_REL: f64 = 1e-8;

fn feasible(lq: &LqSystem, horizon: Horizon, gamma_h: f64, cfg: &RiccatiConfig) -> bool {
    let pen = match Penalties::new(gamma_h, 0.0) {
        Ok(p) => p,
        Err(_) => return false,
    };
    match horizon {
        Horizon::Finite(h) => solve_finite_horizon(&lq.with_horizon(Horizon::Finite(h)), &pen, cfg).is_ok(),
        Horizon::Infinite(_) => solve_infinite_horizon(lq, &pen, cfg).is_ok(),
    }
}

/// Bisection for the smallest `gamma_h` keeping every `M_k` positive definite.
///
/// For an infinite horizon a point counts as feasible when the fixed-point
/// iteration converges within `cfg.max_iters`.
pub fn critical_gamma_h(lq: &LqSystem, horizon: Horizon, cfg: &RiccatiConfig) -> Result<CriticalGamma> {
    cfg.validate()?;
    if lq.d().iter().all(|&v| v == 0.0) {
        return Ok(CriticalGamma { gamma_h: 0.0, lower: 0.0, attenuation: 0.0 });
    }
    let d = lq.d();
    let mut hi = 2.0 * (2.0 * spectral_norm_sym(&(d.transpose() * lq.q_h() * d)) + 1.0);
    while !feasible(lq, horizon, hi, cfg) {
        hi *= 2.0;
        if hi > GAMMA_H_LIMIT {
            return Err(Error::NoFiniteCritical { limit: GAMMA_H_LIMIT });
        }
    }
    let mut lo = 0.0;
    while hi - lo > BRACKET_REL * hi {
        let mid = 0.5 * (lo + hi);
        if feasible(lq, horizon, mid, cfg) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(CriticalGamma { gamma_h: hi, lower: lo, attenuation: (hi / 2.0).sqrt() })
}

/// Certainty-equivalent LQR gains `u_k = L_k x_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrSolution {
    /// `L_0 .. L_{h-1}`, or a single stationary gain.
    pub gains: Vec<DMatrix<f64>>,
    /// `X_0 .. X_h`, or the single DARE solution.
    pub x_mats: Vec<DMatrix<f64>>,
}

/// Standard LQR Riccati recursion `X_k = F_c(X_{k+1})`, `L_k = -(R + B'X_{k+1}B)^{-1} B'X_{k+1}A`.
pub fn lqr_gain(lq: &LqSystem, horizon: Horizon, cfg: &RiccatiConfig) -> Result<LqrSolution> {
    cfg.validate()?;
    match horizon {
        Horizon::Finite(h) => {
            let mut x_mats = vec![lq.q_h().clone()];
            let mut gains = Vec::with_capacity(h);
            for _ in 0..h {
                let x_next = x_mats.last().expect("nonempty");
                gains.push(-riccati_gain(x_next, lq)?);
                let x = f_c(x_next, lq)?;
                x_mats.push(x);
            }
            gains.reverse();
            x_mats.reverse();
            Ok(LqrSolution { gains, x_mats })
        }
        Horizon::Infinite(_) => {
            let mut x = lq.q_h().clone();
            for _ in 0..cfg.max_iters {
                let next = f_c(&x, lq)?;
                let change = spectral_norm_sym(&(&next - &x));
                x = next;
                if change < cfg.fixed_point_tol {
                    let l = -riccati_gain(&x, lq)?;
                    return Ok(LqrSolution { gains: vec![l], x_mats: vec![x] });
                }
            }
            Err(Error::NoConvergence { iterations: cfg.max_iters, last_change: f64::NAN })
        }
    }
}

/// Disturbance probes used by [`certify_attenuation`].
#[derive(Debug, Clone, PartialEq)]
pub struct CertifySpec {
    /// Length of every simulated disturbance sequence.
    pub steps: usize,
    /// Number of random sequences with entries uniform on `[-1, 1]`.
    pub n_random: usize,
    pub seed: u64,
    /// Power iterations for the worst finite-horizon sequence.
    pub power_iterations: usize,
    /// Feedback adversary `w_k = Lambda x_k`, started by a unit impulse.
    pub adversary_mean_map: Option<DMatrix<f64>>,
}

impl Default for CertifySpec {
    fn default() -> Self {
        Self { steps: 400, n_random: 32, seed: 0, power_iterations: 300, adversary_mean_map: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub name: String,
    pub ratio: f64,
}

/// Outcome of the induced-gain check `sum x'Qx / sum w'w <= gamma^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttenuationReport {
    pub gamma_sq: f64,
    pub spectral_radius: f64,
    pub probes: Vec<Probe>,
    pub max_ratio: f64,
    pub pass: bool,
}

/// Slack on the attenuation bound.
pub const ATTENUATION_SLACK: f64 = 1e-6;

fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Closed-loop states `x_1 .. x_N` from `x_0 = 0`.
fn simulate(a_g: &DMatrix<f64>, d: &DMatrix<f64>, w: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut x = DVector::zeros(a_g.nrows());
    w.iter()
        .map(|wk| {
            x = a_g * &x + d * wk;
            x.clone()
        })
        .collect()
}

fn output_energy(q: &DMatrix<f64>, xs: &[DVector<f64>]) -> f64 {
    xs.iter().map(|x| (x.transpose() * q * x)[0]).sum()
}

fn input_energy(w: &[DVector<f64>]) -> f64 {
    w.iter().map(|v| v.norm_squared()).sum()
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else if num.is_finite() {
        num / den
    } else {
        f64::INFINITY
    }
}

/// `sum_{k>=1} x_k'Q x_k / sum_k w_k'w_k` for a given disturbance sequence
/// applied to `x' = (A - BG)x + Dw` from rest; zero disturbance gives zero.
pub fn attenuation_ratio(lq: &LqSystem, gain: &DMatrix<f64>, w: &[DVector<f64>]) -> f64 {
    let a_g = lq.a() - lq.b() * gain;
    ratio(output_energy(lq.q(), &simulate(&a_g, lq.d(), w)), input_energy(w))
}

/// `T'T w` where `T` maps a disturbance sequence to `Q^{1/2} x_{1..N}`.
fn gram_apply(a_g: &DMatrix<f64>, d: &DMatrix<f64>, q: &DMatrix<f64>, w: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let xs = simulate(a_g, d, w);
    let n = xs.len();
    let mut out = vec![DVector::zeros(d.ncols()); n];
    let mut s = DVector::zeros(a_g.nrows());
    for j in (0..n).rev() {
        // s_{j+1} = Q x_{j+1} + A_G' s_{j+2}
        s = q * &xs[j] + a_g.transpose() * &s;
        out[j] = d.transpose() * &s;
    }
    out
}

/// Simulates the closed loop under several disturbance probes and checks the
/// attenuation bound `gamma^2` (plus [`ATTENUATION_SLACK`]).
///
/// Probes: the optional feedback adversary, the worst sequence of length
/// `steps` found by power iteration on `T'T`, and random sequences.
pub fn certify_attenuation(lq: &LqSystem, gain: &DMatrix<f64>, gamma: f64, spec: &CertifySpec) -> Result<AttenuationReport> {
    if gain.nrows() != lq.n_u() || gain.ncols() != lq.n_x() {
        return Err(Error::InvalidArgument(format!(
            "gain must be {}x{}, got {}x{}",
            lq.n_u(),
            lq.n_x(),
            gain.nrows(),
            gain.ncols()
        )));
    }
    if spec.steps == 0 {
        return Err(Error::InvalidArgument("steps must be positive".into()));
    }
    let a_g = lq.a() - lq.b() * gain;
    let rho = spectral_radius(&a_g);
    if rho >= 1.0 {
        return Err(Error::UnstableClosedLoop { spectral_radius: rho });
    }
    let (d, q) = (lq.d(), lq.q());
    let n_w = lq.n_w();
    let mut probes = Vec::new();

    if let Some(lambda) = &spec.adversary_mean_map {
        for i in 0..n_w {
            let mut w = Vec::with_capacity(spec.steps);
            let mut x = DVector::zeros(lq.n_x());
            let mut num = 0.0;
            for k in 0..spec.steps {
                let wk = if k == 0 { DVector::from_fn(n_w, |r, _| if r == i { 1.0 } else { 0.0 }) } else { lambda * &x };
                x = &a_g * &x + d * &wk;
                num += (x.transpose() * q * &x)[0];
                w.push(wk);
            }
            probes.push(Probe { name: format!("feedback adversary, impulse {i}"), ratio: ratio(num, input_energy(&w)) });
        }
    }

    let mut w: Vec<DVector<f64>> = (0..spec.steps)
        .map(|k| DVector::from_fn(n_w, |r, _| 1.0 + 0.1 * ((k * n_w + r) as f64).sin()))
        .collect();
    let mut best = 0.0f64;
    for _ in 0..spec.power_iterations {
        let g = gram_apply(&a_g, d, q, &w);
        let wn = input_energy(&w);
        let rayleigh: f64 = w.iter().zip(&g).map(|(a, b)| a.dot(b)).sum::<f64>() / wn;
        best = best.max(rayleigh);
        let gn = input_energy(&g).sqrt();
        if gn == 0.0 || !gn.is_finite() {
            break;
        }
        w = g.into_iter().map(|v| v / gn).collect();
    }
    best = best.max(attenuation_ratio(lq, gain, &w));
    probes.push(Probe { name: "worst finite-horizon sequence".into(), ratio: best });

    let rng = CounterRng::new(spec.seed);
    for j in 0..spec.n_random {
        let w: Vec<DVector<f64>> = (0..spec.steps)
            .map(|k| DVector::from_fn(n_w, |r, _| 2.0 * rng.uniform_at(j as u64, (k * n_w + r) as u64) - 1.0))
            .collect();
        probes.push(Probe { name: format!("random {j}"), ratio: attenuation_ratio(lq, gain, &w) });
    }

    let max_ratio = probes.iter().map(|p| p.ratio).fold(0.0, f64::max);
    let gamma_sq = gamma * gamma;
    Ok(AttenuationReport { gamma_sq, spectral_radius: rho, probes, max_ratio, pass: max_ratio <= gamma_sq + ATTENUATION_SLACK })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar(h: Horizon) -> LqSystem {
        LqSystem::scalar(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, h).unwrap()
    }

    fn m1(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn cfg() -> RiccatiConfig {
        RiccatiConfig::default()
    }

    #[test]
    fn f_a_scalar() {
        let lq = scalar(Horizon::Finite(1));
        // 1 + 2 * 1 / (4 - 2)
        assert_abs_diff_eq!(f_a(&m1(1.0), &lq, 4.0, 1e-10).unwrap()[0], 2.0, epsilon = 1e-15);
        let big = f_a(&m1(1.0), &lq, 1e12, 1e-10).unwrap()[0];
        assert_abs_diff_eq!(big, 1.0, epsilon = 1e-11);
        let no_channel = lq.with_d(m1(0.0)).unwrap();
        assert_eq!(f_a(&m1(3.0), &no_channel, 1.0, 1e-10).unwrap()[0], 3.0);
    }

    #[test]
    fn f_a_below_critical() {
        let lq = scalar(Horizon::Finite(1));
        match f_a(&m1(1.0), &lq, 1.5, 1e-10) {
            Err(Error::MBelowCritical { min_eigenvalue, .. }) => assert_abs_diff_eq!(min_eigenvalue, -0.5, epsilon = 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn f_c_scalar() {
        let lq = scalar(Horizon::Finite(1));
        assert_abs_diff_eq!(f_c(&m1(1.5), &lq).unwrap()[0], 1.0 + 1.5 - 1.5 * 1.5 / 2.5, epsilon = 1e-15);
        assert_abs_diff_eq!(f_c(&m1(1.5), &lq).unwrap()[0], 1.6, epsilon = 1e-15);
        assert_eq!(f_c(&m1(0.0), &lq).unwrap()[0], 1.0);
        let uncontrolled = LqSystem::scalar(0.5, 0.0, 1.0, 1.0, 1.0, 1.0, Horizon::Finite(1)).unwrap();
        assert_abs_diff_eq!(f_c(&m1(2.0), &uncontrolled).unwrap()[0], 1.0 + 0.25 * 2.0, epsilon = 1e-15);
    }

    #[test]
    fn finite_horizon_scalar_chain() {
        let lq = scalar(Horizon::Finite(1));
        let sol = solve_finite_horizon(&lq, &Penalties::new(4.0, 1.0).unwrap(), &cfg()).unwrap();
        assert_abs_diff_eq!(sol.m_mats[0][0], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sol.inflated[0][0], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sol.p_mats[0][0], 5.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(sol.gains[0][0], 2.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(sol.adversary_covs[0][0], 0.5, epsilon = 1e-15);
        let zeta = -1.5 * (2.0 * PI).ln() - 0.5 * 2f64.ln();
        assert_abs_diff_eq!(sol.zetas[0], zeta, epsilon = 1e-14);
        // mean map 2 * 1 * (1 - 2/3) / 2
        assert_abs_diff_eq!(sol.adversary_mean_maps[0][0], 1.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn zero_temperature_offset_is_limit() {
        let lq = scalar(Horizon::Finite(3));
        let z0 = solve_finite_horizon(&lq, &Penalties::new(6.0, 0.0).unwrap(), &cfg()).unwrap().zetas[0];
        let z_small = solve_finite_horizon(&lq, &Penalties::new(6.0, 1e-9).unwrap(), &cfg()).unwrap().zetas[0];
        assert_abs_diff_eq!(z0, z_small, epsilon = 1e-6);
        assert_abs_diff_eq!(z0, -3.0 * 6.0 * 0.5 * (2.0 * PI).ln(), epsilon = 1e-12);
    }

    #[test]
    fn mbelow_critical_names_stage() {
        let lq = scalar(Horizon::Finite(3));
        let err = solve_finite_horizon(&lq, &Penalties::new(3.0, 1.0).unwrap(), &cfg()).unwrap_err();
        // M_3 = 1 passes, P_2 grows past 1.5 so M_2 fails
        assert!(matches!(err, Error::MBelowCritical { stage: Some(2), .. }), "{err:?}");
    }

    #[test]
    fn lqr_scalar() {
        let lq = scalar(Horizon::Finite(1));
        let sol = lqr_gain(&lq, Horizon::Finite(1), &cfg()).unwrap();
        assert_abs_diff_eq!(sol.gains[0][0], -0.5, epsilon = 1e-15);
        assert_eq!(sol.x_mats[1][0], 1.0);
        let no_terminal = LqSystem::scalar(1.0, 1.0, 1.0, 1.0, 1.0, 0.0, Horizon::Finite(1)).unwrap();
        assert_eq!(lqr_gain(&no_terminal, Horizon::Finite(1), &cfg()).unwrap().gains[0][0], 0.0);
    }

    #[test]
    fn lqr_infinite_solves_dare() {
        let lq = scalar(Horizon::INFINITE);
        let sol = lqr_gain(&lq, Horizon::INFINITE, &cfg()).unwrap();
        let x = &sol.x_mats[0];
        let residual = (f_c(x, &lq).unwrap() - x).abs().max();
        assert!(residual < 1e-10);
        // golden ratio solves X = 1 + X/(1+X)
        assert_abs_diff_eq!(x[0], (1.0 + 5f64.sqrt()) / 2.0, epsilon = 1e-9);
    }

    #[test]
    fn infinite_horizon_fixed_point() {
        let lq = scalar(Horizon::INFINITE);
        let sol = solve_infinite_horizon(&lq, &Penalties::new(8.0, 1.0).unwrap(), &cfg()).unwrap();
        let again = f_c(&f_a(&sol.p_bar, &lq, 8.0, 1e-10).unwrap(), &lq).unwrap();
        assert!((again - &sol.p_bar).abs().max() < 1e-10);
    }

    #[test]
    fn critical_no_channel_is_zero() {
        let lq = LqSystem::scalar(1.0, 1.0, 0.0, 1.0, 1.0, 1.0, Horizon::Finite(2)).unwrap();
        assert_eq!(critical_gamma_h(&lq, Horizon::Finite(2), &cfg()).unwrap().gamma_h, 0.0);
    }

    #[test]
    fn critical_one_stage_is_two() {
        let lq = scalar(Horizon::Finite(1));
        let c = critical_gamma_h(&lq, Horizon::Finite(1), &cfg()).unwrap();
        assert!(c.lower <= 2.0 && 2.0 <= c.gamma_h);
        assert_abs_diff_eq!(c.gamma_h, 2.0, epsilon = 1e-6);
        assert_abs_diff_eq!(c.attenuation, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn critical_infinite_uncontrolled_matches_hinf_norm() {
        // x' = 0.5x + w: squared H-infinity norm 4, so gamma_h* = 8
        let lq = LqSystem::scalar(0.5, 0.0, 1.0, 1.0, 1.0, 1.0, Horizon::INFINITE).unwrap();
        let c = critical_gamma_h(&lq, Horizon::INFINITE, &cfg()).unwrap();
        assert!((c.gamma_h - 8.0).abs() < 1e-3, "{c:?}");
    }

    #[test]
    fn zero_disturbance_ratio_is_zero() {
        let lq = scalar(Horizon::INFINITE);
        let w = vec![DVector::zeros(1); 10];
        assert_eq!(attenuation_ratio(&lq, &m1(0.5), &w), 0.0);
    }

    #[test]
    fn certify_rejects_unstable_loop() {
        let lq = scalar(Horizon::INFINITE);
        let err = certify_attenuation(&lq, &m1(-0.5), 10.0, &CertifySpec::default()).unwrap_err();
        assert!(matches!(err, Error::UnstableClosedLoop { .. }));
    }

    #[test]
    fn power_iteration_reaches_hinf_norm() {
        // x' = 0.5 x + w, z = x: |T|^2 -> 1 / (1 - 0.5)^2 = 4
        let lq = LqSystem::scalar(0.5, 0.0, 1.0, 1.0, 1.0, 1.0, Horizon::INFINITE).unwrap();
        let rep = certify_attenuation(&lq, &m1(0.0), 2.0, &CertifySpec { n_random: 0, ..Default::default() }).unwrap();
        assert!(rep.max_ratio < 4.0 + 1e-9 && rep.max_ratio > 3.95, "{rep:?}");
    }
}
