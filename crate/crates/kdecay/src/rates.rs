//! Decay-rate calculus: the time-convolution estimate, the bootstrap recursion,
//! weight parameters, theoretical rates and empirical exponent fits.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::velocity::{KernelParams, Regime};
use crate::{Error, Result};

/// Equality tolerance for the `max{ρ/2, α} = 1` log case.
pub const LOG_CASE_TOL: f64 = 1e-12;
/// Inputs this close to the log threshold are flagged.
pub const LOG_WARN_TOL: f64 = 1e-6;

/// Bound `∝ (1+t)^{−power} log^{log_power}(2+t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateExpr {
    pub power: f64,
    pub log_power: u32,
}

impl RateExpr {
    pub fn new(power: f64, log_power: u32) -> Self {
        Self { power, log_power }
    }

    pub fn pure(power: f64) -> Self {
        Self::new(power, 0)
    }

    pub fn eval(&self, t: f64) -> f64 {
        (1.0 + t).powf(-self.power) * (2.0 + t).ln().powi(self.log_power as i32)
    }

    /// `Greater` means `self` decays faster.
    pub fn strength_cmp(&self, other: &Self) -> Ordering {
        self.power
            .total_cmp(&other.power)
            .then_with(|| other.log_power.cmp(&self.log_power))
    }

    pub fn dominates(&self, other: &Self) -> bool {
        self.strength_cmp(other) == Ordering::Greater
    }
}

fn near(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Rate of `∫₀ᵗ (1+t−τ)^{−a}(1+τ)^{−α} dτ`:
/// power `min{a+α−1, a, α}`, one log iff `max{a, α} = 1`.
pub fn conv_rate(half_rho: f64, alpha: f64) -> Result<RateExpr> {
    if !(half_rho > 0.0 && alpha > 0.0) || !half_rho.is_finite() || !alpha.is_finite() {
        return Err(Error::Domain(format!(
            "convolution exponents must be positive, got ({half_rho}, {alpha})"
        )));
    }
    let power = (half_rho + alpha - 1.0).min(half_rho).min(alpha);
    let log = near(half_rho.max(alpha), 1.0, LOG_CASE_TOL);
    Ok(RateExpr::new(power, log as u32))
}

/// True when `max{a, α}` is within [`LOG_WARN_TOL`] of 1 without being
/// decided as the log case.
pub fn log_threshold_warning(half_rho: f64, alpha: f64) -> bool {
    let m = half_rho.max(alpha);
    near(m, 1.0, LOG_WARN_TOL) && !near(m, 1.0, LOG_CASE_TOL)
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let (f1, f2) = (f(c - h * XGK[i]), f(c + h * XGK[i]));
        k += WGK[i] * (f1 + f2);
        if i % 2 == 1 {
            g += WG[i / 2] * (f1 + f2);
        }
    }
    (k * h, (k - g).abs() * h)
}

/// Adaptive Gauss–Kronrod (7/15) quadrature to relative tolerance `rtol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, rtol: f64) -> Result<f64> {
    fn rec(f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: f64, rtol: f64, depth: u32) -> Result<f64> {
        let (v, e) = gk15(f, a, b);
        if !v.is_finite() {
            return Err(Error::Numerical("non-finite integrand".into()));
        }
        if e <= rtol * whole.abs().max(v.abs()) || e <= 1e-300 {
            return Ok(v);
        }
        if depth >= 60 {
            return Err(Error::Numerical(format!("quadrature did not converge on [{a}, {b}]")));
        }
        let m = 0.5 * (a + b);
        Ok(rec(f, a, m, whole, rtol, depth + 1)? + rec(f, m, b, whole, rtol, depth + 1)?)
    }
    let (whole, _) = gk15(&f, a, b);
    rec(&f, a, b, whole, rtol, 0)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvRow {
    pub t: f64,
    pub integral: f64,
    pub predicted: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvValidation {
    pub half_rho: f64,
    pub alpha: f64,
    pub rate: RateExpr,
    pub rows: Vec<ConvRow>,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

impl ConvValidation {
    /// `max ratio / min ratio` over the samples.
    pub fn spread(&self) -> f64 {
        self.max_ratio / self.min_ratio
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,integral,predicted,ratio\n");
        for r in &self.rows {
            s.push_str(&format!("{:e},{:e},{:e},{:e}\n", r.t, r.integral, r.predicted, r.ratio));
        }
        s
    }
}

/// Numerically confirms [`conv_rate`] on sample times (≥ 10 samples spanning
/// at least two decades, all ≥ 1).
pub fn conv_rate_validate(half_rho: f64, alpha: f64, t_samples: &[f64]) -> Result<ConvValidation> {
    let rate = conv_rate(half_rho, alpha)?;
    if t_samples.len() < 10 {
        return Err(Error::Input("need at least 10 time samples".into()));
    }
    let (lo, hi) = t_samples
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &t| (a.min(t), b.max(t)));
    if lo < 1.0 || hi / lo < 100.0 * (1.0 - 1e-12) {
        return Err(Error::Input("samples must start at t ≥ 1 and span two decades".into()));
    }
    let mut rows = Vec::with_capacity(t_samples.len());
    for &t in t_samples {
        let f = |tau: f64| (1.0 + t - tau).powf(-half_rho) * (1.0 + tau).powf(-alpha);
        // the integrand concentrates at both ends; split at the midpoint
        let integral = integrate(f, 0.0, 0.5 * t, 1e-11)? + integrate(f, 0.5 * t, t, 1e-11)?;
        let predicted = rate.eval(t);
        rows.push(ConvRow {
            t,
            integral,
            predicted,
            ratio: integral / predicted,
        });
    }
    let min_ratio = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(ConvValidation {
        half_rho,
        alpha,
        rate,
        rows,
        min_ratio,
        max_ratio,
    })
}

/// `n` geometric samples in `[a, b]` including both ends.
pub fn geometric_samples(a: f64, b: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n)
        .map(|k| {
            if k == n - 1 {
                b
            } else {
                a * (b / a).powf(k as f64 / (n - 1) as f64)
            }
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BootstrapStep {
    pub k: usize,
    pub alpha: RateExpr,
    pub beta: RateExpr,
    /// Which term attains `β_k = min{ρ/2+α_k−1, ρ/2, α_k}`.
    pub case: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BootstrapTrace {
    pub rho: f64,
    pub n: usize,
    pub alpha0: f64,
    pub steps: Vec<BootstrapStep>,
    pub alphas: Vec<RateExpr>,
    /// `α̃_{k+1} = 2α̃_k + ρ − 2` from `α̃_0 = α_0`.
    pub auxiliary: Vec<f64>,
    pub terminal: RateExpr,
}

impl BootstrapTrace {
    pub fn step_count(&self) -> usize {
        self.steps.len()
    }
}

/// Upper bound on the number of passes for `ρ ∈ (3/2, 2)` from the
/// auxiliary sequence: `α̃_k ≥ 1` once `2^k ≥ (ρ−1)/(α̃₀−2+ρ)`, plus a
/// final pass.
pub fn bootstrap_step_bound(rho: f64, alpha0: f64) -> usize {
    let gap = alpha0 - 2.0 + rho;
    if alpha0 >= 1.0 || gap <= 0.0 {
        return 2;
    }
    ((rho - 1.0) / gap).log2().ceil().max(0.0) as usize + 1
}

/// Iterates `α_{k+1} = 2β_k` until the terminal optimal rate `ρ` (with no
/// logarithm) is reached.
pub fn bootstrap_alpha(rho: f64, n: usize) -> Result<BootstrapTrace> {
    let nf = n as f64;
    if !(rho > nf / 2.0 && rho <= (nf + 2.0) / 2.0 + 1e-12) {
        return Err(Error::Domain(format!("rho = {rho} outside (n/2, (n+2)/2] for n = {n}")));
    }
    let half = rho / 2.0;
    let alpha0 = if rho >= 2.0 - LOG_CASE_TOL {
        rho - 1.0
    } else if n == 3 {
        3.0 * rho - 4.0
    } else {
        return Err(Error::Unsupported(format!("bootstrap seed for rho = {rho} < 2 needs n = 3")));
    };
    let mut alpha = RateExpr::pure(alpha0);
    let mut alphas = vec![alpha];
    let mut auxiliary = vec![alpha0];
    let mut steps = Vec::new();
    for k in 0..200 {
        if alpha.power >= rho - LOG_CASE_TOL && alpha.log_power == 0 && k > 0 {
            break;
        }
        let conv = conv_rate(half, alpha.power)?;
        let terms = [half + alpha.power - 1.0, half, alpha.power];
        let p = conv.power;
        let attained: Vec<bool> = terms.iter().map(|&x| near(x, p, LOG_CASE_TOL)).collect();
        // the ρ/2 term comes from the linear part and carries no inherited log
        let inherited = if attained[0] || attained[2] { alpha.log_power } else { 0 };
        let beta = RateExpr::new(p, conv.log_power + inherited);
        let case = match (attained[0], attained[1], attained[2]) {
            (_, true, false) if !attained[0] => "rho/2",
            (true, false, _) => "rho/2+alpha-1",
            (false, false, true) => "alpha",
            _ => "tie",
        }
        .to_string();
        steps.push(BootstrapStep { k, alpha, beta, case });
        alpha = RateExpr::new((2.0 * beta.power).min(rho), 2 * beta.log_power);
        alphas.push(alpha);
        auxiliary.push(2.0 * auxiliary[k] + rho - 2.0);
    }
    if !(alpha.power >= rho - LOG_CASE_TOL && alpha.log_power == 0) {
        return Err(Error::Numerical(format!("bootstrap for rho = {rho} did not terminate")));
    }
    Ok(BootstrapTrace {
        rho,
        n,
        alpha0,
        steps,
        alphas,
        auxiliary,
        terminal: RateExpr::pure(rho),
    })
}

/// Weight and regularity parameters attached to `(n, K, γ, s)`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ParamSet {
    pub n: usize,
    pub big_k: u32,
    pub gamma: f64,
    pub s: f64,
    pub regime: Regime,
    pub k_star: u32,
    pub j_tilde: u32,
    pub ell0: f64,
    pub ell0_prime: f64,
    pub ell0_first: f64,
    pub m: f64,
    pub ell0_d: f64,
}

pub fn k_star(n: usize) -> u32 {
    (n / 2 + 1) as u32
}

pub fn j_tilde(n: usize) -> u32 {
    (n.div_ceil(2) - 1) as u32
}

pub fn ell0_d(n: usize) -> f64 {
    let c = n.div_ceil(2) as f64;
    let nf = n as f64;
    if n % 2 == 1 { nf / 2.0 + c - 3.0 } else { nf + 2.0 * c - 7.0 }
}

pub fn weight_params(n: usize, big_k: u32, gamma: f64, s: f64) -> Result<ParamSet> {
    let params = KernelParams::infer(n, gamma, s)?;
    weight_params_for(&params, big_k)
}

pub fn weight_params_for(params: &KernelParams, big_k: u32) -> Result<ParamSet> {
    let n = params.n();
    if n < 3 {
        return Err(Error::Unsupported(format!(
            "weight parameters need n ≥ 3 (M involves 2K/(n−2)); got n = {n}"
        )));
    }
    let ks = k_star(n);
    if big_k < 2 * ks {
        return Err(Error::Constraint(format!(
            "K = {big_k} < 2K*_n = {}: the standing assumption K ≥ 2K*_n fails",
            2 * ks
        )));
    }
    let nf = n as f64;
    let kf = big_k as f64;
    let nu = params.nu_exp();
    let l0d = ell0_d(n);
    let m = (2.0 * kf / (nf - 2.0) - 1.0).max(l0d);
    let (ell0, ell0_prime) = match params.regime() {
        Regime::Hard => ((nu / 2.0 + 1.0).max(2.0).max(2.0 * nu), 0.0),
        Regime::Soft => (-nu / 2.0 * (m + 1.0).max(nf / 2.0 + kf), -nu * m / 2.0),
    };
    Ok(ParamSet {
        n,
        big_k,
        gamma: params.gamma(),
        s: params.s(),
        regime: params.regime(),
        k_star: ks,
        j_tilde: j_tilde(n),
        ell0,
        ell0_prime,
        ell0_first: nu.max(0.0) / 2.0,
        m,
        ell0_d: l0d,
    })
}

/// Which decay statement a [`theoretical_rate`] query refers to.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateQuery {
    pub m: f64,
    pub rho: f64,
    pub microscopic: bool,
    pub regime: Regime,
    pub n: usize,
    /// `Some((k, r, K))` selects the interpolated estimate for
    /// `‖∇^k f‖_{L^r_x L^2_v}`.
    pub interpolated: Option<(u32, f64, u32)>,
}

impl RateQuery {
    pub fn linear(m: f64, rho: f64, microscopic: bool, regime: Regime, n: usize) -> Self {
        Self {
            m,
            rho,
            microscopic,
            regime,
            n,
            interpolated: None,
        }
    }
}

/// Norm decay power predicted by the linear theory.
///
/// general data: `(m+ϱ)/2`; microscopic data (hard only): `(m+ϱ+1)/2`;
/// interpolated `L^r_x` estimate: `(k+ϱ+n/2−n/r)/2` for `k < K−1−n/2+n/r`.
pub fn theoretical_rate(q: &RateQuery) -> Result<RateExpr> {
    let nf = q.n as f64;
    if let Some((k, r, big_k)) = q.interpolated {
        if !(r >= 2.0) {
            return Err(Error::Domain(format!("r = {r} must lie in [2, ∞]")));
        }
        let inv_r = if r.is_infinite() { 0.0 } else { 1.0 / r };
        let bound = big_k as f64 - 1.0 - nf / 2.0 + nf * inv_r;
        if !((k as f64) < bound) {
            return Err(Error::Constraint(format!("k = {k} must be < K−1−n/2+n/r = {bound}")));
        }
        return Ok(RateExpr::pure((k as f64 + q.rho + nf / 2.0 - nf * inv_r) / 2.0));
    }
    if !(q.m + q.rho > 0.0) {
        return Err(Error::Domain("m + rho must be positive".into()));
    }
    if q.microscopic {
        if q.regime != Regime::Hard {
            return Err(Error::Unsupported(
                "the microscopic gain is established for hard potentials only".into(),
            ));
        }
        return Ok(RateExpr::pure((q.m + q.rho + 1.0) / 2.0));
    }
    Ok(RateExpr::pure((q.m + q.rho) / 2.0))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExponentFit {
    pub power: f64,
    pub stderr: f64,
    pub points: usize,
    pub window_start: f64,
    /// Difference between the powers fitted on the two halves of the window.
    pub drift: f64,
    pub drift_flag: bool,
}

pub const DRIFT_TOL: f64 = 0.05;

fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let se = if x.len() > 2 { (rss / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    (slope, se)
}

/// Least-squares decay power of `value ∝ (1+t)^{−power}` over the last
/// `window` fraction of the log-time range.
pub fn fit_exponent(series: &[(f64, f64)], window: f64) -> Result<ExponentFit> {
    if series.iter().any(|&(_, v)| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::Domain("fit_exponent needs strictly positive values".into()));
    }
    if !(window > 0.0 && window <= 1.0) {
        return Err(Error::Input("window fraction must lie in (0, 1]".into()));
    }
    let pos: Vec<(f64, f64)> = series.iter().cloned().filter(|&(t, _)| t > 0.0).collect();
    if pos.is_empty() {
        return Err(Error::Input("no positive times".into()));
    }
    let (lo, hi) = pos
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &(t, _)| (a.min(t.ln()), b.max(t.ln())));
    let start = (hi - window * (hi - lo)).exp() * (1.0 - 1e-12);
    let win: Vec<(f64, f64)> = pos.into_iter().filter(|&(t, _)| t >= start).collect();
    if win.len() < 8 {
        return Err(Error::Input(format!("only {} points in the fit window (need 8)", win.len())));
    }
    let x: Vec<f64> = win.iter().map(|(t, _)| (1.0 + t).ln()).collect();
    let y: Vec<f64> = win.iter().map(|(_, v)| v.ln()).collect();
    let (slope, stderr) = least_squares(&x, &y);
    let h = win.len() / 2;
    let (s1, _) = least_squares(&x[..h + 1], &y[..h + 1]);
    let (s2, _) = least_squares(&x[h..], &y[h..]);
    let drift = (s1 - s2).abs();
    Ok(ExponentFit {
        power: -slope,
        stderr,
        points: win.len(),
        window_start: win[0].0,
        drift,
        drift_flag: drift > DRIFT_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn conv_rate_examples() {
        assert_eq!(conv_rate(2.0, 3.0).unwrap(), RateExpr::new(2.0, 0));
        assert_eq!(conv_rate(1.0, 1.0).unwrap(), RateExpr::new(1.0, 1));
        assert_eq!(conv_rate(0.9, 5.0).unwrap(), RateExpr::new(0.9, 0));
        assert!(matches!(conv_rate(0.0, 1.0), Err(Error::Domain(_))));
        assert!(log_threshold_warning(1.0 + 1e-8, 0.5));
        assert!(!log_threshold_warning(1.0, 0.5));
    }

    #[test]
    fn ordering() {
        let a = RateExpr::new(1.0, 0);
        assert!(a.dominates(&RateExpr::new(1.0, 1)));
        assert!(RateExpr::new(1.1, 3).dominates(&a));
        assert!(!a.dominates(&a));
    }

    #[test]
    fn quadrature_accuracy() {
        let v = integrate(|x: f64| x.sqrt(), 0.0, 1.0, 1e-12).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-11);
        let v = integrate(|x: f64| (-x).exp(), 0.0, 50.0, 1e-12).unwrap();
        assert!((v - (1.0 - (-50.0f64).exp())).abs() < 1e-11);
    }

    #[test]
    fn conv_validation_oracle() {
        // closed form for (1,1): 2 log(1+t)/(2+t)
        let ts = geometric_samples(10.0, 1000.0, 13);
        let rep = conv_rate_validate(1.0, 1.0, &ts).unwrap();
        for r in &rep.rows {
            let exact = 2.0 * (1.0 + r.t).ln() / (2.0 + r.t);
            assert!((r.integral - exact).abs() < 1e-9 * exact);
        }
        for (a, b) in [(2.0, 3.0), (1.0, 1.0), (0.9, 5.0)] {
            let rep = conv_rate_validate(a, b, &ts).unwrap();
            assert!(rep.spread() <= 3.0, "({a},{b}) spread {}", rep.spread());
        }
        assert!(conv_rate_validate(1.0, 1.0, &[10.0, 100.0]).is_err());
    }

    #[test]
    fn bootstrap_examples() {
        let cases = [(1.6, 2usize), (1.8, 1), (2.0, 2), (2.5, 1)];
        for (rho, steps) in cases {
            let tr = bootstrap_alpha(rho, 3).unwrap();
            assert_eq!(tr.step_count(), steps, "rho = {rho}: {tr:?}");
            assert_eq!(tr.terminal, RateExpr::pure(rho));
        }
        let tr = bootstrap_alpha(1.6, 3).unwrap();
        let a: Vec<f64> = tr.alphas.iter().map(|r| r.power).collect();
        assert!((a[0] - 0.8).abs() < 1e-12 && (a[1] - 1.2).abs() < 1e-12 && (a[2] - 1.6).abs() < 1e-12);
        let tr = bootstrap_alpha(2.0, 3).unwrap();
        assert_eq!(tr.steps[0].beta, RateExpr::new(1.0, 1));
        assert_eq!(tr.alphas[1], RateExpr::new(2.0, 2));
        let tr = bootstrap_alpha(2.5, 3).unwrap();
        assert_eq!(tr.steps[0].case, "rho/2");
        assert!(matches!(bootstrap_alpha(1.5, 3), Err(Error::Domain(_))));
        assert!(matches!(bootstrap_alpha(2.6, 3), Err(Error::Domain(_))));
    }

    #[test]
    fn weight_param_examples() {
        let p = weight_params(3, 4, 1.0, 0.25).unwrap();
        assert_eq!((p.k_star, p.j_tilde), (2, 1));
        assert_eq!(p.ell0_d, 0.5);
        assert_eq!((p.ell0, p.ell0_prime, p.ell0_first), (3.0, 0.0, 0.75));
        let p = weight_params(3, 4, -1.5, 0.5).unwrap();
        assert_eq!(p.regime, Regime::Soft);
        assert_eq!((p.m, p.ell0, p.ell0_prime), (7.0, 2.0, 1.75));
        assert!(matches!(weight_params(3, 3, 1.0, 0.25), Err(Error::Constraint(_))));
        assert!(matches!(weight_params(2, 8, 1.0, 0.25), Err(Error::Unsupported(_))));
        assert_eq!(ell0_d(4), 1.0);
    }

    #[test]
    fn theoretical_rate_examples() {
        let r = theoretical_rate(&RateQuery::linear(0.0, 1.5, false, Regime::Hard, 3)).unwrap();
        assert_eq!(r, RateExpr::pure(0.75));
        let r = theoretical_rate(&RateQuery::linear(0.0, 1.0, true, Regime::Hard, 3)).unwrap();
        assert_eq!(r, RateExpr::pure(1.0));
        assert!(matches!(
            theoretical_rate(&RateQuery::linear(0.0, 1.0, true, Regime::Soft, 3)),
            Err(Error::Unsupported(_))
        ));
        let mut q = RateQuery::linear(0.0, 1.5, false, Regime::Hard, 3);
        q.interpolated = Some((0, f64::INFINITY, 4));
        assert_eq!(theoretical_rate(&q).unwrap(), RateExpr::pure(1.5));
        q.interpolated = Some((2, f64::INFINITY, 4));
        assert!(matches!(theoretical_rate(&q), Err(Error::Constraint(_))));
    }

    #[test]
    fn fit_examples() {
        let ts = geometric_samples(0.1, 1000.0, 40);
        let s: Vec<(f64, f64)> = ts.iter().map(|&t| (t, (1.0 + t).powi(-2))).collect();
        let f = fit_exponent(&s, 0.5).unwrap();
        assert!((f.power - 2.0).abs() < 1e-6 && !f.drift_flag);
        let s: Vec<(f64, f64)> = ts.iter().map(|&t| (t, (2.0 + t).ln() / (1.0 + t))).collect();
        let f = fit_exponent(&s, 0.5).unwrap();
        assert!(f.power < 1.0 && f.drift_flag);
        let s: Vec<(f64, f64)> = ts.iter().map(|&t| (t, 3.0)).collect();
        assert!(fit_exponent(&s, 0.5).unwrap().power.abs() < 1e-12);
        let bad = vec![(1.0, 0.0); 10];
        assert!(matches!(fit_exponent(&bad, 0.5), Err(Error::Domain(_))));
    }

    proptest! {
        #[test]
        fn conv_power_symmetric(a in 0.01f64..5.0, b in 0.01f64..5.0) {
            prop_assert_eq!(conv_rate(a, b).unwrap().power, conv_rate(b, a).unwrap().power);
        }

        #[test]
        fn bootstrap_terminates_at_rho(rho in 1.5001f64..2.5) {
            let tr = bootstrap_alpha(rho, 3).unwrap();
            prop_assert!((tr.terminal.power - rho).abs() < 1e-12);
            prop_assert!(tr.step_count() <= bootstrap_step_bound(rho, tr.alpha0) + 2);
        }

        #[test]
        fn soft_weight_dominates_dissipation_shift(nu in -1.49f64..-0.01, k in 4u32..12) {
            let s = 0.5;
            let p = weight_params(3, k, nu - 2.0 * s, s).unwrap();
            prop_assert!(p.ell0 >= 2.0 * (-nu) - 1e-12);
            prop_assert!(p.ell0 >= p.ell0_prime && p.ell0_prime >= 0.0 && p.ell0 >= p.ell0_first);
        }
    }
}
