//! Per-frequency evolution `f̂(t) = e^{−tB̂}f̂₀`, energy identities, decay
//! envelopes and full-field norm series through the radial reduction.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::besov::{besov_norm, Field, InnerNorm, LPFilterBank, RadialMixedField};
use crate::linalg::{dist, eigen_decompose, expm, matvec, norm2, scale, CMat};
use crate::operators::{
    build_mode_operator, from_coords, to_coords, AxialReduction, KineticOperator, ModeOperator,
};
use crate::rates::fit_exponent;
use crate::velocity::{weighted_norm_sq, Regime, VelocityFunction, VelocityGrid};
use crate::{C64, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvolutionMethod {
    Eigen,
    Pade,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EvolveOptions {
    /// Largest eigenvector condition number accepted by the eigen route.
    pub cond_max: f64,
    /// Forces one route; `None` tries the eigen route first.
    pub method: Option<EvolutionMethod>,
    /// Largest accepted step-doubling estimate (relative to `‖f̂₀‖₂`).
    pub tol: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            cond_max: 1e6,
            method: None,
            tol: 1e-9,
        }
    }
}

/// States in quadrature-orthonormal coordinates.
#[derive(Clone, Debug)]
pub struct Propagation {
    pub states: Vec<Vec<C64>>,
    pub method: EvolutionMethod,
    pub error: f64,
    pub note: Option<String>,
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::Input("at least one time node required".into()));
    }
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::Input("times must be finite and nonnegative".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Input("times must be strictly increasing".into()));
    }
    Ok(())
}

fn propagate_eigen(b: &CMat, y0: &[C64], times: &[f64], cond_max: f64) -> Result<Propagation> {
    let ed = eigen_decompose(b)?;
    if !(ed.condition <= cond_max) {
        return Err(Error::Numerical(format!(
            "eigenvector condition {:.2e} exceeds {cond_max:.1e}",
            ed.condition
        )));
    }
    let c = matvec(&ed.left, y0);
    let apply = |coef: &[C64], t: f64| -> Vec<C64> {
        let d: Vec<C64> = coef.iter().zip(&ed.values).map(|(c, l)| c * (-*l * t).exp()).collect();
        matvec(&ed.right, &d)
    };
    let y0n = norm2(y0).max(f64::MIN_POSITIVE);
    let mut err = 0.0f64;
    let mut states = Vec::with_capacity(times.len());
    for &t in times {
        if t == 0.0 {
            states.push(y0.to_vec());
            continue;
        }
        let full = apply(&c, t);
        let half = apply(&c, 0.5 * t);
        let twice = apply(&matvec(&ed.left, &half), 0.5 * t);
        err = err.max(dist(&full, &twice) / y0n);
        states.push(full);
    }
    Ok(Propagation {
        states,
        method: EvolutionMethod::Eigen,
        error: err,
        note: None,
    })
}

fn propagate_pade(b: &CMat, y0: &[C64], times: &[f64]) -> Result<Propagation> {
    let y0n = norm2(y0).max(f64::MIN_POSITIVE);
    let mut err = 0.0f64;
    let mut states = Vec::with_capacity(times.len());
    let mut y = y0.to_vec();
    let mut last = 0.0;
    for &t in times {
        let dt = t - last;
        if dt > 0.0 {
            let e = expm(&scale(b, C64::new(-dt, 0.0)))?;
            let eh = expm(&scale(b, C64::new(-0.5 * dt, 0.0)))?;
            let full = matvec(&e, &y);
            let twice = matvec(&eh, &matvec(&eh, &y));
            err = err.max(dist(&full, &twice) / y0n);
            y = full;
        }
        last = t;
        states.push(if t == 0.0 { y0.to_vec() } else { y.clone() });
    }
    Ok(Propagation {
        states,
        method: EvolutionMethod::Pade,
        error: err,
        note: None,
    })
}

/// `e^{−tB}y₀` at each of the sorted `times`.
pub fn propagate(b: &CMat, y0: &[C64], times: &[f64], opts: &EvolveOptions) -> Result<Propagation> {
    check_times(times)?;
    if b.nrows() != y0.len() || b.ncols() != y0.len() {
        return Err(Error::Dimension("state does not match operator size".into()));
    }
    let eigen = || propagate_eigen(b, y0, times, opts.cond_max).and_then(|p| accept(p, opts.tol));
    let pade = || propagate_pade(b, y0, times).and_then(|p| accept(p, opts.tol));
    match opts.method {
        Some(EvolutionMethod::Eigen) => eigen(),
        Some(EvolutionMethod::Pade) => pade(),
        None => match eigen() {
            Ok(p) => Ok(p),
            Err(first) => {
                let mut p = pade().map_err(|second| {
                    Error::Numerical(format!("eigen route failed ({first}); Padé route failed ({second})"))
                })?;
                p.note = Some(format!("eigen route rejected: {first}"));
                Ok(p)
            }
        },
    }
}

fn accept(p: Propagation, tol: f64) -> Result<Propagation> {
    if p.error.is_finite() && p.error <= tol {
        Ok(p)
    } else {
        Err(Error::Numerical(format!("step-doubling estimate {:.2e} above {tol:.1e}", p.error)))
    }
}

#[derive(Clone, Debug)]
pub struct ModeTrajectory {
    pub kappa: f64,
    pub omega: Vec<f64>,
    pub times: Vec<f64>,
    pub states: Vec<VelocityFunction>,
    pub method: EvolutionMethod,
    pub error_estimate: f64,
    pub note: Option<String>,
}

impl ModeTrajectory {
    pub fn l2_sq(&self, grid: &VelocityGrid) -> Result<Vec<f64>> {
        self.states.iter().map(|f| weighted_norm_sq(grid, f, 0.0)).collect()
    }

    /// `|w^ℓ f̂(t)|²₂` at every node.
    pub fn weighted_sq(&self, grid: &VelocityGrid, ell: f64) -> Result<Vec<f64>> {
        self.states.iter().map(|f| weighted_norm_sq(grid, f, 2.0 * ell)).collect()
    }

    /// CSV `t,kappa,l2_sq,macro_sq,micro_weighted_sq`.
    pub fn to_csv(&self, l: &KineticOperator) -> Result<String> {
        let grid = l.grid();
        let exponent = l.params().gamma() + 2.0 * l.params().s();
        let mut s = String::from("t,kappa,l2_sq,macro_sq,micro_weighted_sq\n");
        for (t, f) in self.times.iter().zip(&self.states) {
            let y = to_coords(grid, f);
            let macro_sq = norm2(&l.basis().project_coords(&y)).powi(2);
            let micro = from_coords(grid, &l.basis().micro_coords(&y));
            s.push_str(&format!(
                "{t:e},{:e},{:e},{macro_sq:e},{:e}\n",
                self.kappa,
                norm2(&y).powi(2),
                weighted_norm_sq(grid, &micro, exponent)?
            ));
        }
        Ok(s)
    }
}

pub fn evolve_mode(op: &ModeOperator, f0: &VelocityFunction, times: &[f64]) -> Result<ModeTrajectory> {
    evolve_mode_with(op, f0, times, &EvolveOptions::default())
}

pub fn evolve_mode_with(
    op: &ModeOperator,
    f0: &VelocityFunction,
    times: &[f64],
    opts: &EvolveOptions,
) -> Result<ModeTrajectory> {
    let grid = op.grid();
    if f0.len() != grid.len() {
        return Err(Error::Dimension("initial profile does not live on the mode grid".into()));
    }
    let y0 = to_coords(grid, f0);
    let p = propagate(op.matrix(), &y0, times, opts)?;
    let states = p
        .states
        .iter()
        .zip(times)
        .map(|(y, &t)| if t == 0.0 { f0.clone() } else { from_coords(grid, y) })
        .collect();
    Ok(ModeTrajectory {
        kappa: op.kappa(),
        omega: op.omega().to_vec(),
        times: times.to_vec(),
        states,
        method: p.method,
        error_estimate: p.error,
        note: p.note,
    })
}

/// Single-mode evolution along `e_axis` in the axial symmetry class
/// (`f0` must be invariant under the rotations fixing `e_axis`).
pub fn evolve_mode_axial(
    l: &KineticOperator,
    kappa: f64,
    axis: usize,
    f0: &VelocityFunction,
    times: &[f64],
    opts: &EvolveOptions,
) -> Result<ModeTrajectory> {
    let grid = l.grid();
    let red = AxialReduction::new(grid, axis)?;
    let y = to_coords(grid, f0);
    if dist(&y, &red.lift(&red.restrict(&y))) > 1e-10 * norm2(&y).max(f64::MIN_POSITIVE) {
        return Err(Error::Rejected(format!("profile is not invariant under rotations fixing e{}", axis + 1)));
    }
    let b = red.reduced_mode(&red.reduce_kinetic(l)?, kappa);
    let p = propagate(&b, &red.restrict(&y), times, opts)?;
    let states = p
        .states
        .iter()
        .zip(times)
        .map(|(z, &t)| if t == 0.0 { f0.clone() } else { from_coords(grid, &red.lift(z)) })
        .collect();
    Ok(ModeTrajectory {
        kappa,
        omega: crate::operators::axis_direction(grid.n(), axis),
        times: times.to_vec(),
        states,
        method: p.method,
        error_estimate: p.error,
        note: p.note,
    })
}

/// Centred (non-uniform) derivative at every interior node.
fn centred_derivative(t: &[f64], y: &[f64]) -> Vec<f64> {
    (1..t.len() - 1)
        .map(|i| {
            let h1 = t[i] - t[i - 1];
            let h2 = t[i + 1] - t[i];
            -h2 / (h1 * (h1 + h2)) * y[i - 1] + (h2 - h1) / (h1 * h2) * y[i] + h1 / (h2 * (h1 + h2)) * y[i + 1]
        })
        .collect()
}

/// Max over interior nodes of `|d/dt‖f̂‖²₂ + 2 Re⟨Lf̂, f̂⟩|`.
pub fn energy_identity_check(traj: &ModeTrajectory, l: &KineticOperator) -> Result<f64> {
    if traj.times.len() < 3 {
        return Err(Error::Input("energy identity needs ≥ 3 time nodes".into()));
    }
    let grid = l.grid();
    let norms = traj.l2_sq(grid)?;
    let deriv = centred_derivative(&traj.times, &norms);
    let mut worst = 0.0f64;
    for (i, d) in deriv.iter().enumerate() {
        let q = l.quadratic_form(&traj.states[i + 1])?.re;
        worst = worst.max((d + 2.0 * q).abs());
    }
    Ok(worst)
}

/// Residual budget `1e−6·‖f̂₀‖²₂·max|spectrum|` for a step of `1e−3`.
pub fn energy_identity_budget(op: &ModeOperator, f0: &VelocityFunction) -> Result<f64> {
    let grid = op.grid();
    let spec = eigen_decompose(op.matrix())?;
    let top = spec.values.iter().fold(0.0f64, |a, z| a.max(z.norm()));
    Ok(1e-6 * weighted_norm_sq(grid, f0, 0.0)? * top)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Inconclusive,
}

/// Frozen envelope constants.
pub mod constants {
    /// Lower bound on `r(κ)/(1∧κ²)` in the hard regime.
    pub const HARD_RATE: f64 = 0.05;
    /// `C` of the soft algebraic envelope.
    pub const SOFT_ENVELOPE: f64 = 1.0;
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub regime: Regime,
    pub kappa: f64,
    pub ell: f64,
    pub sigma: f64,
    /// Fitted exponential rate of `|w^ℓf̂(t)|²` over the decayed part.
    pub rate: Option<f64>,
    /// `rate / (1∧κ²)`.
    pub normalized_rate: Option<f64>,
    /// Soft: `max_t |w^ℓf̂(t)|² / ((t(1∧κ²)/σ + 1)^{−σ}|w^{ℓ+σ'}f̂₀|²)`.
    pub envelope_ratio: Option<f64>,
    pub bound: f64,
    pub decay_factor: f64,
    pub status: CheckStatus,
}

/// Least-squares slope of `ln y` against `t` (the decay rate is `−slope`).
pub fn exponential_rate(t: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = t.iter().zip(y).filter(|(_, v)| **v > 0.0).map(|(a, b)| (*a, b.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(-sxy / sxx)
}

/// Exponential rate fitted on each window `[T, 2T]`.
pub fn window_rates(traj: &ModeTrajectory, grid: &VelocityGrid, ell: f64, starts: &[f64]) -> Result<Vec<Option<f64>>> {
    let e = traj.weighted_sq(grid, ell)?;
    Ok(starts
        .iter()
        .map(|&t0| {
            let (ts, ys): (Vec<f64>, Vec<f64>) = traj
                .times
                .iter()
                .zip(&e)
                .filter(|(t, _)| **t >= t0 * (1.0 - 1e-12) && **t <= 2.0 * t0 * (1.0 + 1e-12))
                .map(|(a, b)| (*a, *b))
                .unzip();
            exponential_rate(&ts, &ys)
        })
        .collect())
}

/// Decay-envelope verification of a mode trajectory.
pub fn envelope_check(
    traj: &ModeTrajectory,
    l: &KineticOperator,
    ell: f64,
    sigma: f64,
) -> Result<EnvelopeReport> {
    let grid = l.grid();
    let params = l.params();
    let e = traj.weighted_sq(grid, ell)?;
    let e0 = e[0];
    let e_end = *e.last().unwrap();
    let decay_factor = if e_end > 0.0 { e0 / e_end } else { f64::INFINITY };
    let k2 = traj.kappa.powi(2).min(1.0);
    let mut rep = EnvelopeReport {
        regime: params.regime(),
        kappa: traj.kappa,
        ell,
        sigma,
        rate: None,
        normalized_rate: None,
        envelope_ratio: None,
        bound: 0.0,
        decay_factor,
        status: CheckStatus::Inconclusive,
    };
    if !(decay_factor >= 10.0) {
        return Ok(rep);
    }
    match params.regime() {
        Regime::Hard => {
            // fit on the part after the first tenfold drop
            let start = e.iter().position(|&v| v <= e0 / 10.0).unwrap_or(0);
            let rate = exponential_rate(&traj.times[start..], &e[start..]);
            rep.bound = constants::HARD_RATE;
            if let Some(r) = rate {
                rep.rate = Some(r);
                rep.normalized_rate = Some(r / k2);
                rep.status = if r / k2 >= constants::HARD_RATE { CheckStatus::Pass } else { CheckStatus::Fail };
            }
        }
        Regime::Soft => {
            let sigma_p = -sigma * (params.gamma() + 2.0 * params.s());
            let f0w = weighted_norm_sq(grid, &traj.states[0], 2.0 * (ell + sigma_p))?;
            let mut worst = 0.0f64;
            for (t, v) in traj.times.iter().zip(&e) {
                let env = (t * k2 / sigma + 1.0).powf(-sigma) * f0w;
                worst = worst.max(v / env);
            }
            rep.bound = constants::SOFT_ENVELOPE;
            rep.envelope_ratio = Some(worst);
            rep.rate = exponential_rate(&traj.times, &e);
            rep.status = if worst <= constants::SOFT_ENVELOPE { CheckStatus::Pass } else { CheckStatus::Fail };
        }
    }
    Ok(rep)
}

/// Symmetry class of the initial profiles `f̂₀(κ, ·)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileSymmetry {
    /// Invariant under all grid rotations.
    Radial,
    /// Invariant under the rotations fixing `e₁`; the field is
    /// `f̂₀(κω, v) = g(κ, R_ω^{-1}v)` with `R_ω e₁ = ω`.
    Axial,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FieldOptions {
    /// Axis of the propagation direction `ω = e_axis`.
    pub axis: usize,
    pub symmetry: ProfileSymmetry,
    /// Radiality tolerance (relative to the profile's max).
    pub radial_tol: f64,
    pub evolve: EvolveOptions,
}

impl Default for FieldOptions {
    fn default() -> Self {
        Self {
            axis: 0,
            symmetry: ProfileSymmetry::Radial,
            radial_tol: 1e-10,
            evolve: EvolveOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FieldTrajectory {
    pub times: Vec<f64>,
    /// Field at every time node.
    pub states: Vec<RadialMixedField>,
    pub axis: usize,
    pub error_estimate: f64,
    pub methods: Vec<EvolutionMethod>,
    pub kinetic: KineticOperator,
}

/// Evolves every radial node with `ω = e_axis` (reduced to the axial
/// symmetry class).
pub fn evolve_field(f0: &RadialMixedField, l: &KineticOperator, times: &[f64], opts: &FieldOptions) -> Result<FieldTrajectory> {
    check_times(times)?;
    let grid = l.grid().clone();
    let f0 = oriented_profiles(f0, &grid, opts)?;
    let f0 = &f0;
    let red = AxialReduction::new(&grid, opts.axis)?;
    let reduced_l = red.reduce_kinetic(l)?;
    let per_node: Vec<Result<Propagation>> = f0
        .grid
        .kappa
        .par_iter()
        .zip(f0.values.par_iter())
        .map(|(&k, f)| {
            let b = red.reduced_mode(&reduced_l, k);
            let z0 = red.restrict(&to_coords(&grid, f));
            propagate(&b, &z0, times, &opts.evolve)
        })
        .collect();
    let mut props = Vec::with_capacity(per_node.len());
    for p in per_node {
        props.push(p?);
    }
    let error_estimate = props.iter().fold(0.0f64, |a, p| a.max(p.error));
    let methods = props.iter().map(|p| p.method).collect();
    let states = (0..times.len())
        .map(|i| {
            let values = props
                .iter()
                .zip(&f0.values)
                .map(|(p, f)| if times[i] == 0.0 { f.clone() } else { from_coords(&grid, &red.lift(&p.states[i])) })
                .collect();
            RadialMixedField {
                grid: f0.grid.clone(),
                values,
            }
        })
        .collect();
    Ok(FieldTrajectory {
        times: times.to_vec(),
        states,
        axis: opts.axis,
        error_estimate,
        methods,
        kinetic: l.clone(),
    })
}

/// Checks the symmetry class and rotates axial profiles from `e₁` to `e_axis`.
fn oriented_profiles(f0: &RadialMixedField, grid: &VelocityGrid, opts: &FieldOptions) -> Result<RadialMixedField> {
    let n = grid.n();
    if opts.axis >= n {
        return Err(Error::Dimension(format!("axis {} out of range", opts.axis)));
    }
    let reference = match opts.symmetry {
        ProfileSymmetry::Axial => Some(AxialReduction::new(grid, 0)?),
        ProfileSymmetry::Radial => None,
    };
    let mut perm: Vec<usize> = (0..n).collect();
    perm.swap(0, opts.axis);
    let sigma = grid.symmetry_permutation(&perm, &vec![false; n]);
    let mut values = Vec::with_capacity(f0.values.len());
    for (r, f) in f0.values.iter().enumerate() {
        if f.len() != grid.len() {
            return Err(Error::Dimension("profile does not live on the operator grid".into()));
        }
        let ok = match &reference {
            None => grid.is_radial(f, opts.radial_tol),
            Some(red) => {
                let y = to_coords(grid, f);
                let back = red.lift(&red.restrict(&y));
                dist(&y, &back) <= opts.radial_tol * norm2(&y).max(f64::MIN_POSITIVE)
            }
        };
        if !ok {
            return Err(Error::Rejected(format!(
                "initial profile at κ = {:.3e} is not {} in v; the reduction would be unsound",
                f0.grid.kappa[r],
                if reference.is_some() { "axially symmetric about e₁" } else { "radial" }
            )));
        }
        values.push(if opts.axis == 0 {
            f.clone()
        } else {
            VelocityFunction::new(sigma.iter().map(|&k| f.values()[k]).collect())
        });
    }
    Ok(RadialMixedField {
        grid: f0.grid.clone(),
        values,
    })
}

/// Evolves each node with the full (unreduced) mode operator.
pub fn evolve_field_direct(f0: &RadialMixedField, l: &KineticOperator, times: &[f64], opts: &FieldOptions) -> Result<FieldTrajectory> {
    check_times(times)?;
    let grid = l.grid().clone();
    let f0 = &oriented_profiles(f0, &grid, opts)?;
    let omega = crate::operators::axis_direction(grid.n(), opts.axis);
    let mut states: Vec<Vec<VelocityFunction>> = vec![Vec::new(); times.len()];
    let mut error_estimate = 0.0f64;
    let mut methods = Vec::new();
    for (&k, f) in f0.grid.kappa.iter().zip(&f0.values) {
        let op = build_mode_operator(l, k, &omega)?;
        let tr = evolve_mode_with(&op, f, times, &opts.evolve)?;
        error_estimate = error_estimate.max(tr.error_estimate);
        methods.push(tr.method);
        for (i, s) in tr.states.into_iter().enumerate() {
            states[i].push(s);
        }
    }
    Ok(FieldTrajectory {
        times: times.to_vec(),
        states: states
            .into_iter()
            .map(|values| RadialMixedField {
                grid: f0.grid.clone(),
                values,
            })
            .collect(),
        axis: opts.axis,
        error_estimate,
        methods,
        kinetic: l.clone(),
    })
}

impl FieldTrajectory {
    fn grid(&self) -> &Arc<VelocityGrid> {
        self.kinetic.grid()
    }

    fn radial_sum(&self, i: usize, m: f64, g: impl Fn(&VelocityFunction) -> Result<f64>) -> Result<f64> {
        let f = &self.states[i];
        let mut s = 0.0;
        for ((k, w), v) in f.grid.kappa.iter().zip(&f.grid.weights).zip(&f.values) {
            s += k.powf(2.0 * m) * w * g(v)?;
        }
        Ok(s)
    }

    /// `‖Λ^m f(t)‖²_{L²_xL²_v}`.
    pub fn norm_series(&self, m: f64) -> Result<Vec<f64>> {
        let grid = self.grid().clone();
        (0..self.times.len())
            .map(|i| self.radial_sum(i, m, |v| weighted_norm_sq(&grid, v, 0.0)))
            .collect()
    }

    /// `‖Λ^m Pf(t)‖²`.
    pub fn macro_series(&self, m: f64) -> Result<Vec<f64>> {
        let grid = self.grid().clone();
        let basis = self.kinetic.basis().clone();
        (0..self.times.len())
            .map(|i| self.radial_sum(i, m, |v| Ok(norm2(&basis.project_coords(&to_coords(&grid, v))).powi(2))))
            .collect()
    }

    /// `‖Λ^m {I−P}f(t)‖²`.
    pub fn micro_series(&self, m: f64) -> Result<Vec<f64>> {
        let grid = self.grid().clone();
        let basis = self.kinetic.basis().clone();
        (0..self.times.len())
            .map(|i| self.radial_sum(i, m, |v| Ok(norm2(&basis.micro_coords(&to_coords(&grid, v))).powi(2))))
            .collect()
    }

    /// `‖f(t)‖_{Ḃ^{ρ,q}_2 L²_v}` at every node.
    pub fn besov_series(&self, bank: &LPFilterBank, rho: f64, q: f64) -> Result<Vec<f64>> {
        let grid = self.grid().clone();
        self.states
            .iter()
            .map(|f| {
                let fld = Field::Radial {
                    field: f,
                    grid: &grid,
                    inner: InnerNorm::L2,
                };
                Ok(besov_norm(&fld, bank, rho, q, 2.0)?.value)
            })
            .collect()
    }

    /// CSV `t,m,norm_sq` for the given `m` values.
    pub fn norms_csv(&self, ms: &[f64]) -> Result<String> {
        let mut s = String::from("t,m,norm_sq\n");
        let series: Vec<Vec<f64>> = ms.iter().map(|&m| self.norm_series(m)).collect::<Result<_>>()?;
        for (i, t) in self.times.iter().enumerate() {
            for (m, ser) in ms.iter().zip(&series) {
                s.push_str(&format!("{t:e},{m},{:e}\n", ser[i]));
            }
        }
        Ok(s)
    }

    /// Fitted power of `(1+t)` for `‖Λ^m f(t)‖²` over the last `window` fraction.
    pub fn fitted_exponent(&self, m: f64, window: f64) -> Result<crate::rates::ExponentFit> {
        let s = self.norm_series(m)?;
        let series: Vec<(f64, f64)> = self.times.iter().cloned().zip(s).collect();
        fit_exponent(&series, window)
    }
}

/// `ρ` of the energy functional: 1 (hard), `−(γ+2s)` (soft).
pub fn energy_rho(params: &crate::velocity::KernelParams) -> f64 {
    match params.regime() {
        Regime::Hard => 1.0,
        Regime::Soft => -(params.gamma() + 2.0 * params.s()),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnergySeries {
    pub k: usize,
    pub ell: f64,
    pub rho: f64,
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub dissipation: Vec<f64>,
    /// Largest relative increase `(E_{i+1} − E_i)/E_0` between nodes.
    pub max_increase: f64,
    pub monotone: bool,
}

/// All velocity derivatives of order `b ≤ 2` as a tensor list.
fn velocity_derivatives(grid: &VelocityGrid, f: &VelocityFunction, b: usize) -> Result<Vec<VelocityFunction>> {
    let n = grid.n();
    match b {
        0 => Ok(vec![f.clone()]),
        1 => (0..n).map(|i| grid.derivative(f, i, 1)).collect(),
        2 => {
            let mut out = Vec::with_capacity(n * n);
            for i in 0..n {
                let di = grid.derivative(f, i, 1)?;
                for j in 0..n {
                    out.push(if i == j { grid.derivative(f, i, 2)? } else { grid.derivative(&di, j, 1)? });
                }
            }
            Ok(out)
        }
        _ => Err(Error::Unsupported(format!("velocity derivatives of order {b} > 2"))),
    }
}

/// Discrete `E_{K,ℓ}` and the `L²_{γ+2s}` dissipation proxy along a field
/// trajectory; spatial derivatives act as `(2πκ)^{|α|}`, velocity
/// derivatives are summed over the full tensor (rotation invariant).
pub fn energy_dissipation_series(traj: &FieldTrajectory, k: usize, ell: f64) -> Result<EnergySeries> {
    if k > 2 {
        return Err(Error::Unsupported(format!("K = {k}: velocity derivatives beyond order 2 are unsupported")));
    }
    let l = &traj.kinetic;
    let grid = l.grid().clone();
    let basis = l.basis().clone();
    let params = l.params();
    let rho = energy_rho(params);
    let gs = params.gamma() + 2.0 * params.s();
    let mut energy = Vec::with_capacity(traj.times.len());
    let mut dissipation = Vec::with_capacity(traj.times.len());
    for state in &traj.states {
        let mut e = 0.0;
        let mut d = 0.0;
        for ((kap, w), f) in state.grid.kappa.iter().zip(&state.grid.weights).zip(&state.values) {
            let micro = from_coords(&grid, &basis.micro_coords(&to_coords(&grid, f)));
            for b in 0..=k {
                let df = velocity_derivatives(&grid, f, b)?;
                let dm = velocity_derivatives(&grid, &micro, b)?;
                let wexp = 2.0 * (ell - b as f64 * rho);
                let se: f64 = df.iter().map(|g| weighted_norm_sq(&grid, g, wexp)).sum::<Result<f64>>()?;
                let sd: f64 = dm.iter().map(|g| weighted_norm_sq(&grid, g, wexp + gs)).sum::<Result<f64>>()?;
                let full_d = if b == 0 { weighted_norm_sq(&grid, f, 2.0 * ell + gs)? } else { 0.0 };
                for a in 0..=(k - b) {
                    let sp = (2.0 * PI * kap).powi(2 * a as i32) * w;
                    e += sp * se;
                    d += sp * sd;
                    if b == 0 && a >= 1 {
                        d += sp * full_d;
                    }
                }
            }
        }
        energy.push(e);
        dissipation.push(d);
    }
    let e0 = energy[0].max(f64::MIN_POSITIVE);
    let max_increase = energy.windows(2).map(|w| (w[1] - w[0]) / e0).fold(f64::NEG_INFINITY, f64::max);
    let max_increase = if max_increase.is_finite() { max_increase } else { 0.0 };
    Ok(EnergySeries {
        k,
        ell,
        rho,
        times: traj.times.clone(),
        energy,
        dissipation,
        max_increase,
        monotone: max_increase <= 1e-10,
    })
}

/// Microscopic profile axially symmetric about `e₁`: `(I−P)h` for an
/// axially symmetric `h`.
pub fn microscopic_axial(l: &KineticOperator, h: &VelocityFunction) -> Result<VelocityFunction> {
    let grid = l.grid();
    let red = AxialReduction::new(grid, 0)?;
    let y = to_coords(grid, h);
    if dist(&y, &red.lift(&red.restrict(&y))) > 1e-10 * norm2(&y) {
        return Err(Error::Rejected("profile is not axially symmetric about e₁".into()));
    }
    Ok(from_coords(grid, &l.basis().micro_coords(&y)))
}

/// Radial microscopic profile: `h` with its `√μ` and `(|v|²−n)√μ`
/// components removed.
pub fn microscopic_radial(l: &KineticOperator, h: &VelocityFunction) -> Result<VelocityFunction> {
    let grid = l.grid();
    if !grid.is_radial(h, 1e-10) {
        return Err(Error::Rejected("profile is not radial".into()));
    }
    Ok(from_coords(grid, &l.basis().micro_coords(&to_coords(grid, h))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::besov::RadialGrid;
    use crate::operators::{axis_direction, build_model_l};
    use crate::velocity::{build_hermite_grid, KernelParams};
    use proptest::prelude::*;

    fn kinetic(n: usize, p: usize, gamma: f64, s: f64) -> KineticOperator {
        let grid = Arc::new(build_hermite_grid(n, p, 1.0).unwrap());
        let params = KernelParams::infer(n, gamma, s).unwrap();
        build_model_l(&params, &grid).unwrap()
    }

    fn micro_profile(l: &KineticOperator) -> VelocityFunction {
        let g = l.grid();
        let h = g.sample_real(|v| {
            let r2: f64 = v.iter().map(|x| x * x).sum();
            (1.0 + r2 * r2 / 8.0) * (-r2 / 4.0).exp() / (2.0 * PI).powf(g.n() as f64 / 4.0)
        });
        microscopic_radial(l, &h).unwrap()
    }

    #[test]
    fn null_space_conserved() {
        let l = kinetic(2, 8, -1.0, 0.5);
        let op = build_mode_operator(&l, 0.0, &axis_direction(2, 0)).unwrap();
        let f0 = l.grid().sqrt_mu();
        let tr = evolve_mode(&op, &f0, &[0.0, 1.0, 10.0, 100.0]).unwrap();
        assert_eq!(tr.states[0].values(), f0.values());
        for s in &tr.states {
            assert!(s.sub(&f0).max_abs() < 1e-10 * f0.max_abs());
        }
    }

    #[test]
    fn microscopic_pure_exponential() {
        // γ+2s = 0: L = I−P, so e^{−tL} acts as e^{−t} on microscopic data
        let l = kinetic(2, 8, -1.0, 0.5);
        let op = build_mode_operator(&l, 0.0, &axis_direction(2, 0)).unwrap();
        let f0 = micro_profile(&l);
        let times = [0.0, 0.5, 1.0, 3.0];
        for method in [EvolutionMethod::Eigen, EvolutionMethod::Pade] {
            let opts = EvolveOptions { method: Some(method), ..Default::default() };
            let tr = evolve_mode_with(&op, &f0, &times, &opts).unwrap();
            for (t, s) in times.iter().zip(&tr.states) {
                let e = f0.scaled(C64::new((-t).exp(), 0.0));
                assert!(s.sub(&e).max_abs() < 1e-9 * f0.max_abs(), "{method:?} t={t}");
            }
            let g = l.grid();
            let r = energy_identity_check(&evolve_mode_with(&op, &f0, &[1.0, 1.001, 1.002], &opts).unwrap(), &l).unwrap();
            // d/dt‖f‖² = −2‖f‖²
            assert!(r < 1e-6 * weighted_norm_sq(g, &f0, 0.0).unwrap());
        }
    }

    #[test]
    fn semigroup_property_and_dissipation() {
        let l = kinetic(2, 8, 0.5, 0.5);
        let op = build_mode_operator(&l, 0.7, &axis_direction(2, 0)).unwrap();
        let f0 = l.grid().sample_real(|v| (1.0 + v[0] + v[1] * v[1]) * (-(v[0] * v[0] + v[1] * v[1]) / 4.0).exp());
        let tr = evolve_mode(&op, &f0, &[0.0, 0.3, 0.8, 1.1]).unwrap();
        let mid = evolve_mode(&op, &tr.states[1], &[0.8]).unwrap();
        let g = l.grid();
        let a = to_coords(g, &mid.states[0]);
        let b = to_coords(g, &tr.states[3]);
        assert!(dist(&a, &b) <= 1e-9 * norm2(&b));
        let n = tr.l2_sq(g).unwrap();
        assert!(n.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        assert!(matches!(evolve_mode(&op, &f0, &[1.0, 0.5]), Err(Error::Input(_))));
    }

    #[test]
    fn energy_identity_within_budget() {
        let l = kinetic(2, 8, 0.5, 0.5);
        let f0 = l.grid().sample_real(|v| (1.0 + v[0]) * (-(v[0] * v[0] + v[1] * v[1]) / 4.0).exp());
        for kappa in [0.0, 0.1, 0.5] {
            let op = build_mode_operator(&l, kappa, &axis_direction(2, 0)).unwrap();
            let times: Vec<f64> = (0..6).map(|i| 0.5 + 1e-3 * i as f64).collect();
            let tr = evolve_mode(&op, &f0, &times).unwrap();
            let r = energy_identity_check(&tr, &l).unwrap();
            let budget = energy_identity_budget(&op, &f0).unwrap();
            assert!(r <= budget, "κ={kappa}: {r:e} > {budget:e}");
        }
    }

    #[test]
    fn hard_envelope_matches_spectral_gap() {
        let l = kinetic(2, 8, 0.5, 0.5);
        let op = build_mode_operator(&l, 1.0, &axis_direction(2, 0)).unwrap();
        let f0 = micro_profile(&l);
        let times: Vec<f64> = (0..60).map(|i| 0.5 * i as f64).collect();
        let tr = evolve_mode(&op, &f0, &times).unwrap();
        let rep = envelope_check(&tr, &l, 0.0, 4.0).unwrap();
        assert_eq!(rep.status, CheckStatus::Pass);
        let spec = eigen_decompose(op.matrix()).unwrap();
        let gap = spec.values.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
        let r = rep.rate.unwrap();
        assert!((r / (2.0 * gap) - 1.0).abs() < 0.05, "rate {r} vs 2·gap {}", 2.0 * gap);
    }

    #[test]
    fn soft_rate_drifts_hard_rate_stable() {
        for (gamma, soft) in [(-2.0, true), (-0.5, false)] {
            let l = kinetic(3, 8, gamma, 0.5);
            let h = l.grid().sample_real(|v| {
                let r2: f64 = v.iter().map(|x| x * x).sum();
                (1.0 + r2 * r2 / 8.0) * (-r2 / 4.0).exp()
            });
            let mut times = vec![0.0];
            times.extend(crate::rates::geometric_samples(0.1, 100.0, 60));
            let tr = evolve_mode_axial(&l, 1.0, 0, &h, &times, &EvolveOptions::default()).unwrap();
            let w: Vec<f64> = window_rates(&tr, l.grid(), 0.0, &[10.0, 20.0, 40.0]).unwrap().into_iter().map(|r| r.unwrap()).collect();
            let rep = envelope_check(&tr, &l, 0.0, 4.0).unwrap();
            assert_eq!(rep.status, CheckStatus::Pass);
            if soft {
                assert!(w[0] > w[1] && w[1] > w[2], "{w:?}");
            } else {
                let (lo, hi) = w.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
                assert!(hi / lo - 1.0 < 0.1, "{w:?}");
            }
        }
    }

    #[test]
    fn insufficient_decay_is_inconclusive() {
        let l = kinetic(2, 8, 0.5, 0.5);
        let op = build_mode_operator(&l, 0.01, &axis_direction(2, 0)).unwrap();
        let tr = evolve_mode(&op, &l.grid().sqrt_mu(), &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(envelope_check(&tr, &l, 0.0, 4.0).unwrap().status, CheckStatus::Inconclusive);
    }

    fn unit_ball_field(l: &KineticOperator, profile: &VelocityFunction) -> RadialMixedField {
        let n = l.grid().n();
        let rg = RadialGrid::geometric(n, 1e-3, 1.0, 400).unwrap();
        RadialMixedField::separable(rg, |_| 1.0, profile)
    }

    #[test]
    fn field_initial_norm_is_ball_volume() {
        let l = kinetic(3, 6, 0.5, 0.5);
        let f = unit_ball_field(&l, &l.grid().sqrt_mu());
        let tr = evolve_field(&f, &l, &[0.0, 1.0], &FieldOptions::default()).unwrap();
        let n0 = tr.norm_series(0.0).unwrap()[0];
        // ∫_{|ξ|≤1} dξ minus the excluded ball of radius 1e−3
        let vol = 4.0 * PI / 3.0 * (1.0 - 1e-9);
        assert!((n0 - vol).abs() < 2e-3 * vol, "{n0} vs {vol}");
    }

    #[test]
    fn reduced_matches_direct_and_rotation() {
        let l = kinetic(3, 6, 0.5, 0.5);
        let rg = RadialGrid::geometric(3, 0.05, 1.0, 4).unwrap();
        let f = RadialMixedField::separable(rg, |k| k, &micro_profile(&l));
        let times = [0.0, 0.5, 2.0];
        let a = evolve_field(&f, &l, &times, &FieldOptions::default()).unwrap();
        let b = evolve_field_direct(&f, &l, &times, &FieldOptions::default()).unwrap();
        let c = evolve_field(&f, &l, &times, &FieldOptions { axis: 1, ..Default::default() }).unwrap();
        for m in [0.0, 1.0] {
            let (x, y, z) = (a.norm_series(m).unwrap(), b.norm_series(m).unwrap(), c.norm_series(m).unwrap());
            for i in 0..times.len() {
                assert!((x[i] - y[i]).abs() <= 1e-9 * y[i]);
                assert!((x[i] - z[i]).abs() <= 1e-9 * y[i]);
            }
        }
        let mac = a.macro_series(0.0).unwrap();
        assert!(mac[0] < 1e-20 && mac[1] > 1e-8);
    }

    #[test]
    fn non_radial_rejected() {
        let l = kinetic(2, 6, 0.5, 0.5);
        let h = l.grid().sample_real(|v| v[0] * (-(v[0] * v[0] + v[1] * v[1]) / 4.0).exp());
        let rg = RadialGrid::geometric(2, 0.1, 1.0, 3).unwrap();
        let f = RadialMixedField::separable(rg, |_| 1.0, &h);
        assert!(matches!(evolve_field(&f, &l, &[0.0, 1.0], &FieldOptions::default()), Err(Error::Rejected(_))));
    }

    #[test]
    fn stationary_energy_and_rho() {
        let l = kinetic(3, 6, 0.5, 0.5);
        let f = RadialMixedField::separable(RadialGrid::point(3, 0.0), |_| 1.0, &l.grid().sqrt_mu());
        let tr = evolve_field(&f, &l, &[0.0, 1.0, 5.0], &FieldOptions::default()).unwrap();
        let es = energy_dissipation_series(&tr, 2, 1.0).unwrap();
        assert!(es.energy.windows(2).all(|w| (w[1] - w[0]).abs() <= 1e-10 * w[0]));
        assert!(es.dissipation.iter().all(|d| d.abs() < 1e-18));
        assert_eq!(es.rho, 1.0);
        let soft = KernelParams::infer(3, -1.6, 0.4).unwrap();
        assert!((energy_rho(&soft) - 0.8).abs() < 1e-15);
        assert!(matches!(energy_dissipation_series(&tr, 3, 0.0), Err(Error::Unsupported(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn mode_energy_non_increasing(kappa in 0.0f64..2.0, a in -1.0f64..1.0, b in -1.0f64..1.0) {
            let l = kinetic(2, 6, 0.5, 0.5);
            let f0 = l.grid().sample_real(|v| (1.0 + a * v[0] + b * v[1] * v[1]) * (-(v[0] * v[0] + v[1] * v[1]) / 4.0).exp());
            let op = build_mode_operator(&l, kappa, &axis_direction(2, 0)).unwrap();
            let tr = evolve_mode(&op, &f0, &[0.0, 0.2, 0.5, 1.0, 3.0]).unwrap();
            let n = tr.l2_sq(l.grid()).unwrap();
            for w in n.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-10));
            }
        }
    }
}
