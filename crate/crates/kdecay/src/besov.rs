//! Littlewood–Paley filters, homogeneous Besov norms and the inequality
//! suite (Bernstein, embedding, interpolation, heat characterisation).
//!
//! Fourier convention: `f̂(ξ) = ∫ f(x) e^{−2πi x·ξ} dx`, so `∂_x ↦ 2πiξ` and
//! the heat multiplier is `e^{−4π²|ξ|²t}`.
//!
//! The bump is `φ(r) = 1` for `r ≤ 1`, `0` for `r ≥ 2` and `S(2−r)` in
//! between, where `S(x) = h(x)/(h(x)+h(1−x))`, `h(x) = e^{−1/x}` (x > 0).
//! Blocks are `φ_j(ξ) = φ(|ξ|/2^j) − φ(|ξ|/2^{j−1})`.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::velocity::{weighted_norm_sq, VelocityFunction, VelocityGrid};
use crate::{C64, Error, Result};

fn h(x: f64) -> f64 {
    if x > 0.0 { (-1.0 / x).exp() } else { 0.0 }
}

/// Smooth step from 0 (x ≤ 0) to 1 (x ≥ 1).
pub fn smooth_step(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        let a = h(x);
        a / (a + h(1.0 - x))
    }
}

/// Radial bump `φ(r)`.
pub fn bump(r: f64) -> f64 {
    if r <= 1.0 {
        1.0
    } else if r >= 2.0 {
        0.0
    } else {
        smooth_step(2.0 - r)
    }
}

/// Annulus profile `φ(r) − φ(2r)`, supported in `(1/2, 2)`.
pub fn annulus(r: f64) -> f64 {
    bump(r) - bump(2.0 * r)
}

/// Dyadic filter bank `φ_j`, `j_min ≤ j ≤ j_max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LPFilterBank {
    pub j_min: i32,
    pub j_max: i32,
}

impl LPFilterBank {
    pub fn new(j_min: i32, j_max: i32) -> Result<Self> {
        if j_min >= j_max {
            return Err(Error::Input(format!("need j_min < j_max, got {j_min} ≥ {j_max}")));
        }
        Ok(Self { j_min, j_max })
    }

    pub fn indices(&self) -> impl Iterator<Item = i32> + Clone {
        self.j_min..=self.j_max
    }

    pub fn len(&self) -> usize {
        (self.j_max - self.j_min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn phi(&self, j: i32, r: f64) -> f64 {
        annulus(r / 2f64.powi(j))
    }

    /// `Σ_j φ_j(r)` over the bank.
    pub fn partition(&self, r: f64) -> f64 {
        self.indices().map(|j| self.phi(j, r)).sum()
    }

    /// Range on which the bank is an exact partition of unity.
    pub fn exact_range(&self) -> (f64, f64) {
        (2f64.powi(self.j_min + 1), 2f64.powi(self.j_max - 1))
    }
}

/// Builds a bank after checking that the frequency magnitudes `freqs`
/// reach `[2^{j_min}, 2^{j_max}]`.
pub fn build_lp_filters(j_min: i32, j_max: i32, freqs: &[f64]) -> Result<LPFilterBank> {
    let bank = LPFilterBank::new(j_min, j_max)?;
    let lo = freqs.iter().cloned().filter(|&r| r > 0.0).fold(f64::INFINITY, f64::min);
    let hi = freqs.iter().cloned().fold(0.0, f64::max);
    if lo > 2f64.powi(j_min) || hi < 2f64.powi(j_max) {
        return Err(Error::Range(format!(
            "frequency grid [{lo:.3e}, {hi:.3e}] does not cover [2^{j_min}, 2^{j_max}]"
        )));
    }
    Ok(bank)
}

/// Radial frequency nodes with weights of the measure `ω_{n−1} κ^{n−1} dκ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    pub n: usize,
    pub kappa: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Surface area of the unit sphere in `ℝⁿ`.
pub fn sphere_area(n: usize) -> f64 {
    let nf = n as f64;
    2.0 * PI.powf(nf / 2.0) / gamma_fn(nf / 2.0)
}

/// Γ on half-integers and integers ≥ 1/2 (exact recursion).
pub fn gamma_fn(x: f64) -> f64 {
    if (x - x.round()).abs() < 1e-12 {
        (1..x.round() as u64).map(|k| k as f64).product()
    } else if ((x - 0.5) - (x - 0.5).round()).abs() < 1e-12 {
        let mut v = PI.sqrt();
        let mut y = 0.5;
        while y < x - 1e-12 {
            v *= y;
            y += 1.0;
        }
        v
    } else {
        lanczos_gamma(x)
    }
}

fn lanczos_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.5203681218851,
        -1259.1392167224028,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507343278686905,
        -0.13857109526572012,
        9.984_369_578_019_572e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        return PI / ((PI * x).sin() * lanczos_gamma(1.0 - x));
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
}

impl RadialGrid {
    /// Geometric nodes `κ_min·g^r` with trapezoid weights in `log κ`.
    pub fn geometric(n: usize, kappa_min: f64, kappa_max: f64, points: usize) -> Result<Self> {
        if !(kappa_min > 0.0 && kappa_max > kappa_min) || points < 2 {
            return Err(Error::Input("need 0 < kappa_min < kappa_max and ≥ 2 points".into()));
        }
        let dlog = (kappa_max / kappa_min).ln() / (points - 1) as f64;
        let area = sphere_area(n);
        let kappa: Vec<f64> = (0..points).map(|r| kappa_min * (r as f64 * dlog).exp()).collect();
        let weights = kappa
            .iter()
            .enumerate()
            .map(|(r, &k)| {
                let end = if r == 0 || r == points - 1 { 0.5 } else { 1.0 };
                area * k.powi(n as i32 - 1) * k * dlog * end
            })
            .collect();
        Ok(Self { n, kappa, weights })
    }

    /// A single node carrying unit measure (a point mass on the sphere `|ξ| = κ`).
    pub fn point(n: usize, kappa: f64) -> Self {
        Self {
            n,
            kappa: vec![kappa],
            weights: vec![1.0],
        }
    }

    pub fn len(&self) -> usize {
        self.kappa.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kappa.is_empty()
    }

    /// `∫_{ℝⁿ} g(|ξ|) dξ` by the radial quadrature.
    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.kappa.iter().zip(&self.weights).map(|(&k, w)| w * g(k)).sum()
    }
}

/// Frequency-side field: one velocity profile per radial node.
#[derive(Clone, Debug)]
pub struct RadialMixedField {
    pub grid: RadialGrid,
    pub values: Vec<VelocityFunction>,
}

impl RadialMixedField {
    pub fn new(grid: RadialGrid, values: Vec<VelocityFunction>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::Dimension("one velocity profile per radial node required".into()));
        }
        Ok(Self { grid, values })
    }

    /// `F(κ)·h(v)`.
    pub fn separable(grid: RadialGrid, profile: impl Fn(f64) -> f64, h: &VelocityFunction) -> Self {
        let values = grid.kappa.iter().map(|&k| h.scaled(C64::new(profile(k), 0.0))).collect();
        Self { grid, values }
    }

    /// Multiplies every node by `m(κ)`.
    pub fn multiply(&self, m: impl Fn(f64) -> f64) -> Self {
        let values = self
            .grid
            .kappa
            .iter()
            .zip(&self.values)
            .map(|(&k, f)| f.scaled(C64::new(m(k), 0.0)))
            .collect();
        Self {
            grid: self.grid.clone(),
            values,
        }
    }
}

/// Inner (velocity) norm of a mixed field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerNorm {
    /// `L²_v`.
    L2,
    /// `L²_ℓ`: `∫ ⟨v⟩^ℓ |f|²`.
    Weighted(f64),
}

impl InnerNorm {
    fn exponent(&self) -> f64 {
        match self {
            InnerNorm::L2 => 0.0,
            InnerNorm::Weighted(l) => *l,
        }
    }
}

/// Scalar function on the periodic box `[−L/2, L/2)ⁿ`, `L = 2π·2^{−j_min}`.
#[derive(Clone, Debug)]
pub struct ScalarField {
    n: usize,
    points: usize,
    j_min: i32,
    values: Vec<C64>,
    spectrum: Vec<C64>,
}

fn fft_nd(data: &mut [C64], n: usize, points: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse {
        planner.plan_fft_inverse(points)
    } else {
        planner.plan_fft_forward(points)
    };
    let mut line = vec![C64::new(0.0, 0.0); points];
    for axis in 0..n {
        let stride = points.pow(axis as u32);
        for base in 0..data.len() {
            if (base / stride) % points != 0 {
                continue;
            }
            for (i, l) in line.iter_mut().enumerate() {
                *l = data[base + i * stride];
            }
            fft.process(&mut line);
            for (i, l) in line.iter().enumerate() {
                data[base + i * stride] = *l;
            }
        }
    }
}

impl ScalarField {
    pub fn new(n: usize, points: usize, j_min: i32, values: Vec<C64>) -> Result<Self> {
        if !(1..=3).contains(&n) || points < 4 {
            return Err(Error::Input("scalar fields need 1 ≤ n ≤ 3 and ≥ 4 points per axis".into()));
        }
        if values.len() != points.pow(n as u32) {
            return Err(Error::Dimension("value count does not match the periodic grid".into()));
        }
        let mut spectrum = values.clone();
        fft_nd(&mut spectrum, n, points, false);
        let cell = (2.0 * PI * 2f64.powi(-j_min) / points as f64).powi(n as i32);
        for s in spectrum.iter_mut() {
            *s *= cell;
        }
        Ok(Self {
            n,
            points,
            j_min,
            values,
            spectrum,
        })
    }

    /// Samples `f` at the box nodes `x_i = −L/2 + i L/N`.
    pub fn from_fn(n: usize, points: usize, j_min: i32, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let l = 2.0 * PI * 2f64.powi(-j_min);
        let total = points.pow(n as u32);
        let values = (0..total)
            .map(|k| {
                let mut rem = k;
                let x: Vec<f64> = (0..n)
                    .map(|_| {
                        let i = rem % points;
                        rem /= points;
                        -0.5 * l + i as f64 * l / points as f64
                    })
                    .collect();
                C64::new(f(&x), 0.0)
            })
            .collect();
        Self::new(n, points, j_min, values)
    }

    pub fn from_spectrum(n: usize, points: usize, j_min: i32, spectrum: Vec<C64>) -> Result<Self> {
        if spectrum.len() != points.pow(n as u32) {
            return Err(Error::Dimension("spectrum size does not match the periodic grid".into()));
        }
        let mut values = spectrum.clone();
        fft_nd(&mut values, n, points, true);
        let length = 2.0 * PI * 2f64.powi(-j_min);
        let scale = 1.0 / length.powi(n as i32);
        for v in values.iter_mut() {
            *v *= scale;
        }
        Ok(Self {
            n,
            points,
            j_min,
            values,
            spectrum,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn points(&self) -> usize {
        self.points
    }
    pub fn j_min(&self) -> i32 {
        self.j_min
    }
    pub fn values(&self) -> &[C64] {
        &self.values
    }
    pub fn spectrum(&self) -> &[C64] {
        &self.spectrum
    }
    pub fn length(&self) -> f64 {
        2.0 * PI * 2f64.powi(-self.j_min)
    }
    fn cell(&self) -> f64 {
        (self.length() / self.points as f64).powi(self.n as i32)
    }

    /// `|ξ|` for every spectral index.
    pub fn frequency_magnitudes(&self) -> Vec<f64> {
        let p = self.points;
        let l = self.length();
        (0..self.spectrum.len())
            .map(|k| {
                let mut rem = k;
                let mut s = 0.0;
                for _ in 0..self.n {
                    let i = rem % p;
                    rem /= p;
                    let m = if i <= p / 2 { i as f64 } else { i as f64 - p as f64 };
                    s += m * m;
                }
                s.sqrt() / l
            })
            .collect()
    }

    /// Largest frequency reached along every axis, `N/(2L)`.
    pub fn axis_nyquist(&self) -> f64 {
        self.points as f64 / (2.0 * self.length())
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return self.values.iter().fold(0.0, |a, z| a.max(z.norm()));
        }
        let top = self.values.iter().fold(0.0f64, |a, z| a.max(z.norm()));
        if top == 0.0 {
            return 0.0;
        }
        let s: f64 = self.values.iter().map(|z| (z.norm() / top).powf(p)).sum();
        top * (s * self.cell()).powf(1.0 / p)
    }

    /// `(∫|f̂|² dξ)^{1/2}` over the discrete frequency lattice.
    pub fn spectral_l2(&self) -> f64 {
        let dxi = self.length().powi(-(self.n as i32));
        (self.spectrum.iter().map(|z| z.norm_sqr()).sum::<f64>() * dxi).sqrt()
    }

    pub fn apply_multiplier(&self, m: impl Fn(f64) -> f64) -> Self {
        let mags = self.frequency_magnitudes();
        let spec = self.spectrum.iter().zip(&mags).map(|(s, &r)| *s * m(r)).collect();
        Self::from_spectrum(self.n, self.points, self.j_min, spec).expect("sizes are consistent")
    }

    /// `f(2x)` on the half-size box: same samples, `j_min + 1`.
    pub fn dilate(&self) -> Self {
        Self::new(self.n, self.points, self.j_min + 1, self.values.clone()).expect("sizes are consistent")
    }
}

/// A field whose Besov norms can be evaluated.
#[derive(Clone, Copy, Debug)]
pub enum Field<'a> {
    Radial {
        field: &'a RadialMixedField,
        grid: &'a VelocityGrid,
        inner: InnerNorm,
    },
    Scalar(&'a ScalarField),
}

/// Block norms and leakage of a field over a bank.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlockNorms {
    pub j: Vec<i32>,
    pub norms: Vec<f64>,
    /// Fraction of L² mass at frequencies where the bank is not a partition of unity.
    pub leakage: f64,
}

fn radial_inner_sq(field: &RadialMixedField, grid: &VelocityGrid, inner: InnerNorm) -> Result<Vec<f64>> {
    field
        .values
        .iter()
        .map(|f| weighted_norm_sq(grid, f, inner.exponent()))
        .collect()
}

/// `‖Δ_j f‖_{L^p_x X_v}` for every block of the bank.
pub fn block_norms(field: &Field, bank: &LPFilterBank, p: f64) -> Result<BlockNorms> {
    if !(p >= 1.0) {
        return Err(Error::Input(format!("Lebesgue exponent p = {p} must be ≥ 1")));
    }
    let js: Vec<i32> = bank.indices().collect();
    match field {
        Field::Radial { field, grid, inner } => {
            if p != 2.0 {
                return Err(Error::Unsupported(format!(
                    "radial fields support p = 2 only (requested p = {p})"
                )));
            }
            let sq = radial_inner_sq(field, grid, *inner)?;
            let k = &field.grid.kappa;
            let w = &field.grid.weights;
            let norms = js
                .iter()
                .map(|&j| {
                    (0..k.len())
                        .map(|r| bank.phi(j, k[r]).powi(2) * sq[r] * w[r])
                        .sum::<f64>()
                        .sqrt()
                })
                .collect();
            let total: f64 = (0..k.len()).map(|r| sq[r] * w[r]).sum();
            let leak: f64 = (0..k.len())
                .map(|r| (1.0 - bank.partition(k[r])).abs() * sq[r] * w[r])
                .sum();
            Ok(BlockNorms {
                j: js,
                norms,
                leakage: if total > 0.0 { leak / total } else { 0.0 },
            })
        }
        Field::Scalar(f) => {
            let mags = f.frequency_magnitudes();
            let norms = js
                .par_iter()
                .map(|&j| f.apply_multiplier(|r| bank.phi(j, r)).lp_norm(p))
                .collect();
            // the zero mode is invisible to homogeneous norms
            let total: f64 = f.spectrum.iter().skip(1).map(|z| z.norm_sqr()).sum();
            let leak: f64 = f
                .spectrum
                .iter()
                .zip(&mags)
                .skip(1)
                .map(|(z, &r)| (1.0 - bank.partition(r)).abs() * z.norm_sqr())
                .sum();
            Ok(BlockNorms {
                j: js,
                norms,
                leakage: if total > 0.0 { leak / total } else { 0.0 },
            })
        }
    }
}

/// `‖(x_j)‖_{ℓ^q}` with `q = ∞` allowed.
pub fn lq_norm(x: &[f64], q: f64) -> f64 {
    let top = x.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if q.is_infinite() || top == 0.0 {
        return top;
    }
    top * x.iter().map(|v| (v.abs() / top).powf(q)).sum::<f64>().powf(1.0 / q)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BesovNorm {
    pub value: f64,
    pub blocks: BlockNorms,
}

/// `‖(2^{ρj}‖Δ_j f‖_{L^p_x X_v})_j‖_{ℓ^q}` over the bank.
pub fn besov_norm(field: &Field, bank: &LPFilterBank, rho: f64, q: f64, p: f64) -> Result<BesovNorm> {
    if !(q >= 1.0) {
        return Err(Error::Input(format!("sequence exponent q = {q} must be ≥ 1")));
    }
    let blocks = block_norms(field, bank, p)?;
    Ok(BesovNorm {
        value: besov_from_blocks(&blocks, rho, q),
        blocks,
    })
}

pub fn besov_from_blocks(blocks: &BlockNorms, rho: f64, q: f64) -> f64 {
    let weighted: Vec<f64> = blocks
        .j
        .iter()
        .zip(&blocks.norms)
        .map(|(&j, &b)| 2f64.powf(rho * j as f64) * b)
        .collect();
    lq_norm(&weighted, q)
}

/// Riesz potential `Λ^k`: multiplier `|ξ|^k`.
pub fn riesz_apply_scalar(f: &ScalarField, k: f64) -> Result<ScalarField> {
    if k == 0.0 {
        return Ok(f.clone());
    }
    let zero = f.spectrum[0].norm();
    let scale = f.spectrum.iter().fold(0.0f64, |a, z| a.max(z.norm()));
    if k < 0.0 && zero > 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Singularity(format!(
            "zero mode {zero:.3e} is nonzero and k = {k} < 0"
        )));
    }
    Ok(f.apply_multiplier(|r| if r == 0.0 { 0.0 } else { r.powf(k) }))
}

pub fn riesz_apply_radial(f: &RadialMixedField, k: f64) -> RadialMixedField {
    if k == 0.0 {
        return f.clone();
    }
    f.multiply(|r| r.powf(k))
}

pub fn heat_multiplier(r: f64, t: f64) -> f64 {
    (-4.0 * PI * PI * r * r * t).exp()
}

pub fn heat_apply_scalar(f: &ScalarField, t: f64) -> Result<ScalarField> {
    check_time(t)?;
    if t == 0.0 {
        return Ok(f.clone());
    }
    Ok(f.apply_multiplier(|r| heat_multiplier(r, t)))
}

pub fn heat_apply_radial(f: &RadialMixedField, t: f64) -> Result<RadialMixedField> {
    check_time(t)?;
    if t == 0.0 {
        return Ok(f.clone());
    }
    Ok(f.multiply(|r| heat_multiplier(r, t)))
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Input(format!("heat time t = {t} must be finite and ≥ 0")));
    }
    Ok(())
}

fn multiply_field(field: &Field, m: impl Fn(f64) -> f64 + Sync) -> Result<OwnedField> {
    Ok(match field {
        Field::Radial { field, grid, inner } => OwnedField::Radial(field.multiply(&m), (*grid).clone(), *inner),
        Field::Scalar(f) => OwnedField::Scalar(f.apply_multiplier(&m)),
    })
}

enum OwnedField {
    Radial(RadialMixedField, VelocityGrid, InnerNorm),
    Scalar(ScalarField),
}

impl OwnedField {
    fn view(&self) -> Field<'_> {
        match self {
            OwnedField::Radial(f, g, i) => Field::Radial {
                field: f,
                grid: g,
                inner: *i,
            },
            OwnedField::Scalar(f) => Field::Scalar(f),
        }
    }
}

/// Bernstein ratio `‖Δ_j f‖_p / (2^{(n/q−n/p)j}‖Δ_j f‖_q)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BernsteinReport {
    pub j: i32,
    pub p: f64,
    pub q: f64,
    pub ratio: Option<f64>,
    pub bound: f64,
    pub pass: bool,
    pub note: String,
}

fn field_dim(field: &Field) -> usize {
    match field {
        Field::Radial { field, .. } => field.grid.n,
        Field::Scalar(f) => f.n,
    }
}

pub fn check_bernstein(field: &Field, bank: &LPFilterBank, j: i32, p: f64, q: f64, bound: f64) -> Result<BernsteinReport> {
    if !(1.0 <= q && q <= p) {
        return Err(Error::Hypothesis(format!("Bernstein needs 1 ≤ q ≤ p, got p = {p}, q = {q}")));
    }
    if !(bank.j_min..=bank.j_max).contains(&j) {
        return Err(Error::Input(format!("block {j} outside the bank")));
    }
    let single = LPFilterBank { j_min: j, j_max: j };
    let bp = block_norms(field, &single, p)?.norms[0];
    let bq = if p == q { bp } else { block_norms(field, &single, q)?.norms[0] };
    if bq == 0.0 || bp == 0.0 {
        return Ok(BernsteinReport {
            j,
            p,
            q,
            ratio: None,
            bound,
            pass: true,
            note: "empty block skipped".into(),
        });
    }
    let nf = field_dim(field) as f64;
    let inv = |x: f64| if x.is_infinite() { 0.0 } else { 1.0 / x };
    let ratio = bp / (2f64.powf((nf * inv(q) - nf * inv(p)) * j as f64) * bq);
    Ok(BernsteinReport {
        j,
        p,
        q,
        ratio: Some(ratio),
        bound,
        pass: ratio <= bound,
        note: String::new(),
    })
}

/// `(‖Δ_jΛ^s f‖/‖Δ_j f‖)/2^{js}`, which lies in `[2^{−|s|}, 2^{|s|}]`.
pub fn bernstein_riesz_ratio(field: &Field, j: i32, s: f64, p: f64) -> Result<Option<f64>> {
    let single = LPFilterBank { j_min: j, j_max: j };
    let base = block_norms(field, &single, p)?.norms[0];
    if base == 0.0 {
        return Ok(None);
    }
    let lifted = multiply_field(field, |r| if r == 0.0 { 0.0 } else { r.powf(s) })?;
    let top = block_norms(&lifted.view(), &single, p)?.norms[0];
    Ok(Some(top / base / 2f64.powf(j as f64 * s)))
}

/// Parameters of the interpolation/embedding checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum Interpolation {
    /// `‖f‖_{Ḃ^{k,1}_p} ≤ C‖f‖_{Ḃ^{m,∞}_r}^{1−θ}‖f‖_{Ḃ^{ρ,∞}_r}^θ` with
    /// `k + n/r − n/p = m(1−θ) + ρθ`, `1 ≤ r ≤ p`.
    OptSob { k: f64, m: f64, rho: f64, r: f64, p: f64 },
    /// `‖f‖_{Ḃ^{ℓ,q'}_q} ≤ ‖f‖_{Ḃ^{k,r'}_r}^θ‖f‖_{Ḃ^{m,p'}_p}^{1−θ}` with
    /// `ℓ = kθ + m(1−θ)`, `1/q = θ/r + (1−θ)/p`, `1/q' = θ/r' + (1−θ)/p'`.
    Holder {
        k: f64,
        m: f64,
        theta: f64,
        p: f64,
        r: f64,
        p_seq: f64,
        r_seq: f64,
    },
    /// `‖f‖_{Ḃ^{−ρ,∞}_q} ≤ C‖f‖_{L^p}`, `1/p − 1/q = ρ/n`, `1 ≤ p ≤ 2`.
    Embedding { rho: f64, p: f64 },
    /// `sup_t t^{ρ/2}‖e^{tΔ}f‖₂ / ‖f‖_{Ḃ^{−ρ,∞}_2}` over geometric `t`.
    HeatChar { rho: f64, t_min: f64, t_max: f64, t_points: usize },
}

impl Interpolation {
    pub fn name(&self) -> &'static str {
        match self {
            Interpolation::OptSob { .. } => "opt_sob",
            Interpolation::Holder { .. } => "holder",
            Interpolation::Embedding { .. } => "embedding",
            Interpolation::HeatChar { .. } => "heat_char",
        }
    }

    pub fn params_string(&self) -> String {
        let v = serde_json::to_value(self).expect("plain data");
        let mut parts = Vec::new();
        if let serde_json::Value::Object(m) = v {
            for (k, v) in m {
                if k != "variant" {
                    parts.push(format!("{k}={v}"));
                }
            }
        }
        parts.join(";")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InterpolationReport {
    pub variant: String,
    pub params: String,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    /// `C` (`LHS ≤ C·RHS`, or `ratio ∈ [1/C, C]` for heat_char).
    pub bound: f64,
    pub pass: bool,
}

fn recip(x: f64) -> f64 {
    if x.is_infinite() { 0.0 } else { 1.0 / x }
}

fn from_recip(x: f64) -> f64 {
    if x == 0.0 { f64::INFINITY } else { 1.0 / x }
}

/// Checks one inequality of the suite on `field`; `bound` is the frozen
/// constant (ignored for the Hölder variant, which holds with constant 1).
pub fn check_interpolation(
    field: &Field,
    bank: &LPFilterBank,
    variant: &Interpolation,
    bound: f64,
) -> Result<InterpolationReport> {
    let nf = field_dim(field) as f64;
    let report = |lhs: f64, rhs: f64, bound: f64, pass: bool| InterpolationReport {
        variant: variant.name().into(),
        params: variant.params_string(),
        lhs,
        rhs,
        ratio: if rhs > 0.0 { lhs / rhs } else { f64::INFINITY },
        bound,
        pass,
    };
    match *variant {
        Interpolation::OptSob { k, m, rho, r, p } => {
            if !(1.0 <= r && r <= p) || m == rho {
                return Err(Error::Hypothesis("opt_sob needs 1 ≤ r ≤ p and m ≠ ρ".into()));
            }
            let theta = (k + nf * recip(r) - nf * recip(p) - m) / (rho - m);
            if !(theta > 0.0 && theta < 1.0) {
                return Err(Error::Hypothesis(format!("opt_sob: θ = {theta} not in (0,1)")));
            }
            let bp = block_norms(field, bank, p)?;
            let br = if r == p { bp.clone() } else { block_norms(field, bank, r)? };
            let lhs = besov_from_blocks(&bp, k, 1.0);
            let rhs = besov_from_blocks(&br, m, f64::INFINITY).powf(1.0 - theta)
                * besov_from_blocks(&br, rho, f64::INFINITY).powf(theta);
            Ok(report(lhs, rhs, bound, lhs <= bound * rhs))
        }
        Interpolation::Holder {
            k,
            m,
            theta,
            p,
            r,
            p_seq,
            r_seq,
        } => {
            if !(theta > 0.0 && theta <= 1.0) || !(1.0 <= p && p <= r) || !(1.0 <= p_seq && p_seq <= r_seq) {
                return Err(Error::Hypothesis(
                    "holder needs θ ∈ (0,1], 1 ≤ p ≤ r, 1 ≤ p' ≤ r'".into(),
                ));
            }
            let ell = k * theta + m * (1.0 - theta);
            if !(m > ell && ell >= k) {
                return Err(Error::Hypothesis("holder needs m > ℓ ≥ k".into()));
            }
            let q = from_recip(theta * recip(r) + (1.0 - theta) * recip(p));
            let q_seq = from_recip(theta * recip(r_seq) + (1.0 - theta) * recip(p_seq));
            let lhs = besov_from_blocks(&block_norms(field, bank, q)?, ell, q_seq);
            let rhs = besov_from_blocks(&block_norms(field, bank, r)?, k, r_seq).powf(theta)
                * besov_from_blocks(&block_norms(field, bank, p)?, m, p_seq).powf(1.0 - theta);
            Ok(report(lhs, rhs, 1.0, lhs <= rhs * (1.0 + 1e-12) + 1e-10))
        }
        Interpolation::Embedding { rho, p } => {
            if !(rho > 0.0 && (1.0..=2.0).contains(&p)) {
                return Err(Error::Hypothesis("embedding needs ρ > 0 and 1 ≤ p ≤ 2".into()));
            }
            let inv_q = 1.0 / p - rho / nf;
            if inv_q < -1e-14 {
                return Err(Error::Hypothesis("embedding: 1/p − ρ/n must be ≥ 0".into()));
            }
            let q = from_recip(inv_q.max(0.0));
            let lhs = besov_norm(field, bank, -rho, f64::INFINITY, q)?.value;
            let rhs = match field {
                Field::Scalar(f) => f.lp_norm(p),
                Field::Radial { .. } => {
                    return Err(Error::Unsupported("embedding needs a physical-space field".into()));
                }
            };
            Ok(report(lhs, rhs, bound, lhs <= bound * rhs))
        }
        Interpolation::HeatChar {
            rho,
            t_min,
            t_max,
            t_points,
        } => {
            if !(rho > 0.0 && t_min > 0.0 && t_max > t_min && t_points >= 2) {
                return Err(Error::Hypothesis("heat_char needs ρ > 0 and 0 < t_min < t_max".into()));
            }
            let rhs = besov_norm(field, bank, -rho, f64::INFINITY, 2.0)?.value;
            let ts = crate::rates::geometric_samples(t_min, t_max, t_points);
            let mut lhs = 0.0f64;
            for t in ts {
                let heated = multiply_field(field, |r| heat_multiplier(r, t))?;
                let l2 = l2_norm(&heated.view())?;
                lhs = lhs.max(t.powf(rho / 2.0) * l2);
            }
            let ratio = lhs / rhs;
            Ok(report(lhs, rhs, bound, ratio >= 1.0 / bound && ratio <= bound))
        }
    }
}

/// `‖f‖_{L²_x X_v}` via Plancherel.
pub fn l2_norm(field: &Field) -> Result<f64> {
    match field {
        Field::Radial { field, grid, inner } => {
            let sq = radial_inner_sq(field, grid, *inner)?;
            Ok(sq.iter().zip(&field.grid.weights).map(|(a, w)| a * w).sum::<f64>().sqrt())
        }
        Field::Scalar(f) => Ok(f.lp_norm(2.0)),
    }
}

/// Frozen regression constants (twice the maximum over the default corpus).
pub mod constants {
    /// Bernstein `C_bank` (observed 1.9845).
    pub const BERNSTEIN: f64 = 3.97;
    /// Embedding `‖f‖_{Ḃ^{−ρ,∞}_q} ≤ C‖f‖_{L^p}` (observed 0.6038).
    pub const EMBEDDING: f64 = 1.21;
    /// Optimised Sobolev interpolation (observed 2.3874).
    pub const OPT_SOB: f64 = 4.78;
    /// Admissible window of the heat characterisation ratio.
    pub const HEAT_CHAR: f64 = 3.0;
}

/// One synthetic test function of the calibration corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CorpusItem {
    /// `exp(−|x−c|²/(2σ²))`.
    Gaussian { sigma: f64, center: Vec<f64> },
    /// Gaussian times `cos(2π ξ₀·x)`.
    ModulatedGaussian { sigma: f64, freq: Vec<f64> },
    /// Random Fourier modes with `|ξ|` in `[lo, hi]`.
    RandomModes { count: usize, lo: f64, hi: f64, seed: u64 },
    /// Two plane waves at `1.5·2^{j₁}` and `1.5·2^{j₂}` along the first axis.
    TwoBlocks { j1: i32, j2: i32, amp2: f64 },
}

/// Periodic grid used by the corpus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusGrid {
    pub n: usize,
    pub points: usize,
    pub j_min: i32,
}

impl Default for CorpusGrid {
    fn default() -> Self {
        Self {
            n: 2,
            points: 64,
            j_min: -1,
        }
    }
}

impl CorpusGrid {
    /// Widest bank the grid supports: `[j_min, ⌊log₂(N/(2L))⌋]`.
    pub fn bank(&self) -> Result<LPFilterBank> {
        let l = 2.0 * PI * 2f64.powi(-self.j_min);
        let top = (self.points as f64 / (2.0 * l)).log2().floor() as i32;
        LPFilterBank::new(self.j_min, top)
    }
}

impl CorpusItem {
    pub fn realize(&self, g: &CorpusGrid) -> Result<ScalarField> {
        use rand::{Rng, SeedableRng};
        let n = g.n;
        let l = 2.0 * PI * 2f64.powi(-g.j_min);
        match self {
            CorpusItem::Gaussian { sigma, center } => {
                let c = center.clone();
                ScalarField::from_fn(n, g.points, g.j_min, |x| {
                    let r2: f64 = x.iter().enumerate().map(|(i, xi)| (xi - c.get(i).copied().unwrap_or(0.0)).powi(2)).sum();
                    (-r2 / (2.0 * sigma * sigma)).exp()
                })
            }
            CorpusItem::ModulatedGaussian { sigma, freq } => {
                let fr = freq.clone();
                ScalarField::from_fn(n, g.points, g.j_min, |x| {
                    let r2: f64 = x.iter().map(|v| v * v).sum();
                    let ph: f64 = x.iter().enumerate().map(|(i, xi)| xi * fr.get(i).copied().unwrap_or(0.0)).sum();
                    (-r2 / (2.0 * sigma * sigma)).exp() * (2.0 * PI * ph).cos()
                })
            }
            CorpusItem::RandomModes { count, lo, hi, seed } => {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(*seed);
                let mut modes = Vec::new();
                let kmax = (g.points / 2 - 1) as i64;
                let mut guard = 0;
                while modes.len() < *count && guard < 100_000 {
                    guard += 1;
                    let m: Vec<i64> = (0..n).map(|_| rng.random_range(-kmax..=kmax)).collect();
                    let r = (m.iter().map(|v| (v * v) as f64).sum::<f64>()).sqrt() / l;
                    if r >= *lo && r <= *hi {
                        let amp: f64 = rng.random_range(0.2..1.0);
                        let phase: f64 = rng.random_range(0.0..2.0 * PI);
                        modes.push((m, amp, phase));
                    }
                }
                if modes.is_empty() {
                    return Err(Error::Input("no lattice modes in the requested band".into()));
                }
                ScalarField::from_fn(n, g.points, g.j_min, |x| {
                    modes
                        .iter()
                        .map(|(m, a, ph)| {
                            let d: f64 = m.iter().zip(x).map(|(mi, xi)| *mi as f64 * xi).sum();
                            a * (2.0 * PI * d / l + ph).cos()
                        })
                        .sum()
                })
            }
            CorpusItem::TwoBlocks { j1, j2, amp2 } => {
                let f1 = (1.5 * 2f64.powi(*j1) * l).round() / l;
                let f2 = (1.5 * 2f64.powi(*j2) * l).round() / l;
                ScalarField::from_fn(n, g.points, g.j_min, |x| {
                    (2.0 * PI * f1 * x[0]).cos() + amp2 * (2.0 * PI * f2 * x[0]).cos()
                })
            }
        }
    }
}

/// The default 20-function calibration corpus.
pub fn default_corpus() -> Vec<CorpusItem> {
    let mut v = Vec::new();
    for (i, s) in [0.6, 0.8, 1.0, 1.4, 1.8].iter().enumerate() {
        v.push(CorpusItem::Gaussian {
            sigma: *s,
            center: vec![0.3 * i as f64 - 0.6, 0.1 * i as f64],
        });
    }
    for (s, f) in [(1.2, [0.4, 0.0]), (1.5, [0.6, 0.6]), (0.9, [1.0, -0.3]), (2.0, [0.3, 0.2]), (1.6, [1.2, 0.5])] {
        v.push(CorpusItem::ModulatedGaussian {
            sigma: s,
            freq: f.to_vec(),
        });
    }
    for (i, (lo, hi)) in [(0.3, 0.9), (0.5, 1.8), (1.1, 2.4), (0.2, 2.4), (0.6, 1.2), (0.3, 2.0)].iter().enumerate() {
        v.push(CorpusItem::RandomModes {
            count: 6 + i,
            lo: *lo,
            hi: *hi,
            seed: 100 + i as u64,
        });
    }
    for (j1, j2, a) in [(-1, 0, 1.0), (-1, 1, 1.0), (0, 1, 0.5), (-1, 1, 2.0)] {
        v.push(CorpusItem::TwoBlocks { j1, j2, amp2: a });
    }
    v
}

/// One CSV row of the suite output.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuiteRow {
    pub variant: String,
    pub params: String,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub pass: bool,
}

pub fn rows_to_csv(rows: &[SuiteRow]) -> String {
    let mut s = String::from("variant,params,lhs,rhs,ratio,pass\n");
    for r in rows {
        s.push_str(&format!(
            "{},\"{}\",{:e},{:e},{:e},{}\n",
            r.variant, r.params, r.lhs, r.rhs, r.ratio, r.pass
        ));
    }
    s
}

impl From<&InterpolationReport> for SuiteRow {
    fn from(r: &InterpolationReport) -> Self {
        Self {
            variant: r.variant.clone(),
            params: r.params.clone(),
            lhs: r.lhs,
            rhs: r.rhs,
            ratio: r.ratio,
            pass: r.pass,
        }
    }
}

/// Parameter sets exercised by the suite on every corpus function.
pub fn default_holder_params() -> Vec<Interpolation> {
    let mut v = Vec::new();
    for (k, m, theta) in [(0.0, 2.0, 0.5), (-1.0, 1.0, 0.25), (0.0, 1.0, 0.7), (-0.5, 1.5, 1.0)] {
        for (p, r) in [(1.0, f64::INFINITY), (2.0, 2.0), (1.0, 4.0), (2.0, f64::INFINITY)] {
            for (ps, rs) in [(1.0, f64::INFINITY), (2.0, 2.0), (1.0, 2.0)] {
                v.push(Interpolation::Holder {
                    k,
                    m,
                    theta,
                    p,
                    r,
                    p_seq: ps,
                    r_seq: rs,
                });
            }
        }
    }
    v
}

pub fn default_opt_sob_params(n: usize) -> Vec<Interpolation> {
    let nf = n as f64;
    let mut v = Vec::new();
    for (m, rho, theta) in [(0.0, 2.0, 0.5), (-1.0, 1.0, 0.5), (0.0, 1.0, 0.3)] {
        for (r, p) in [(2.0, 2.0), (2.0, f64::INFINITY), (1.0, 2.0)] {
            let k = m * (1.0 - theta) + rho * theta - nf * recip(r) + nf * recip(p);
            v.push(Interpolation::OptSob { k, m, rho, r, p });
        }
    }
    v
}

pub fn default_embedding_params(n: usize) -> Vec<Interpolation> {
    let nf = n as f64;
    vec![
        Interpolation::Embedding { rho: nf / 2.0, p: 1.0 },
        Interpolation::Embedding { rho: nf / 4.0, p: 4.0 / 3.0 },
        Interpolation::Embedding { rho: nf * (1.0 / 1.2 - 0.5), p: 1.2 },
    ]
}

pub const BERNSTEIN_PAIRS: [(f64, f64); 4] = [(2.0, 1.0), (f64::INFINITY, 2.0), (f64::INFINITY, 1.0), (4.0, 2.0)];

/// Maximum observed ratio of each constant-bearing inequality over a corpus.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Calibration {
    pub bernstein: f64,
    pub embedding: f64,
    pub opt_sob: f64,
    pub holder: f64,
}

/// Output of the inequality suite over a corpus.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuiteResult {
    pub grid: CorpusGrid,
    pub bank: LPFilterBank,
    pub rows: Vec<SuiteRow>,
    pub observed: Calibration,
    /// Largest `|ratio(f, j) − ratio(f(2·), j+1)|` over Bernstein checks.
    pub dilation_error: f64,
    pub max_leakage: f64,
    pub failures: usize,
}

/// Runs Bernstein, embedding, opt_sob and Hölder checks on every corpus
/// function; `frozen` supplies the constants tested against.
pub fn run_suite(corpus: &[CorpusItem], grid: &CorpusGrid, frozen: &Calibration) -> Result<SuiteResult> {
    let bank = grid.bank()?;
    let bank_d = LPFilterBank::new(bank.j_min + 1, bank.j_max + 1)?;
    let mut rows = Vec::new();
    let mut obs = Calibration::default();
    let mut dilation_error = 0.0f64;
    let mut max_leakage = 0.0f64;
    let holder = default_holder_params();
    let opt = default_opt_sob_params(grid.n);
    let emb = default_embedding_params(grid.n);
    for (idx, item) in corpus.iter().enumerate() {
        let f = item.realize(grid)?;
        let d = f.dilate();
        let fld = Field::Scalar(&f);
        max_leakage = max_leakage.max(block_norms(&fld, &bank, 2.0)?.leakage);
        for (p, q) in BERNSTEIN_PAIRS {
            for j in bank.indices() {
                let r = check_bernstein(&fld, &bank, j, p, q, frozen.bernstein)?;
                let rd = check_bernstein(&Field::Scalar(&d), &bank_d, j + 1, p, q, frozen.bernstein)?;
                if let (Some(a), Some(b)) = (r.ratio, rd.ratio) {
                    dilation_error = dilation_error.max((a - b).abs());
                }
                if let Some(x) = r.ratio {
                    obs.bernstein = obs.bernstein.max(x);
                    rows.push(SuiteRow {
                        variant: "bernstein".into(),
                        params: format!("f={idx};j={j};p={p};q={q}"),
                        lhs: x,
                        rhs: 1.0,
                        ratio: x,
                        pass: r.pass,
                    });
                }
            }
        }
        for (list, slot) in [(&holder, 0), (&opt, 1), (&emb, 2)] {
            for v in list.iter() {
                let bound = match slot {
                    0 => 1.0,
                    1 => frozen.opt_sob,
                    _ => frozen.embedding,
                };
                let rep = check_interpolation(&fld, &bank, v, bound)?;
                let target = match slot {
                    0 => &mut obs.holder,
                    1 => &mut obs.opt_sob,
                    _ => &mut obs.embedding,
                };
                if rep.ratio.is_finite() {
                    *target = target.max(rep.ratio);
                }
                let mut row = SuiteRow::from(&rep);
                row.params = format!("f={idx};{}", row.params);
                rows.push(row);
            }
        }
    }
    let failures = rows.iter().filter(|r| !r.pass).count();
    Ok(SuiteResult {
        grid: *grid,
        bank,
        rows,
        observed: obs,
        dilation_error,
        max_leakage,
        failures,
    })
}

/// Constants frozen in [`constants`].
pub fn frozen_calibration() -> Calibration {
    Calibration {
        bernstein: constants::BERNSTEIN,
        embedding: constants::EMBEDDING,
        opt_sob: constants::OPT_SOB,
        holder: 1.0,
    }
}

/// Heat characterisation on `F(κ) = κ^{ρ−n/2}1_{κ≤1}` times `√μ`.
pub fn heat_char_power_profile(grid: &VelocityGrid, rho: f64, t_max: f64) -> Result<InterpolationReport> {
    let n = grid.n();
    let rg = RadialGrid::geometric(n, 1e-6, 4.0, 800)?;
    let half_n = n as f64 / 2.0;
    let f = RadialMixedField::separable(rg, |k| if k <= 1.0 { k.powf(rho - half_n) } else { 0.0 }, &grid.sqrt_mu());
    let bank = LPFilterBank::new(-19, 2)?;
    let fld = Field::Radial {
        field: &f,
        grid,
        inner: InnerNorm::L2,
    };
    check_interpolation(
        &fld,
        &bank,
        &Interpolation::HeatChar {
            rho,
            t_min: 1.0,
            t_max,
            t_points: 41,
        },
        constants::HEAT_CHAR,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::velocity::build_hermite_grid;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn bump_shape() {
        assert_eq!(bump(0.5), 1.0);
        assert_eq!(bump(2.5), 0.0);
        assert!((bump(1.5) - 0.5).abs() < 1e-15);
        assert!(annulus(0.5) == 0.0 && annulus(2.0) == 0.0 && annulus(1.0) == 1.0);
    }

    #[test]
    fn partition_examples() {
        let bank = LPFilterBank::new(-6, 6).unwrap();
        for j in -4..4 {
            let r = 2f64.powi(j);
            let s = bank.phi(j, r) + bank.phi(j - 1, r) + bank.phi(j + 1, r);
            assert!((s - 1.0).abs() < 1e-15);
            let r = 3.0 * 2f64.powi(j);
            assert_eq!(bank.phi(j, r), 0.0);
            assert!((bank.phi(j + 1, r) + bank.phi(j + 2, r) - 1.0).abs() < 1e-15);
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let (lo, hi) = bank.exact_range();
        for _ in 0..10_000 {
            let r = lo * (hi / lo).powf(rng.random_range(0.0..1.0));
            assert!((bank.partition(r) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn filter_range_error() {
        assert!(matches!(build_lp_filters(-2, 2, &[0.5, 1.0, 8.0]), Err(Error::Range(_))));
        assert!(build_lp_filters(-2, 2, &[0.1, 1.0, 8.0]).is_ok());
        assert!(LPFilterBank::new(2, 2).is_err());
    }

    #[test]
    fn radial_measure_reproduces_gaussian_integral() {
        let rg = RadialGrid::geometric(3, 1e-4, 8.0, 400).unwrap();
        let v = rg.integrate(|k| (-PI * k * k).exp());
        assert!((v - 1.0).abs() < 1e-4, "{v}");
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-13);
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-13);
        assert!((gamma_fn(2.7) - 1.5446858458).abs() < 1e-8);
    }

    #[test]
    fn point_mass_block() {
        let grid = build_hermite_grid(3, 6, 1.0).unwrap();
        let bank = LPFilterBank::new(-4, 4).unwrap();
        for rho in [-1.5, 0.0, 2.0] {
            let f = RadialMixedField::new(RadialGrid::point(3, 2.0), vec![grid.sqrt_mu()]).unwrap();
            let fld = Field::Radial {
                field: &f,
                grid: &grid,
                inner: InnerNorm::L2,
            };
            let b = besov_norm(&fld, &bank, rho, f64::INFINITY, 2.0).unwrap();
            assert!((b.value - 2f64.powf(rho)).abs() < 1e-12 * 2f64.powf(rho));
            assert!(matches!(besov_norm(&fld, &bank, rho, 2.0, 1.0), Err(Error::Unsupported(_))));
        }
    }

    fn power_field(grid: &VelocityGrid, rho: f64, n: usize) -> RadialMixedField {
        let rg = RadialGrid::geometric(n, 1e-5, 4.0, 600).unwrap();
        RadialMixedField::separable(rg, |k| if k <= 1.0 { k.powf(rho - n as f64 / 2.0) } else { 0.0 }, &grid.sqrt_mu())
    }

    #[test]
    fn power_profile_blocks_equalised() {
        let grid = build_hermite_grid(3, 6, 1.0).unwrap();
        let f = power_field(&grid, 1.0, 3);
        let bank = LPFilterBank::new(-15, 2).unwrap();
        let fld = Field::Radial {
            field: &f,
            grid: &grid,
            inner: InnerNorm::L2,
        };
        let b = block_norms(&fld, &bank, 2.0).unwrap();
        let scaled: Vec<f64> = b.j.iter().zip(&b.norms).filter(|(j, _)| **j <= -1 && **j >= -14).map(|(&j, &x)| 2f64.powi(-j) * x).collect();
        let (mn, mx) = scaled.iter().fold((f64::INFINITY, 0.0f64), |(a, c), &x| (a.min(x), c.max(x)));
        // annulus oracle: 2^{−ρj}‖Δ_j f‖ is j-independent
        assert!(mx / mn < 1.0 + 1e-3, "{scaled:?}");
        assert!(mx / mn < 2.0);
    }

    #[test]
    fn l2_equivalence_constant() {
        // Σ_j φ_j² ≤ 1, so the q = 2, ρ = 0 norm is below ‖f‖₂; the ratio is frozen
        let grid = build_hermite_grid(3, 6, 1.0).unwrap();
        let f = power_field(&grid, 1.0, 3);
        let bank = LPFilterBank::new(-15, 3).unwrap();
        let fld = Field::Radial {
            field: &f,
            grid: &grid,
            inner: InnerNorm::L2,
        };
        let b = besov_norm(&fld, &bank, 0.0, 2.0, 2.0).unwrap().value;
        let l2 = l2_norm(&fld).unwrap();
        let ratio = b / l2;
        assert!(ratio <= 1.0 && ratio > 0.75, "ratio {ratio}");
    }

    #[test]
    fn scalar_plancherel_and_roundtrip() {
        let f = ScalarField::from_fn(2, 32, 0, |x| (-(x[0] * x[0] + 0.5 * x[1] * x[1])).exp() + 0.1 * x[0].sin()).unwrap();
        assert!((f.lp_norm(2.0) - f.spectral_l2()).abs() < 1e-10 * f.lp_norm(2.0));
        let g = ScalarField::from_spectrum(2, 32, 0, f.spectrum().to_vec()).unwrap();
        for (a, b) in f.values().iter().zip(g.values()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn riesz_and_heat_examples() {
        let f = CorpusItem::RandomModes { count: 5, lo: 0.3, hi: 2.0, seed: 1 }.realize(&CorpusGrid::default()).unwrap();
        let id = riesz_apply_scalar(&f, 0.0).unwrap();
        assert_eq!(id.values(), f.values());
        let a = riesz_apply_scalar(&riesz_apply_scalar(&f, 0.7).unwrap(), -1.9).unwrap();
        let b = riesz_apply_scalar(&f, -1.2).unwrap();
        for (x, y) in a.spectrum().iter().zip(b.spectrum()) {
            assert!((x - y).norm() <= 1e-12 * y.norm().max(1e-3));
        }
        let g = ScalarField::from_fn(1, 16, 0, |_| 1.0).unwrap();
        assert!(matches!(riesz_apply_scalar(&g, -1.0), Err(Error::Singularity(_))));

        let h1 = heat_apply_scalar(&heat_apply_scalar(&f, 0.01).unwrap(), 0.02).unwrap();
        let h2 = heat_apply_scalar(&f, 0.03).unwrap();
        for (x, y) in h1.spectrum().iter().zip(h2.spectrum()) {
            assert!((x - y).norm() <= 1e-12 * f.spectral_l2());
        }
        assert!(heat_apply_scalar(&f, -1.0).is_err());

        let grid = build_hermite_grid(3, 6, 1.0).unwrap();
        let pm = RadialMixedField::new(RadialGrid::point(3, 1.0), vec![grid.sqrt_mu()]).unwrap();
        let hp = heat_apply_radial(&pm, 1.0).unwrap();
        let ratio = hp.values[0].values()[0] / pm.values[0].values()[0];
        assert!((ratio.re - (-4.0 * PI * PI).exp()).abs() < 1e-30);
        let rp = riesz_apply_radial(&RadialMixedField::new(RadialGrid::point(3, 3.0), vec![grid.sqrt_mu()]).unwrap(), 1.5);
        assert!((rp.values[0].values()[0].re / grid.sqrt_mu().values()[0].re - 3f64.powf(1.5)).abs() < 1e-12);
    }

    #[test]
    fn heat_decay_of_power_profile() {
        // ∫κ^{2ρ−1} e^{−8π²κ²t} dκ ∝ t^{−ρ} for t ≫ 1
        let grid = build_hermite_grid(3, 6, 1.0).unwrap();
        let f = power_field(&grid, 1.0, 3);
        let norms: Vec<(f64, f64)> = [10.0, 100.0, 1000.0, 10000.0]
            .iter()
            .map(|&t| {
                let h = heat_apply_radial(&f, t).unwrap();
                let fld = Field::Radial { field: &h, grid: &grid, inner: InnerNorm::L2 };
                (t, l2_norm(&fld).unwrap().powi(2))
            })
            .collect();
        for (t, v) in &norms {
            let c = v * t;
            let expect = 4.0 * PI / (16.0 * PI * PI);
            assert!((c / expect - 1.0).abs() < 0.1, "t={t} c={c}");
        }
    }

    #[test]
    fn bernstein_trivial_and_riesz() {
        let g = CorpusGrid::default();
        let f = CorpusItem::RandomModes { count: 8, lo: 0.2, hi: 2.4, seed: 3 }.realize(&g).unwrap();
        let bank = g.bank().unwrap();
        let fld = Field::Scalar(&f);
        for j in bank.indices() {
            let r = check_bernstein(&fld, &bank, j, 2.0, 2.0, 1.0).unwrap();
            if let Some(x) = r.ratio {
                assert_eq!(x, 1.0);
            }
        }
        let single = ScalarField::from_fn(1, 64, 0, |x| (2.0 * PI * 3.0 / (2.0 * PI) * x[0]).cos()).unwrap();
        let fld1 = Field::Scalar(&single);
        // mode at |ξ₀| = 3/(2π), inside block j = −1
        let xi0 = 3.0 / (2.0 * PI);
        let ratio = bernstein_riesz_ratio(&fld1, -1, 0.8, 2.0).unwrap().unwrap();
        assert!((ratio - (2.0 * xi0).powf(0.8)).abs() < 1e-12);
        assert!(ratio >= 2f64.powf(-0.8) && ratio <= 2f64.powf(0.8));
    }

    #[test]
    fn dilation_covariance() {
        let g = CorpusGrid::default();
        let f = CorpusItem::Gaussian { sigma: 1.0, center: vec![0.2, -0.1] }.realize(&g).unwrap();
        let d = f.dilate();
        let bank = LPFilterBank::new(-1, 1).unwrap();
        let bank_d = LPFilterBank::new(0, 2).unwrap();
        let b = block_norms(&Field::Scalar(&f), &bank, 2.0).unwrap();
        let bd = block_norms(&Field::Scalar(&d), &bank_d, 2.0).unwrap();
        for (x, y) in b.norms.iter().zip(&bd.norms) {
            assert!((y - x * 2f64.powf(-1.0)).abs() <= 1e-12 * x.max(1e-300));
        }
        for (p, q) in BERNSTEIN_PAIRS {
            for j in bank.indices() {
                let r1 = check_bernstein(&Field::Scalar(&f), &bank, j, p, q, 10.0).unwrap().ratio;
                let r2 = check_bernstein(&Field::Scalar(&d), &bank_d, j + 1, p, q, 10.0).unwrap().ratio;
                if let (Some(a), Some(b)) = (r1, r2) {
                    assert!((a - b).abs() <= 1e-10 * a);
                }
            }
        }
    }

    #[test]
    fn holder_two_equal_blocks() {
        let g = CorpusGrid::default();
        let f = CorpusItem::TwoBlocks { j1: -1, j2: 1, amp2: 1.0 }.realize(&g).unwrap();
        let bank = g.bank().unwrap();
        let v = Interpolation::Holder { k: 0.0, m: 2.0, theta: 0.5, p: 2.0, r: 2.0, p_seq: 2.0, r_seq: 2.0 };
        let rep = check_interpolation(&Field::Scalar(&f), &bank, &v, 1.0).unwrap();
        assert!(rep.pass, "{rep:?}");
        let bad = Interpolation::Holder { k: 0.0, m: 2.0, theta: 0.5, p: 4.0, r: 2.0, p_seq: 2.0, r_seq: 2.0 };
        assert!(matches!(check_interpolation(&Field::Scalar(&f), &bank, &bad, 1.0), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn besov_q_monotone_and_heat_contractive() {
        let g = CorpusGrid::default();
        let bank = g.bank().unwrap();
        for item in default_corpus().iter().take(6) {
            let f = item.realize(&g).unwrap();
            let fld = Field::Scalar(&f);
            let a = besov_norm(&fld, &bank, 0.5, f64::INFINITY, 2.0).unwrap().value;
            let b = besov_norm(&fld, &bank, 0.5, 2.0, 2.0).unwrap().value;
            let c = besov_norm(&fld, &bank, 0.5, 1.0, 2.0).unwrap().value;
            assert!(a <= b * (1.0 + 1e-14) && b <= c * (1.0 + 1e-14));
            let h = heat_apply_scalar(&f, 0.05).unwrap();
            let bh = besov_norm(&Field::Scalar(&h), &bank, 0.5, 2.0, 2.0).unwrap().value;
            assert!(bh <= b * (1.0 + 1e-14));
        }
    }

    #[test]
    fn suite_passes_with_frozen_constants() {
        let r = run_suite(&default_corpus(), &CorpusGrid::default(), &frozen_calibration()).unwrap();
        assert_eq!(r.failures, 0);
        assert!(r.dilation_error < 1e-10);
        assert!(r.observed.bernstein <= constants::BERNSTEIN / 2.0 + 1e-3);
        assert!(r.observed.holder <= 1.0 + 1e-12);
        assert!(!rows_to_csv(&r.rows).is_empty());
    }

    proptest! {
        #[test]
        fn partition_of_unity_random(x in 0.0f64..1.0) {
            let bank = LPFilterBank::new(-9, 7).unwrap();
            let (lo, hi) = bank.exact_range();
            let r = lo * (hi / lo).powf(x);
            prop_assert!((bank.partition(r) - 1.0).abs() < 1e-12);
            for j in bank.indices() {
                let v = bank.phi(j, r);
                let s = 2f64.powi(j);
                prop_assert!(v >= 0.0);
                if r <= s / 2.0 || r >= 2.0 * s { prop_assert_eq!(v, 0.0); }
            }
        }
    }
}
