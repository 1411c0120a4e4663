//! Velocity-space discretisation: tensor Gauss–Hermite grids, the Maxwellian,
//! the weight `⟨v⟩`, weighted inner products and grid norms.

use serde::{Deserialize, Serialize};

use crate::linalg::{lagrange3, sym_eigen, RMat};
use crate::{C64, Error, Result};

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Hard,
    Soft,
}

/// Kinetic-factor exponents `(γ, s)` with the declared potential regime.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelParams {
    n: usize,
    gamma: f64,
    s: f64,
    regime: Regime,
    nu_exp: f64,
}

impl KernelParams {
    /// Validates `(n, γ, s)` against the declared regime.
    ///
    /// hard: `γ ≥ −2s`; soft: `−2s > γ > −n` and `γ + 2s > −n/2`.
    pub fn new(n: usize, gamma: f64, s: f64, regime: Regime) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParams("dimension n must be ≥ 1".into()));
        }
        if !gamma.is_finite() || !s.is_finite() {
            return Err(Error::InvalidParams("γ and s must be finite".into()));
        }
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::InvalidParams(format!("s = {s} must lie in (0,1)")));
        }
        let nf = n as f64;
        let ok = match regime {
            Regime::Hard => gamma >= -2.0 * s,
            Regime::Soft => -2.0 * s > gamma && gamma > -nf && gamma + 2.0 * s > -nf / 2.0,
        };
        if !ok {
            return Err(Error::InvalidParams(format!(
                "(γ, s) = ({gamma}, {s}) violates the {regime:?} regime for n = {n}"
            )));
        }
        Ok(Self {
            n,
            gamma,
            s,
            regime,
            nu_exp: gamma + 2.0 * s,
        })
    }

    /// Picks the regime from the sign of `γ + 2s`.
    pub fn infer(n: usize, gamma: f64, s: f64) -> Result<Self> {
        let regime = if gamma >= -2.0 * s { Regime::Hard } else { Regime::Soft };
        Self::new(n, gamma, s, regime)
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn s(&self) -> f64 {
        self.s
    }
    pub fn regime(&self) -> Regime {
        self.regime
    }
    /// `γ + 2s`, the exponent of the dissipation weight.
    pub fn nu_exp(&self) -> f64 {
        self.nu_exp
    }
}

/// Grid specification as it appears in run configs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    pub points_per_axis: usize,
    #[serde(default = "default_scaling")]
    pub hermite_scaling: f64,
}

fn default_scaling() -> f64 {
    1.0
}

/// Identifies the grid an exported matrix was assembled on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFingerprint {
    pub spec: GridSpec,
    pub nodes: usize,
    /// `Σ_k q_k`, a cheap checksum of the quadrature weights.
    pub quad_sum: f64,
}

impl GridFingerprint {
    pub fn matches(&self, other: &GridFingerprint) -> bool {
        self.spec == other.spec
            && self.nodes == other.nodes
            && (self.quad_sum - other.quad_sum).abs() <= 1e-10 * self.quad_sum.abs().max(1.0)
    }
}

/// Gauss–Hermite nodes and probability weights for the standard normal.
pub fn gauss_hermite(points: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let jac = RMat::from_fn(points, points, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let (mut x, _) = sym_eigen(&jac)?;
    let orthonormal = |x: f64| {
        let mut p = vec![0.0; points + 1];
        p[0] = 1.0;
        if points > 0 {
            p[1] = x;
        }
        for k in 1..points {
            p[k + 1] = (x * p[k] - (k as f64).sqrt() * p[k - 1]) / ((k + 1) as f64).sqrt();
        }
        p
    };
    for xi in x.iter_mut() {
        for _ in 0..3 {
            let p = orthonormal(*xi);
            let dp = (points as f64).sqrt() * p[points - 1];
            if dp != 0.0 {
                *xi -= p[points] / dp;
            }
        }
    }
    // enforce exact symmetry of the rule
    for i in 0..points / 2 {
        let a = 0.5 * (x[points - 1 - i] - x[i]);
        x[i] = -a;
        x[points - 1 - i] = a;
    }
    if points % 2 == 1 {
        x[points / 2] = 0.0;
    }
    let w: Vec<f64> = x
        .iter()
        .map(|&xi| {
            let p = orthonormal(xi);
            1.0 / p[..points].iter().map(|v| v * v).sum::<f64>()
        })
        .collect();
    Ok((x, w))
}

/// Tensor Gauss–Hermite velocity grid with quadrature for Lebesgue measure.
#[derive(Clone, Debug)]
pub struct VelocityGrid {
    spec: GridSpec,
    tol: f64,
    axis_nodes: Vec<f64>,
    nodes: Vec<f64>,
    quad: Vec<f64>,
    sqrt_quad: Vec<f64>,
    mu: Vec<f64>,
    w: Vec<f64>,
}

/// Default moment tolerance for a grid with `points` nodes per axis.
pub fn default_grid_tol(points: usize) -> f64 {
    match points {
        0..=7 => 1e-6,
        8..=15 => 1e-8,
        _ => 1e-10,
    }
}

/// Builds the tensor grid and validates its Gaussian moments at the default
/// tolerance.
pub fn build_hermite_grid(n: usize, points_per_axis: usize, scaling: f64) -> Result<VelocityGrid> {
    build_hermite_grid_with_tol(n, points_per_axis, scaling, default_grid_tol(points_per_axis))
}

pub fn build_hermite_grid_with_tol(
    n: usize,
    points_per_axis: usize,
    scaling: f64,
    tol: f64,
) -> Result<VelocityGrid> {
    if n == 0 {
        return Err(Error::Input("grid dimension must be ≥ 1".into()));
    }
    if points_per_axis < 4 {
        return Err(Error::Input("points_per_axis must be ≥ 4".into()));
    }
    if !(scaling > 0.0 && scaling.is_finite()) {
        return Err(Error::Input("hermite_scaling must be positive".into()));
    }
    let total = points_per_axis
        .checked_pow(n as u32)
        .filter(|&t| t <= 1 << 22)
        .ok_or_else(|| Error::Input("grid too large".into()))?;
    let (x, pw) = gauss_hermite(points_per_axis)?;
    let sqrt2pi = (2.0 * std::f64::consts::PI).sqrt();
    let axis_nodes: Vec<f64> = x.iter().map(|xi| scaling * xi).collect();
    let axis_quad: Vec<f64> = x
        .iter()
        .zip(&pw)
        .map(|(xi, wi)| scaling * wi * sqrt2pi * (0.5 * xi * xi).exp())
        .collect();

    let mut nodes = Vec::with_capacity(total * n);
    let mut quad = Vec::with_capacity(total);
    for k in 0..total {
        let mut q = 1.0;
        let mut rem = k;
        for _ in 0..n {
            let i = rem % points_per_axis;
            rem /= points_per_axis;
            nodes.push(axis_nodes[i]);
            q *= axis_quad[i];
        }
        quad.push(q);
    }
    let norm = (2.0 * std::f64::consts::PI).powf(-(n as f64) / 2.0);
    let mut mu = Vec::with_capacity(total);
    let mut w = Vec::with_capacity(total);
    for k in 0..total {
        let r2: f64 = nodes[k * n..(k + 1) * n].iter().map(|v| v * v).sum();
        mu.push(norm * (-0.5 * r2).exp());
        w.push((1.0 + r2).sqrt());
    }
    let grid = VelocityGrid {
        spec: GridSpec {
            n,
            points_per_axis,
            hermite_scaling: scaling,
        },
        tol,
        axis_nodes,
        sqrt_quad: quad.iter().map(|q| q.sqrt()).collect(),
        nodes,
        quad,
        mu,
        w,
    };
    grid.check_moments()?;
    Ok(grid)
}

#[derive(Serialize)]
struct GridDump<'a> {
    spec: GridSpec,
    tol: f64,
    nodes: Vec<&'a [f64]>,
    quad_weights: &'a [f64],
    mu: &'a [f64],
    w: &'a [f64],
}

impl VelocityGrid {
    pub fn spec(&self) -> GridSpec {
        self.spec
    }
    pub fn n(&self) -> usize {
        self.spec.n
    }
    pub fn len(&self) -> usize {
        self.quad.len()
    }
    pub fn is_empty(&self) -> bool {
        self.quad.is_empty()
    }
    pub fn tol(&self) -> f64 {
        self.tol
    }
    pub fn points_per_axis(&self) -> usize {
        self.spec.points_per_axis
    }
    pub fn axis_nodes(&self) -> &[f64] {
        &self.axis_nodes
    }
    pub fn node(&self, k: usize) -> &[f64] {
        let n = self.spec.n;
        &self.nodes[k * n..(k + 1) * n]
    }
    pub fn quad(&self) -> &[f64] {
        &self.quad
    }
    pub fn sqrt_quad(&self) -> &[f64] {
        &self.sqrt_quad
    }
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }
    /// `⟨v_k⟩ = √(1+|v_k|²)`.
    pub fn weight(&self) -> &[f64] {
        &self.w
    }
    pub fn v_max(&self) -> f64 {
        self.axis_nodes.iter().fold(0.0, |a, b| a.max(b.abs()))
    }

    pub fn fingerprint(&self) -> GridFingerprint {
        GridFingerprint {
            spec: self.spec,
            nodes: self.len(),
            quad_sum: self.quad.iter().sum(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let dump = GridDump {
            spec: self.spec,
            tol: self.tol,
            nodes: (0..self.len()).map(|k| self.node(k)).collect(),
            quad_weights: &self.quad,
            mu: &self.mu,
            w: &self.w,
        };
        Ok(serde_json::to_string_pretty(&dump)?)
    }

    pub fn multi_index(&self, k: usize) -> Vec<usize> {
        let p = self.spec.points_per_axis;
        let mut rem = k;
        (0..self.spec.n)
            .map(|_| {
                let i = rem % p;
                rem /= p;
                i
            })
            .collect()
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let p = self.spec.points_per_axis;
        idx.iter().rev().fold(0, |acc, &i| acc * p + i)
    }

    /// Quadrature integral `∫ g dv`.
    pub fn integrate(&self, g: impl Fn(usize, &[f64]) -> f64) -> f64 {
        (0..self.len()).map(|k| self.quad[k] * g(k, self.node(k))).sum()
    }

    /// Gaussian moment `∫ g μ dv`.
    pub fn gaussian_moment(&self, g: impl Fn(&[f64]) -> f64) -> f64 {
        self.integrate(|k, v| self.mu[k] * g(v))
    }

    fn check_moments(&self) -> Result<()> {
        let n = self.spec.n;
        let tol = self.tol;
        let check = |name: String, value: f64, expected: f64| -> Result<()> {
            if (value - expected).abs() > tol * expected.abs().max(1.0) {
                Err(Error::GridQuality {
                    moment: name,
                    value,
                    expected,
                    tol,
                })
            } else {
                Ok(())
            }
        };
        if self.quad.iter().any(|&q| !(q > 0.0) || !q.is_finite()) {
            return Err(Error::GridQuality {
                moment: "quadrature positivity".into(),
                value: self.quad.iter().cloned().fold(f64::INFINITY, f64::min),
                expected: 0.0,
                tol,
            });
        }
        check("mass".into(), self.gaussian_moment(|_| 1.0), 1.0)?;
        for i in 0..n {
            check(format!("<v_{}>", i + 1), self.gaussian_moment(|v| v[i]), 0.0)?;
            for j in i..n {
                let expected = if i == j { 1.0 } else { 0.0 };
                check(
                    format!("<v_{} v_{}>", i + 1, j + 1),
                    self.gaussian_moment(|v| v[i] * v[j]),
                    expected,
                )?;
            }
        }
        let nf = n as f64;
        check(
            "<|v|^4>".into(),
            self.gaussian_moment(|v| v.iter().map(|x| x * x).sum::<f64>().powi(2)),
            nf * (nf + 2.0),
        )?;
        Ok(())
    }

    /// Samples a function of `v` on the nodes.
    pub fn sample(&self, f: impl Fn(&[f64]) -> C64) -> VelocityFunction {
        VelocityFunction::new((0..self.len()).map(|k| f(self.node(k))).collect())
    }

    pub fn sample_real(&self, f: impl Fn(&[f64]) -> f64) -> VelocityFunction {
        self.sample(|v| C64::new(f(v), 0.0))
    }

    /// `√μ` on the nodes.
    pub fn sqrt_mu(&self) -> VelocityFunction {
        VelocityFunction::new(self.mu.iter().map(|m| C64::new(m.sqrt(), 0.0)).collect())
    }

    /// Node permutation realising the orthogonal map `v ↦ (s_i v_{π(i)})_i`
    /// (`perm[i] = π(i)`, `flip[i]` negates output axis `i`). Result `σ`
    /// satisfies `node(σ[k]) = R node(k)`.
    pub fn symmetry_permutation(&self, perm: &[usize], flip: &[bool]) -> Vec<usize> {
        let p = self.spec.points_per_axis;
        (0..self.len())
            .map(|k| {
                let idx = self.multi_index(k);
                let image: Vec<usize> = (0..self.spec.n)
                    .map(|i| {
                        let j = idx[perm[i]];
                        if flip[i] { p - 1 - j } else { j }
                    })
                    .collect();
                self.flat_index(&image)
            })
            .collect()
    }

    /// Checks invariance of `f` under the generators of the grid's symmetry
    /// group (axis transpositions and a reflection), i.e. discrete radiality.
    pub fn is_radial(&self, f: &VelocityFunction, tol: f64) -> bool {
        let n = self.spec.n;
        let scale = f.values.iter().fold(0.0f64, |a, z| a.max(z.norm())).max(f64::MIN_POSITIVE);
        let mut gens = Vec::new();
        let mut flip = vec![false; n];
        flip[0] = true;
        gens.push(((0..n).collect::<Vec<_>>(), flip));
        for i in 0..n.saturating_sub(1) {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.swap(i, i + 1);
            gens.push((perm, vec![false; n]));
        }
        gens.iter().all(|(perm, flip)| {
            let sigma = self.symmetry_permutation(perm, flip);
            (0..self.len()).all(|k| (f.values[sigma[k]] - f.values[k]).norm() <= tol * scale)
        })
    }

    /// Three-point finite-difference derivative of order 1 or 2 along `axis`.
    pub fn derivative(&self, f: &VelocityFunction, axis: usize, order: usize) -> Result<VelocityFunction> {
        self.check(f)?;
        if axis >= self.spec.n {
            return Err(Error::Dimension(format!("axis {axis} out of range")));
        }
        let p = self.spec.points_per_axis;
        let stride = p.pow(axis as u32);
        let x = &self.axis_nodes;
        let mut out = vec![ZERO; self.len()];
        for (k, o) in out.iter_mut().enumerate() {
            let i = (k / stride) % p;
            let c = i.clamp(1, p - 2);
            let wts = lagrange3([x[c - 1], x[c], x[c + 1]], x[i], order);
            let base = k - i * stride;
            *o = (0..3)
                .map(|m| f.values[base + (c - 1 + m) * stride] * wts[m])
                .sum();
        }
        Ok(VelocityFunction::new(out))
    }

    fn check(&self, f: &VelocityFunction) -> Result<()> {
        if f.len() != self.len() {
            return Err(Error::Dimension(format!(
                "function has {} values, grid has {} nodes",
                f.len(),
                self.len()
            )));
        }
        Ok(())
    }
}

/// Nodal values of a complex velocity profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocityFunction {
    values: Vec<C64>,
}

impl VelocityFunction {
    pub fn new(values: Vec<C64>) -> Self {
        Self { values }
    }
    pub fn zeros(len: usize) -> Self {
        Self::new(vec![ZERO; len])
    }
    pub fn from_real(values: &[f64]) -> Self {
        Self::new(values.iter().map(|&x| C64::new(x, 0.0)).collect())
    }
    pub fn values(&self) -> &[C64] {
        &self.values
    }
    pub fn into_values(self) -> Vec<C64> {
        self.values
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
    pub fn scaled(&self, a: C64) -> Self {
        Self::new(self.values.iter().map(|z| z * a).collect())
    }
    /// `self + a·other`.
    pub fn axpy(&self, a: C64, other: &Self) -> Self {
        Self::new(self.values.iter().zip(&other.values).map(|(x, y)| x + a * y).collect())
    }
    pub fn sub(&self, other: &Self) -> Self {
        self.axpy(C64::new(-1.0, 0.0), other)
    }
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, z| a.max(z.norm()))
    }
}

/// `∫ w^ℓ f ḡ dv`.
pub fn weighted_inner(grid: &VelocityGrid, f: &VelocityFunction, g: &VelocityFunction, ell: f64) -> Result<C64> {
    grid.check(f)?;
    grid.check(g)?;
    Ok((0..grid.len())
        .map(|k| f.values[k] * g.values[k].conj() * (grid.quad[k] * grid.w[k].powf(ell)))
        .sum())
}

/// `∫ w^ℓ |f|² dv`.
pub fn weighted_norm_sq(grid: &VelocityGrid, f: &VelocityFunction, ell: f64) -> Result<f64> {
    grid.check(f)?;
    Ok((0..grid.len())
        .map(|k| f.values[k].norm_sqr() * grid.quad[k] * grid.w[k].powf(ell))
        .sum())
}

pub fn l2_norm_sq(grid: &VelocityGrid, f: &VelocityFunction) -> Result<f64> {
    weighted_norm_sq(grid, f, 0.0)
}

/// Lifted-paraboloid distance `√(|v−v′|² + ¼(|v|²−|v′|²)²)`.
pub fn paraboloid_distance(v: &[f64], vp: &[f64]) -> f64 {
    let d2: f64 = v.iter().zip(vp).map(|(a, b)| (a - b) * (a - b)).sum();
    let r: f64 = v.iter().map(|a| a * a).sum();
    let rp: f64 = vp.iter().map(|a| a * a).sum();
    (d2 + 0.25 * (r - rp) * (r - rp)).sqrt()
}

/// Weighted anisotropic grid norm squared `|f|²_{N^{s,γ}_ℓ}`:
/// `|w^ℓ f|²_{L²_{γ+2s}} + ΣΣ_{k≠k′} w_k^{γ+2s+1} w_k^{2ℓ} |f_{k′}−f_k|² d^{−n−2s} 1_{d≤1} q_k q_{k′}`.
pub fn nsg_norm(grid: &VelocityGrid, f: &VelocityFunction, params: &KernelParams, ell: f64) -> Result<f64> {
    let nu = params.nu_exp();
    nsg_generic(grid, f, params, |k, _| grid.w[k].powf(nu + 1.0 + 2.0 * ell), |k| {
        grid.w[k].powf(nu + 2.0 * ell)
    })
}

/// Unweighted symmetric form with `(w_k w_{k′})^{(γ+2s+1)/2}` in the
/// difference part.
pub fn nsg_norm_symmetric(grid: &VelocityGrid, f: &VelocityFunction, params: &KernelParams) -> Result<f64> {
    let nu = params.nu_exp();
    nsg_generic(
        grid,
        f,
        params,
        |k, kp| (grid.w[k] * grid.w[kp]).powf(0.5 * (nu + 1.0)),
        |k| grid.w[k].powf(nu),
    )
}

/// Just the `L²_{γ+2s}`-type part `∫ w^{γ+2s+2ℓ}|f|²` of [`nsg_norm`].
pub fn nsg_lower_part(grid: &VelocityGrid, f: &VelocityFunction, params: &KernelParams, ell: f64) -> Result<f64> {
    weighted_norm_sq(grid, f, params.nu_exp() + 2.0 * ell)
}

fn nsg_generic(
    grid: &VelocityGrid,
    f: &VelocityFunction,
    params: &KernelParams,
    pair_weight: impl Fn(usize, usize) -> f64,
    diag_weight: impl Fn(usize) -> f64,
) -> Result<f64> {
    grid.check(f)?;
    if params.n() != grid.n() {
        return Err(Error::Dimension("kernel and grid dimensions differ".into()));
    }
    let expo = grid.n() as f64 + 2.0 * params.s();
    let lower: f64 = (0..grid.len())
        .map(|k| grid.quad[k] * diag_weight(k) * f.values[k].norm_sqr())
        .sum();
    let mut diff = 0.0;
    for k in 0..grid.len() {
        let vk = grid.node(k);
        let mut row = 0.0;
        for kp in 0..grid.len() {
            if kp == k {
                continue;
            }
            let d = paraboloid_distance(vk, grid.node(kp));
            if d > 1.0 {
                continue;
            }
            let df = (f.values[kp] - f.values[k]).norm_sqr();
            if df == 0.0 {
                continue;
            }
            row += pair_weight(k, kp) * df / d.powf(expo) * grid.quad[kp];
        }
        diff += row * grid.quad[k];
    }
    Ok(lower + diff)
}

/// `Σ_{|β|≤m} ∫ w^ℓ |∂_β f|²` with three-point finite differences.
pub fn sobolev_norm(grid: &VelocityGrid, f: &VelocityFunction, m: usize, ell: f64) -> Result<f64> {
    if m > 2 {
        return Err(Error::Unsupported(format!("Sobolev order {m} > 2")));
    }
    let mut total = weighted_norm_sq(grid, f, ell)?;
    if m >= 1 {
        let first: Vec<VelocityFunction> = (0..grid.n())
            .map(|i| grid.derivative(f, i, 1))
            .collect::<Result<_>>()?;
        for d in &first {
            total += weighted_norm_sq(grid, d, ell)?;
        }
        if m == 2 {
            for i in 0..grid.n() {
                total += weighted_norm_sq(grid, &grid.derivative(f, i, 2)?, ell)?;
                for j in i + 1..grid.n() {
                    total += weighted_norm_sq(grid, &grid.derivative(&first[i], j, 1)?, ell)?;
                }
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_fn(grid: &VelocityGrid, seed: u64) -> VelocityFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        VelocityFunction::new(
            (0..grid.len())
                .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect(),
        )
    }

    #[test]
    fn regimes() {
        assert!(KernelParams::new(3, 1.0, 0.25, Regime::Hard).is_ok());
        assert!(KernelParams::new(3, -1.0, 0.25, Regime::Hard).is_err());
        assert!(KernelParams::new(3, -2.0, 0.5, Regime::Soft).is_ok());
        // γ+2s must exceed −n/2
        assert!(KernelParams::new(3, -2.9, 0.05, Regime::Soft).is_err());
        assert!(KernelParams::new(3, 0.0, 1.0, Regime::Hard).is_err());
        let p = KernelParams::infer(3, -2.0, 0.5).unwrap();
        assert_eq!(p.regime(), Regime::Soft);
        assert_eq!(p.nu_exp(), -1.0);
    }

    #[test]
    fn hermite_rule_exact_moments() {
        let (x, w) = gauss_hermite(16).unwrap();
        let m = |k: i32| x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum::<f64>();
        assert!((m(0) - 1.0).abs() < 1e-14);
        assert!((m(2) - 1.0).abs() < 1e-13);
        assert!((m(4) - 3.0).abs() < 1e-12);
        assert!((m(10) - 945.0).abs() < 1e-9);
    }

    #[test]
    fn grid_examples() {
        let g1 = build_hermite_grid(1, 16, 1.0).unwrap();
        assert!((g1.gaussian_moment(|v| v[0] * v[0]) - 1.0).abs() < 1e-10);
        let g3 = build_hermite_grid(3, 8, 1.0).unwrap();
        assert_eq!(g3.len(), 512);
        assert!((g3.gaussian_moment(|_| 1.0) - 1.0).abs() < 1e-8);
        assert!((g3.gaussian_moment(|v| v[0].powi(4)) - 3.0).abs() < 1e-8);
        assert!(g3.quad().iter().all(|&q| q > 0.0));
    }

    #[test]
    fn poor_scaling_reports_offending_moment() {
        match build_hermite_grid(1, 4, 3.0) {
            Err(Error::GridQuality { moment, .. }) => assert!(!moment.is_empty()),
            other => panic!("expected grid-quality error, got {other:?}"),
        }
    }

    #[test]
    fn grid_json_roundtrip_fields() {
        let g = build_hermite_grid(2, 4, 1.0).unwrap();
        let v: serde_json::Value = serde_json::from_str(&g.to_json().unwrap()).unwrap();
        assert_eq!(v["nodes"].as_array().unwrap().len(), 16);
        assert_eq!(v["quad_weights"].as_array().unwrap().len(), 16);
    }

    #[test]
    fn inner_product_examples() {
        let g = build_hermite_grid(3, 8, 1.0).unwrap();
        let e0 = g.sqrt_mu();
        let e1 = g.sample_real(|v| v[0] * (-0.25 * v.iter().map(|x| x * x).sum::<f64>()).exp()
            * (2.0 * std::f64::consts::PI).powf(-0.75));
        let tol = g.tol();
        assert!((weighted_inner(&g, &e0, &e0, 0.0).unwrap() - 1.0).norm() < tol);
        assert!(weighted_inner(&g, &e0, &e1, 0.0).unwrap().norm() < tol);
        // ∫⟨v⟩²μ = 1 + n
        assert!((weighted_inner(&g, &e0, &e0, 2.0).unwrap() - 4.0).norm() < 4.0 * tol);
        let other = build_hermite_grid(2, 8, 1.0).unwrap();
        assert!(matches!(
            weighted_inner(&other, &e0, &e0, 0.0),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn sesquilinearity() {
        let g = build_hermite_grid(2, 6, 1.0).unwrap();
        let (f, h, k) = (random_fn(&g, 1), random_fn(&g, 2), random_fn(&g, 3));
        let a = C64::new(0.3, -1.7);
        let lhs = weighted_inner(&g, &f.axpy(a, &h), &k, 1.5).unwrap();
        let rhs = weighted_inner(&g, &f, &k, 1.5).unwrap() + a * weighted_inner(&g, &h, &k, 1.5).unwrap();
        assert!((lhs - rhs).norm() < 1e-12 * lhs.norm().max(1.0));
        let lhs = weighted_inner(&g, &k, &f.axpy(a, &h), 1.5).unwrap();
        let rhs = weighted_inner(&g, &k, &f, 1.5).unwrap() + a.conj() * weighted_inner(&g, &k, &h, 1.5).unwrap();
        assert!((lhs - rhs).norm() < 1e-12 * lhs.norm().max(1.0));
        let ff = weighted_inner(&g, &f, &f, 1.0).unwrap();
        assert!(ff.re >= 0.0 && ff.im.abs() < 1e-14 * ff.re);
        let fk = weighted_inner(&g, &f, &k, 0.5).unwrap();
        let kf = weighted_inner(&g, &k, &f, 0.5).unwrap();
        assert!((fk - kf.conj()).norm() < 1e-13);
    }

    #[test]
    fn nsg_constant_function() {
        // constant f: difference part vanishes; γ+2s = 0 leaves the truncated mass
        let g = build_hermite_grid(2, 6, 1.0).unwrap();
        let p = KernelParams::new(2, -0.5, 0.25, Regime::Hard).unwrap();
        let c = C64::new(2.0, 1.0);
        let f = VelocityFunction::new(vec![c; g.len()]);
        let mass: f64 = g.quad().iter().sum();
        assert!((nsg_norm(&g, &f, &p, 0.0).unwrap() - 5.0 * mass).abs() < 1e-10 * mass);
        assert!((nsg_norm_symmetric(&g, &f, &p).unwrap() - 5.0 * mass).abs() < 1e-10 * mass);
    }

    #[test]
    fn nsg_ordering_on_smooth_functions() {
        let g = build_hermite_grid(2, 12, 1.0).unwrap();
        let p = KernelParams::new(2, 0.0, 0.5, Regime::Hard).unwrap();
        let mut ratios = Vec::new();
        for seed in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (a, b, c) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.5..1.5));
            let f = g.sample_real(|v| (a * v[0] + b * v[1] * v[1] + 1.0) * (-0.25 * c * (v[0] * v[0] + v[1] * v[1])).exp());
            let lower = nsg_lower_part(&g, &f, &p, 0.0).unwrap();
            let full = nsg_norm(&g, &f, &p, 0.0).unwrap();
            let h1 = sobolev_norm(&g, &f, 1, p.nu_exp()).unwrap();
            assert!(full >= lower);
            ratios.push(full / h1);
        }
        let spread = ratios.iter().cloned().fold(0.0, f64::max) / ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread < 10.0, "grid comparison constant unstable: {ratios:?}");
    }

    #[test]
    fn sobolev_examples() {
        // three-point stencils on Hermite nodes (spacing ~ N^{-1/2}) converge like 1/N
        let fd_tol = |n: usize, p: usize| n as f64 * 1.2 / p as f64;
        let g = build_hermite_grid(1, 48, 1.0).unwrap();
        let sm = g.sqrt_mu();
        assert!((sobolev_norm(&g, &sm, 0, 0.0).unwrap() - 1.0).abs() < 1e-10);
        let e48 = sobolev_norm(&g, &sm, 1, 0.0).unwrap() - 1.25;
        assert!(e48.abs() < fd_tol(1, 48), "H1 error {e48}");
        let g96 = build_hermite_grid(1, 96, 1.0).unwrap();
        let e96 = sobolev_norm(&g96, &g96.sqrt_mu(), 1, 0.0).unwrap() - 1.25;
        assert!(e96.abs() < 0.6 * e48.abs());
        let g3 = build_hermite_grid(3, 16, 1.0).unwrap();
        let h1 = sobolev_norm(&g3, &g3.sqrt_mu(), 1, 0.0).unwrap();
        assert!((h1 - 1.75).abs() < fd_tol(3, 16), "H1 = {h1}");
        let c = VelocityFunction::new(vec![C64::new(1.0, 0.0); g3.len()]);
        let mass = weighted_norm_sq(&g3, &c, 0.0).unwrap();
        assert!((sobolev_norm(&g3, &c, 2, 0.0).unwrap() - mass).abs() < 1e-9 * mass);
        assert!(matches!(sobolev_norm(&g3, &c, 3, 0.0), Err(Error::Unsupported(_))));
    }

    #[test]
    fn radiality_detection() {
        let g = build_hermite_grid(3, 6, 1.0).unwrap();
        assert!(g.is_radial(&g.sqrt_mu(), 1e-14));
        let f = g.sample_real(|v| v[1]);
        assert!(!g.is_radial(&f, 1e-6));
    }

    proptest! {
        #[test]
        fn metric_properties(a in prop::array::uniform3(-5.0f64..5.0), b in prop::array::uniform3(-5.0f64..5.0)) {
            let d = paraboloid_distance(&a, &b);
            prop_assert!((d - paraboloid_distance(&b, &a)).abs() <= 1e-12 * d.max(1.0));
            prop_assert_eq!(paraboloid_distance(&a, &a), 0.0);
            let eu: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            prop_assert!(d >= eu * (1.0 - 1e-15));
        }

        #[test]
        fn nsg_lower_bound(seed in 0u64..1000, ell in 0.0f64..2.0) {
            let g = build_hermite_grid(1, 10, 1.0).unwrap();
            let p = KernelParams::new(1, 0.5, 0.3, Regime::Hard).unwrap();
            let f = random_fn(&g, seed);
            prop_assert!(nsg_norm(&g, &f, &p, ell).unwrap() >= nsg_lower_part(&g, &f, &p, ell).unwrap());
        }
    }
}
