//! Macroscopic projection, the model collision operator and the frequency
//! symbol `B̂(ξ) = 2πi v·ξ + L`.
//!
//! All matrices here act on quadrature-orthonormal coordinates
//! `y_k = √q_k f(v_k)`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::linalg::{sym_eigen, to_complex, CMat, RMat};
use crate::velocity::{GridFingerprint, KernelParams, Regime, VelocityFunction, VelocityGrid};
use crate::{C64, Error, Result};

/// The `n+2` collision invariants `√μ, v_i√μ, (|v|²−n)√μ/√(2n)`.
#[derive(Clone, Debug)]
pub struct MacroBasis {
    functions: Vec<VelocityFunction>,
    /// Orthonormalised basis columns in quadrature-orthonormal coordinates.
    ortho: RMat,
    /// Inverse Gram matrix, maps inner products to expansion coefficients.
    gram_inv: RMat,
    gram_error: f64,
}

impl MacroBasis {
    pub fn new(grid: &VelocityGrid) -> Result<Self> {
        let n = grid.n();
        let nf = n as f64;
        let len = grid.len();
        let mut functions = Vec::with_capacity(n + 2);
        functions.push(grid.sqrt_mu());
        for i in 0..n {
            functions.push(VelocityFunction::from_real(
                &(0..len).map(|k| grid.node(k)[i] * grid.mu()[k].sqrt()).collect::<Vec<_>>(),
            ));
        }
        functions.push(VelocityFunction::from_real(
            &(0..len)
                .map(|k| {
                    let r2: f64 = grid.node(k).iter().map(|x| x * x).sum();
                    (r2 - nf) * grid.mu()[k].sqrt() / (2.0 * nf).sqrt()
                })
                .collect::<Vec<_>>(),
        ));
        let m = n + 2;
        let sq = grid.sqrt_quad();
        let raw = RMat::from_fn(len, m, |k, a| sq[k] * functions[a].values()[k].re);
        let gram = raw.transpose() * &raw;
        let mut gram_error = 0.0f64;
        for a in 0..m {
            for b in 0..m {
                let target = if a == b { 1.0 } else { 0.0 };
                gram_error = gram_error.max((gram[(a, b)] - target).abs());
            }
        }
        // Tolerance accounts for the degree-4 and degree-6 moments entering the energy row.
        if gram_error > 100.0 * grid.tol() {
            return Err(Error::GridQuality {
                moment: "macro basis Gram matrix".into(),
                value: gram_error,
                expected: 0.0,
                tol: 100.0 * grid.tol(),
            });
        }
        let (vals, vecs) = sym_eigen(&gram)?;
        let inv_sqrt = RMat::from_fn(m, m, |a, b| {
            (0..m).map(|c| vecs[(a, c)] * vecs[(b, c)] / vals[c].sqrt()).sum()
        });
        let gram_inv = RMat::from_fn(m, m, |a, b| {
            (0..m).map(|c| vecs[(a, c)] * vecs[(b, c)] / vals[c]).sum()
        });
        let ortho = &raw * &inv_sqrt;
        Ok(Self {
            functions,
            ortho,
            gram_inv,
            gram_error,
        })
    }

    pub fn functions(&self) -> &[VelocityFunction] {
        &self.functions
    }
    pub fn len(&self) -> usize {
        self.functions.len()
    }
    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }
    /// `max |G − I|` of the Gram matrix.
    pub fn gram_error(&self) -> f64 {
        self.gram_error
    }
    /// Orthonormal basis of `range(P)` in quadrature-orthonormal coordinates.
    pub fn ortho(&self) -> &RMat {
        &self.ortho
    }

    /// `P` applied in orthonormal coordinates.
    pub fn project_coords(&self, y: &[C64]) -> Vec<C64> {
        let q = &self.ortho;
        let m = q.ncols();
        let c: Vec<C64> = (0..m)
            .map(|a| q.col_as_slice(a).iter().zip(y).map(|(qa, yk)| yk * *qa).sum())
            .collect();
        (0..q.nrows())
            .map(|k| (0..m).map(|a| c[a] * q[(k, a)]).sum())
            .collect()
    }

    /// `(I−P)` applied in orthonormal coordinates.
    pub fn micro_coords(&self, y: &[C64]) -> Vec<C64> {
        let p = self.project_coords(y);
        y.iter().zip(&p).map(|(a, b)| a - b).collect()
    }

    /// Dense `P` in orthonormal coordinates.
    pub fn projector(&self) -> RMat {
        &self.ortho * self.ortho.transpose()
    }
}

/// Output of [`project_p`].
#[derive(Clone, Debug)]
pub struct MacroProjection {
    pub a: C64,
    pub b: Vec<C64>,
    pub c: C64,
    pub pf: VelocityFunction,
}

impl MacroProjection {
    pub fn coefficients(&self) -> Vec<C64> {
        let mut v = vec![self.a];
        v.extend_from_slice(&self.b);
        v.push(self.c);
        v
    }
}

pub fn to_coords(grid: &VelocityGrid, f: &VelocityFunction) -> Vec<C64> {
    f.values().iter().zip(grid.sqrt_quad()).map(|(v, s)| v * *s).collect()
}

pub fn from_coords(grid: &VelocityGrid, y: &[C64]) -> VelocityFunction {
    VelocityFunction::new(y.iter().zip(grid.sqrt_quad()).map(|(v, s)| v / *s).collect())
}

/// Macroscopic coefficients `(a, b, c)` and `Pf`.
pub fn project_p(grid: &VelocityGrid, basis: &MacroBasis, f: &VelocityFunction) -> Result<MacroProjection> {
    if f.len() != grid.len() {
        return Err(Error::Dimension("function does not live on this grid".into()));
    }
    let m = basis.len();
    let inner: Vec<C64> = basis
        .functions
        .iter()
        .map(|e| {
            (0..grid.len())
                .map(|k| f.values()[k] * (grid.quad()[k] * e.values()[k].re))
                .sum()
        })
        .collect();
    let coef: Vec<C64> = (0..m)
        .map(|a| (0..m).map(|b| inner[b] * basis.gram_inv[(a, b)]).sum())
        .collect();
    let pf = VelocityFunction::new(
        (0..grid.len())
            .map(|k| (0..m).map(|a| coef[a] * basis.functions[a].values()[k].re).sum())
            .collect(),
    );
    Ok(MacroProjection {
        a: coef[0],
        b: coef[1..m - 1].to_vec(),
        c: coef[m - 1],
        pf,
    })
}

/// A validated discrete linearised collision operator.
#[derive(Clone, Debug)]
pub struct KineticOperator {
    params: KernelParams,
    grid: Arc<VelocityGrid>,
    basis: Arc<MacroBasis>,
    matrix: Arc<RMat>,
    lambda: f64,
}

impl KineticOperator {
    pub fn params(&self) -> &KernelParams {
        &self.params
    }
    pub fn grid(&self) -> &Arc<VelocityGrid> {
        &self.grid
    }
    pub fn basis(&self) -> &Arc<MacroBasis> {
        &self.basis
    }
    /// Matrix in quadrature-orthonormal coordinates.
    pub fn matrix(&self) -> &RMat {
        &self.matrix
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn apply(&self, f: &VelocityFunction) -> Result<VelocityFunction> {
        if f.len() != self.grid.len() {
            return Err(Error::Dimension("function does not live on this grid".into()));
        }
        let y = to_coords(&self.grid, f);
        Ok(from_coords(&self.grid, &crate::linalg::rmatvec(&self.matrix, &y)))
    }

    /// `⟨Lg, g⟩`.
    pub fn quadratic_form(&self, g: &VelocityFunction) -> Result<C64> {
        let lg = self.apply(g)?;
        crate::velocity::weighted_inner(&self.grid, &lg, g, 0.0)
    }

    /// Smallest eigenvalue of `L` on the microscopic subspace (L² sense).
    pub fn microscopic_gap(&self) -> Result<f64> {
        let z = micro_complement(&self.basis)?;
        let a = z.transpose() * (&*self.matrix * &z);
        Ok(sym_eigen(&a)?.0[0])
    }
}

/// `L = (I−P)·diag(⟨v⟩^{γ+2s})·(I−P)`.
pub fn build_model_l(params: &KernelParams, grid: &Arc<VelocityGrid>) -> Result<KineticOperator> {
    if params.n() != grid.n() {
        return Err(Error::Dimension("kernel and grid dimensions differ".into()));
    }
    let basis = Arc::new(MacroBasis::new(grid)?);
    let len = grid.len();
    let p = basis.projector();
    let q = RMat::from_fn(len, len, |i, j| if i == j { 1.0 } else { 0.0 } - p[(i, j)]);
    let nu = params.nu_exp();
    let wq = RMat::from_fn(len, len, |i, j| grid.weight()[i].powf(nu) * q[(i, j)]);
    let l = &q * &wq;
    let l = RMat::from_fn(len, len, |i, j| 0.5 * (l[(i, j)] + l[(j, i)]));
    Ok(KineticOperator {
        params: params.clone(),
        grid: grid.clone(),
        basis,
        matrix: Arc::new(l),
        lambda: 1.0,
    })
}

/// Orthonormal basis of `range(I−P)` in orthonormal coordinates.
fn micro_complement(basis: &MacroBasis) -> Result<RMat> {
    let p = basis.projector();
    let len = p.nrows();
    let q = RMat::from_fn(len, len, |i, j| if i == j { 1.0 } else { 0.0 } - p[(i, j)]);
    let (vals, vecs) = sym_eigen(&q)?;
    let cols: Vec<usize> = (0..len).filter(|&c| vals[c] > 0.5).collect();
    Ok(RMat::from_fn(len, cols.len(), |i, j| vecs[(i, cols[j])]))
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CheckItem {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub tol: f64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

impl CheckItem {
    pub fn le(name: &str, value: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            pass: value <= tol,
            value,
            tol,
            note: String::new(),
        }
    }
    pub fn ge(name: &str, value: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            pass: value >= tol,
            value,
            tol,
            note: String::new(),
        }
    }
    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }
}

/// Structural validation of a candidate operator.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationReport {
    pub items: Vec<CheckItem>,
    /// Largest `λ` with `⟨g,Lg⟩ ≥ λ|(I−P)g|²_{L²_{γ+2s}}`.
    pub lambda: f64,
    pub microscopic_gap: f64,
    pub passed: bool,
}

/// Tolerances for [`validate_operator`].
#[derive(Clone, Copy, Debug)]
pub struct ValidationTolerances {
    pub symmetry: f64,
    pub null_space: f64,
    pub nonnegativity: f64,
    pub min_lambda: f64,
}

impl Default for ValidationTolerances {
    fn default() -> Self {
        Self {
            symmetry: 1e-10,
            null_space: 1e-10,
            nonnegativity: 1e-10,
            min_lambda: 1e-8,
        }
    }
}

/// Runs every structural check and always returns the report.
pub fn inspect_operator(
    matrix: &RMat,
    params: &KernelParams,
    grid: &VelocityGrid,
    tol: ValidationTolerances,
) -> Result<ValidationReport> {
    let len = grid.len();
    if matrix.nrows() != len || matrix.ncols() != len {
        return Err(Error::Dimension(format!(
            "candidate is {}x{}, grid has {len} nodes",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    if params.n() != grid.n() {
        return Err(Error::Dimension("kernel and grid dimensions differ".into()));
    }
    let basis = MacroBasis::new(grid)?;
    let scale = matrix.norm_max().max(1.0);
    let mut asym = 0.0f64;
    for i in 0..len {
        for j in 0..i {
            asym = asym.max((matrix[(i, j)] - matrix[(j, i)]).abs());
        }
    }
    let mut items = vec![CheckItem::le("symmetry", asym / scale, tol.symmetry)];

    let le = matrix * basis.ortho();
    let null = le.norm_max();
    items.push(CheckItem::le("null_space", null, tol.null_space * scale));

    let sym = RMat::from_fn(len, len, |i, j| 0.5 * (matrix[(i, j)] + matrix[(j, i)]));
    let (vals, _) = sym_eigen(&sym)?;
    items.push(CheckItem::ge("nonnegativity", vals[0], -tol.nonnegativity * scale));

    let z = micro_complement(&basis)?;
    let a = z.transpose() * (&sym * &z);
    let gap = sym_eigen(&a)?.0[0];
    let nu = params.nu_exp();
    let bz = RMat::from_fn(len, z.ncols(), |i, j| grid.weight()[i].powf(nu) * z[(i, j)]);
    let b = z.transpose() * &bz;
    let (bv, bu) = sym_eigen(&b)?;
    if bv[0] <= 0.0 {
        return Err(Error::Numerical("weighted Gram matrix not positive definite".into()));
    }
    let m = b.nrows();
    let binv = RMat::from_fn(m, m, |i, j| {
        (0..m).map(|c| bu[(i, c)] * bu[(j, c)] / bv[c].sqrt()).sum()
    });
    let pencil = &binv * (&a * &binv);
    let pencil = RMat::from_fn(m, m, |i, j| 0.5 * (pencil[(i, j)] + pencil[(j, i)]));
    let lambda = sym_eigen(&pencil)?.0[0];
    items.push(CheckItem::ge("coercivity", lambda, tol.min_lambda));

    let passed = items.iter().all(|c| c.pass);
    Ok(ValidationReport {
        items,
        lambda,
        microscopic_gap: gap,
        passed,
    })
}

/// Admits a candidate operator: fails with itemised diagnostics if any
/// structural invariant is violated.
pub fn validate_operator(
    matrix: RMat,
    params: &KernelParams,
    grid: &Arc<VelocityGrid>,
) -> Result<KineticOperator> {
    let report = inspect_operator(&matrix, params, grid, ValidationTolerances::default())?;
    if !report.passed {
        let failed: Vec<String> = report
            .items
            .iter()
            .filter(|c| !c.pass)
            .map(|c| format!("{} (value {:.3e}, tol {:.1e})", c.name, c.value, c.tol))
            .collect();
        return Err(Error::Rejected(failed.join("; ")));
    }
    Ok(KineticOperator {
        params: params.clone(),
        grid: grid.clone(),
        basis: Arc::new(MacroBasis::new(grid)?),
        matrix: Arc::new(matrix),
        lambda: report.lambda,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub gamma: f64,
    pub s: f64,
    #[serde(default)]
    pub regime: Option<Regime>,
}

impl KernelSpec {
    pub fn build(&self, n: usize) -> Result<KernelParams> {
        match self.regime {
            Some(r) => KernelParams::new(n, self.gamma, self.s, r),
            None => KernelParams::infer(n, self.gamma, self.s),
        }
    }
}

/// On-disk exchange format for candidate operators.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorFile {
    pub fingerprint: GridFingerprint,
    pub kernel: KernelSpec,
    /// Always `"quadrature-orthonormal"`: entries act on `√q_k f(v_k)`.
    pub coordinates: String,
    pub matrix: Vec<Vec<f64>>,
}

pub const COORDINATES: &str = "quadrature-orthonormal";

impl OperatorFile {
    pub fn from_operator(op: &KineticOperator) -> Self {
        let m = op.matrix();
        Self {
            fingerprint: op.grid.fingerprint(),
            kernel: KernelSpec {
                gamma: op.params.gamma(),
                s: op.params.s(),
                regime: Some(op.params.regime()),
            },
            coordinates: COORDINATES.into(),
            matrix: (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    /// Checks the fingerprint against `grid` and returns the dense matrix.
    pub fn to_matrix(&self, grid: &VelocityGrid) -> Result<RMat> {
        if self.coordinates != COORDINATES {
            return Err(Error::Input(format!("unknown coordinate convention {:?}", self.coordinates)));
        }
        if !self.fingerprint.matches(&grid.fingerprint()) {
            return Err(Error::Dimension("operator was assembled on a different grid".into()));
        }
        let len = grid.len();
        if self.matrix.len() != len || self.matrix.iter().any(|r| r.len() != len) {
            return Err(Error::Dimension("matrix shape does not match the grid".into()));
        }
        Ok(RMat::from_fn(len, len, |i, j| self.matrix[i][j]))
    }
}

/// `B̂(κω) = 2πiκ diag(v·ω) + L` in orthonormal coordinates.
#[derive(Clone, Debug)]
pub struct ModeOperator {
    kappa: f64,
    omega: Vec<f64>,
    kinetic: KineticOperator,
    matrix: CMat,
}

pub fn build_mode_operator(l: &KineticOperator, kappa: f64, omega: &[f64]) -> Result<ModeOperator> {
    let n = l.grid.n();
    if omega.len() != n {
        return Err(Error::Dimension(format!("direction has {} components, n = {n}", omega.len())));
    }
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(Error::Input(format!("kappa = {kappa} must be finite and ≥ 0")));
    }
    let norm: f64 = omega.iter().map(|x| x * x).sum::<f64>().sqrt();
    if kappa > 0.0 && (norm - 1.0).abs() > 1e-12 {
        return Err(Error::Input(format!("|omega| = {norm} is not 1")));
    }
    let mut matrix = to_complex(l.matrix());
    if kappa > 0.0 {
        for k in 0..l.grid.len() {
            let vw: f64 = l.grid.node(k).iter().zip(omega).map(|(a, b)| a * b).sum();
            matrix[(k, k)] += C64::new(0.0, 2.0 * PI * kappa * vw);
        }
    }
    Ok(ModeOperator {
        kappa,
        omega: omega.to_vec(),
        kinetic: l.clone(),
        matrix,
    })
}

/// Unit vector along `axis`.
pub fn axis_direction(n: usize, axis: usize) -> Vec<f64> {
    (0..n).map(|i| if i == axis { 1.0 } else { 0.0 }).collect()
}

impl ModeOperator {
    pub fn kappa(&self) -> f64 {
        self.kappa
    }
    pub fn omega(&self) -> &[f64] {
        &self.omega
    }
    pub fn kinetic(&self) -> &KineticOperator {
        &self.kinetic
    }
    pub fn grid(&self) -> &Arc<VelocityGrid> {
        &self.kinetic.grid
    }
    /// Matrix in orthonormal coordinates.
    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn apply(&self, f: &VelocityFunction) -> Result<VelocityFunction> {
        let grid = &self.kinetic.grid;
        if f.len() != grid.len() {
            return Err(Error::Dimension("function does not live on this grid".into()));
        }
        let y = to_coords(grid, f);
        Ok(from_coords(grid, &crate::linalg::matvec(&self.matrix, &y)))
    }
}

/// Block reduction of `B̂(κ e_axis)` to the subspace of profiles invariant under
/// the grid symmetries fixing `e_axis` (reflections and permutations of the
/// remaining axes).
#[derive(Clone, Debug)]
pub struct AxialReduction {
    axis: usize,
    /// Orbit index of every node.
    orbit_of: Vec<usize>,
    /// `U`: orthonormal columns spanning the invariant subspace.
    basis: RMat,
    /// `v_axis` on each orbit.
    velocity: Vec<f64>,
}

impl AxialReduction {
    pub fn new(grid: &VelocityGrid, axis: usize) -> Result<Self> {
        let n = grid.n();
        if axis >= n {
            return Err(Error::Dimension(format!("axis {axis} out of range")));
        }
        let p = grid.points_per_axis();
        let mut keys: BTreeMap<(usize, Vec<usize>), usize> = BTreeMap::new();
        let mut orbit_of = Vec::with_capacity(grid.len());
        for k in 0..grid.len() {
            let idx = grid.multi_index(k);
            let mut rest: Vec<usize> = (0..n)
                .filter(|&d| d != axis)
                .map(|d| idx[d].min(p - 1 - idx[d]))
                .collect();
            rest.sort_unstable();
            let next = keys.len();
            let o = *keys.entry((idx[axis], rest)).or_insert(next);
            orbit_of.push(o);
        }
        let r = keys.len();
        let mut counts = vec![0usize; r];
        for &o in &orbit_of {
            counts[o] += 1;
        }
        let basis = RMat::from_fn(grid.len(), r, |k, o| {
            if orbit_of[k] == o {
                1.0 / (counts[o] as f64).sqrt()
            } else {
                0.0
            }
        });
        let mut velocity = vec![0.0; r];
        for k in 0..grid.len() {
            velocity[orbit_of[k]] = grid.node(k)[axis];
        }
        Ok(Self {
            axis,
            orbit_of,
            basis,
            velocity,
        })
    }

    pub fn axis(&self) -> usize {
        self.axis
    }
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
    pub fn basis(&self) -> &RMat {
        &self.basis
    }
    pub fn orbit_of(&self) -> &[usize] {
        &self.orbit_of
    }

    /// `UᵀLU`, after checking that `range(U)` is `L`-invariant.
    pub fn reduce_kinetic(&self, l: &KineticOperator) -> Result<RMat> {
        let lu = l.matrix() * &self.basis;
        let red = self.basis.transpose() * &lu;
        let back = &self.basis * &red;
        let mut err = 0.0f64;
        for j in 0..lu.ncols() {
            for i in 0..lu.nrows() {
                err = err.max((lu[(i, j)] - back[(i, j)]).abs());
            }
        }
        if err > 1e-10 * l.matrix().norm_max().max(1.0) {
            return Err(Error::Unsupported(format!(
                "operator does not commute with the grid symmetries (defect {err:.2e}); \
                 symmetry reduction unavailable"
            )));
        }
        Ok(red)
    }

    /// Reduced `B̂(κ e_axis)` from a reduced kinetic block.
    pub fn reduced_mode(&self, reduced_l: &RMat, kappa: f64) -> CMat {
        let mut m = to_complex(reduced_l);
        for (o, v) in self.velocity.iter().enumerate() {
            m[(o, o)] += C64::new(0.0, 2.0 * PI * kappa * v);
        }
        m
    }

    /// `Uᵀ y`; exact for symmetric `y`.
    pub fn restrict(&self, y: &[C64]) -> Vec<C64> {
        (0..self.dim())
            .map(|o| self.basis.col_as_slice(o).iter().zip(y).map(|(u, v)| v * *u).sum())
            .collect()
    }

    /// `U z`.
    pub fn lift(&self, z: &[C64]) -> Vec<C64> {
        (0..self.orbit_of.len())
            .map(|k| {
                let o = self.orbit_of[k];
                z[o] * self.basis[(k, o)]
            })
            .collect()
    }
}
