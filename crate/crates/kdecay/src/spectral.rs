//! Small-frequency spectral analysis of `B̂(κe₁)`: the `n+2` eigenvalue
//! branches bifurcating from the null space, their expansions
//! `ζ_j = iζ⁽¹⁾κ + ζ⁽²⁾κ² + O(κ³)`, eigenprojections, the projection
//! estimates and the reduced dispersion system.

use std::f64::consts::PI;

use faer::linalg::solvers::Solve;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{eigen_decompose, frobenius, matvec, norm2, opnorm2, sym_eigen, to_complex, CMat, RMat};
use crate::operators::{axis_direction, build_mode_operator, CheckItem, KineticOperator, ModeOperator};
use crate::velocity::Regime;
use crate::{C64, Error, Result};

/// Full spectrum with right eigenvectors (columns) and left eigenvectors
/// (rows of `V^{-1}`).
#[derive(Clone, Debug)]
pub struct ModeSpectrum {
    pub values: Vec<C64>,
    pub right: CMat,
    pub left: CMat,
    /// `‖(B−ζ)r‖/‖r‖` per eigenpair.
    pub residuals: Vec<f64>,
    pub condition: f64,
    pub norm: f64,
}

pub fn eig_matrix(b: &CMat) -> Result<ModeSpectrum> {
    if !crate::linalg::is_finite(b) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    let ed = eigen_decompose(b).map_err(|e| Error::Numerical(format!("{e}; matrix size {}", b.nrows())))?;
    let br = b * &ed.right;
    let residuals = (0..ed.values.len())
        .map(|i| {
            let r = ed.right.col_as_slice(i);
            let num: f64 = br.col_as_slice(i).iter().zip(r).map(|(a, v)| (a - ed.values[i] * v).norm_sqr()).sum();
            num.sqrt() / norm2(r).max(f64::MIN_POSITIVE)
        })
        .collect();
    Ok(ModeSpectrum {
        values: ed.values,
        right: ed.right,
        left: ed.left,
        residuals,
        condition: ed.condition,
        norm: opnorm2(b)?,
    })
}

pub fn eig_mode(op: &ModeOperator) -> Result<ModeSpectrum> {
    eig_matrix(op.matrix())
}

/// `P = R·L` with `R` (N×m) and `L` (m×N).
#[derive(Clone, Debug)]
pub struct FactoredProjection {
    pub right: CMat,
    pub left: CMat,
}

impl FactoredProjection {
    pub fn rank(&self) -> usize {
        self.right.ncols()
    }

    pub fn dense(&self) -> CMat {
        &self.right * &self.left
    }

    pub fn apply(&self, y: &[C64]) -> Vec<C64> {
        matvec(&self.right, &matvec(&self.left, y))
    }

    /// `‖P² − P‖_F`.
    pub fn idempotence_defect(&self) -> f64 {
        let lr = &self.left * &self.right;
        let m = lr.nrows();
        let d = CMat::from_fn(m, m, |i, j| lr[(i, j)] - if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
        frobenius(&(&(&self.right * &d) * &self.left))
    }

    /// `‖P Q‖_F`.
    pub fn product_norm(&self, other: &FactoredProjection) -> f64 {
        frobenius(&(&(&self.right * &(&self.left * &other.right)) * &other.left))
    }

    /// `|tr(P Q)|`.
    pub fn overlap(&self, other: &FactoredProjection) -> f64 {
        let a = &self.left * &other.right;
        let b = &other.left * &self.right;
        let mut t = C64::new(0.0, 0.0);
        for i in 0..a.nrows() {
            for k in 0..a.ncols() {
                t += a[(i, k)] * b[(k, i)];
            }
        }
        t.norm()
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TrackOptions {
    /// Required ratio of cluster separation to cluster diameter.
    pub separation_factor: f64,
    /// Smallest accepted normalised `|⟨l, r⟩|/(‖l‖‖r‖)`.
    pub biorth_tol: f64,
}

impl Default for TrackOptions {
    fn default() -> Self {
        Self {
            separation_factor: 10.0,
            biorth_tol: 1e-6,
        }
    }
}

/// One eigenvalue branch (or invariant-subspace branch of multiplicity > 1).
#[derive(Clone, Debug)]
pub struct SpectralBranch {
    pub id: usize,
    pub multiplicity: usize,
    pub kappa: Vec<f64>,
    /// Mean eigenvalue of the group at each node.
    pub zeta: Vec<C64>,
    /// Largest eigenpair residual of the group.
    pub eigen_residual: Vec<f64>,
    pub projections: Vec<FactoredProjection>,
    /// `‖(B̂−ζ)P_j‖_F`.
    pub semisimple_residual: Vec<f64>,
    pub idempotence: Vec<f64>,
    /// `‖B̂P_j − P_jB̂‖_F`.
    pub commutator: Vec<f64>,
    /// Smallest normalised biorthogonality over the group.
    pub biorth: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct BranchSet {
    pub n: usize,
    pub kappa: Vec<f64>,
    pub branches: Vec<SpectralBranch>,
    /// Cluster separation and diameter at each node.
    pub separation: Vec<f64>,
    pub diameter: Vec<f64>,
    pub norm_b: Vec<f64>,
    /// Heuristic smallness bound: half the microscopic gap over `2π max|v₁|`.
    pub kappa0_heuristic: f64,
    pub kinetic: KineticOperator,
}

/// Subspace of profiles with fixed parity under the reflections
/// `v_j ↦ −v_j` of the transverse axes `j ≠ 0`; `B̂(κe₁)` is block
/// diagonal over these sectors.
#[derive(Clone, Debug)]
pub struct ParitySector {
    /// Odd parity per transverse axis (axes `1..n`).
    pub odd: Vec<bool>,
    /// Orthonormal columns spanning the sector.
    pub basis: RMat,
    /// Number of macroscopic directions in the sector.
    pub macro_count: usize,
}

impl ParitySector {
    pub fn odd_count(&self) -> usize {
        self.odd.iter().filter(|&&o| o).count()
    }
}

/// All parity sectors of the grid, with their macroscopic content.
pub fn parity_sectors(l: &KineticOperator) -> Result<Vec<ParitySector>> {
    let grid = l.grid();
    let n = grid.n();
    let p = grid.points_per_axis();
    let nn = grid.len();
    let t = n - 1;
    // orbit representative under transverse flips
    let mut reps: std::collections::BTreeMap<usize, Vec<(usize, Vec<bool>)>> = std::collections::BTreeMap::new();
    for k in 0..nn {
        let idx = grid.multi_index(k);
        let mut canon = idx.clone();
        let mut flipped = vec![false; t];
        for j in 1..n {
            if idx[j] > p - 1 - idx[j] {
                canon[j] = p - 1 - idx[j];
                flipped[j - 1] = true;
            }
        }
        reps.entry(grid.flat_index(&canon)).or_default().push((k, flipped));
    }
    let e = l.basis().ortho();
    let mut sectors = Vec::with_capacity(1 << t);
    for mask in 0..(1usize << t) {
        let odd: Vec<bool> = (0..t).map(|j| mask >> j & 1 == 1).collect();
        let mut cols: Vec<Vec<(usize, f64)>> = Vec::new();
        for (&rep, members) in &reps {
            let ridx = grid.multi_index(rep);
            // a node on a reflection plane kills odd parity along that axis
            if (0..t).any(|j| odd[j] && 2 * ridx[j + 1] == p - 1) {
                continue;
            }
            let norm = (members.len() as f64).sqrt();
            cols.push(
                members
                    .iter()
                    .map(|(k, fl)| {
                        let sign = (0..t).filter(|&j| odd[j] && fl[j]).count() % 2;
                        (*k, if sign == 1 { -1.0 } else { 1.0 } / norm)
                    })
                    .collect(),
            );
        }
        let mut basis = RMat::zeros(nn, cols.len());
        for (c, col) in cols.iter().enumerate() {
            for &(k, v) in col {
                basis[(k, c)] = v;
            }
        }
        let proj = basis.transpose() * e;
        let weight: f64 = (0..proj.ncols()).map(|j| (0..proj.nrows()).map(|i| proj[(i, j)].powi(2)).sum::<f64>()).sum();
        sectors.push(ParitySector {
            odd,
            basis,
            macro_count: weight.round() as usize,
        });
    }
    let total: usize = sectors.iter().map(|s| s.macro_count).sum();
    if total != n + 2 {
        return Err(Error::Numerical(format!("parity sectors carry {total} macroscopic directions, expected {}", n + 2)));
    }
    Ok(sectors)
}

struct SectorBlock {
    /// Cluster eigenvalues with full-space right/left vectors.
    values: Vec<C64>,
    right: CMat,
    left: CMat,
    residuals: Vec<f64>,
    rest: Vec<C64>,
}

struct NodeCluster {
    blocks: Vec<SectorBlock>,
    separation: f64,
    diameter: f64,
    norm: f64,
}

fn cluster_node(op: &ModeOperator, sectors: &[ParitySector]) -> Result<NodeCluster> {
    let b = op.matrix();
    let mut blocks = Vec::with_capacity(sectors.len());
    for s in sectors {
        let u = to_complex(&s.basis);
        let bu = b * &u;
        let red = u.transpose() * &bu;
        let defect = frobenius(&(&bu - &(&u * &red)));
        if defect > 1e-10 * frobenius(b).max(1.0) {
            return Err(Error::Unsupported(format!(
                "mode operator does not commute with the transverse reflections (defect {defect:.2e})"
            )));
        }
        let spec = eig_matrix(&red)?;
        let mut order: Vec<usize> = (0..spec.values.len()).collect();
        order.sort_by(|&a, &c| spec.values[a].re.total_cmp(&spec.values[c].re));
        let mut pick: Vec<usize> = order[..s.macro_count].to_vec();
        pick.sort_by(|&a, &c| spec.values[a].im.total_cmp(&spec.values[c].im));
        let d = red.nrows();
        let rr = CMat::from_fn(d, pick.len(), |i, k| spec.right[(i, pick[k])]);
        let ll = CMat::from_fn(pick.len(), d, |k, i| spec.left[(pick[k], i)]);
        blocks.push(SectorBlock {
            values: pick.iter().map(|&i| spec.values[i]).collect(),
            right: &u * &rr,
            left: &ll * u.transpose(),
            residuals: pick.iter().map(|&i| spec.residuals[i]).collect(),
            rest: order[s.macro_count..].iter().map(|&i| spec.values[i]).collect(),
        });
    }
    let cluster: Vec<C64> = blocks.iter().flat_map(|b| b.values.iter().cloned()).collect();
    let mut diameter = 0.0f64;
    for a in &cluster {
        for c in &cluster {
            diameter = diameter.max((a - c).norm());
        }
    }
    let mut separation = f64::INFINITY;
    for a in &cluster {
        for blk in &blocks {
            for r in &blk.rest {
                separation = separation.min((a - r).norm());
            }
        }
    }
    Ok(NodeCluster {
        blocks,
        separation,
        diameter,
        norm: opnorm2(b)?,
    })
}

/// Branch layout: `(odd_count, position within sector)` classes; sectors
/// related by a transverse permutation are exactly degenerate and merged.
fn branch_layout(sectors: &[ParitySector]) -> Vec<Vec<(usize, usize)>> {
    let mut classes: std::collections::BTreeMap<(usize, usize), Vec<(usize, usize)>> = std::collections::BTreeMap::new();
    for (si, s) in sectors.iter().enumerate() {
        for pos in 0..s.macro_count {
            classes.entry((s.odd_count(), pos)).or_default().push((si, pos));
        }
    }
    classes.into_values().collect()
}

fn mean(values: &[C64]) -> C64 {
    values.iter().sum::<C64>() / values.len() as f64
}

/// `max|v·e₁|`-based κ₀ heuristic.
pub fn kappa0_heuristic(l: &KineticOperator) -> Result<f64> {
    Ok(0.5 * l.microscopic_gap()? / (2.0 * PI * l.grid().v_max()))
}

fn require_hard(l: &KineticOperator) -> Result<()> {
    if l.params().regime() != Regime::Hard {
        return Err(Error::Unsupported(
            "spectral analysis is restricted to the hard regime γ + 2s ≥ 0".into(),
        ));
    }
    Ok(())
}

fn node_clusters(l: &KineticOperator, kappas: &[f64], sectors: &[ParitySector]) -> Result<Vec<(ModeOperator, NodeCluster)>> {
    let omega = axis_direction(l.grid().n(), 0);
    let nodes: Vec<Result<(ModeOperator, NodeCluster)>> = kappas
        .par_iter()
        .map(|&k| {
            let op = build_mode_operator(l, k, &omega)?;
            let c = cluster_node(&op, sectors)?;
            Ok((op, c))
        })
        .collect();
    nodes.into_iter().collect()
}

/// Eigenvalue branches of `B̂(κe₁)` on the sorted κ grid.
pub fn track_branches(l: &KineticOperator, kappas: &[f64], opts: &TrackOptions) -> Result<BranchSet> {
    require_hard(l)?;
    if kappas.is_empty() || kappas.iter().any(|k| !(*k > 0.0)) || kappas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Input("κ grid must be positive and strictly increasing".into()));
    }
    let n = l.grid().n();
    let sectors = parity_sectors(l)?;
    let layout = branch_layout(&sectors);
    let nodes = node_clusters(l, kappas, &sectors)?;
    for (k, (_, c)) in kappas.iter().zip(&nodes) {
        if c.separation < opts.separation_factor * c.diameter {
            return Err(Error::KappaTooLarge(format!(
                "at κ = {k:.3e} the low cluster (diameter {:.3e}) is only {:.3e} from the rest of the spectrum",
                c.diameter, c.separation
            )));
        }
    }
    let mut branches: Vec<SpectralBranch> = layout
        .iter()
        .enumerate()
        .map(|(id, members)| SpectralBranch {
            id,
            multiplicity: members.len(),
            kappa: Vec::new(),
            zeta: Vec::new(),
            eigen_residual: Vec::new(),
            projections: Vec::new(),
            semisimple_residual: Vec::new(),
            idempotence: Vec::new(),
            commutator: Vec::new(),
            biorth: Vec::new(),
        })
        .collect();
    // within a sector, positions are re-matched by projection overlap
    let mut previous: Vec<Option<FactoredProjection>> = vec![None; layout.len()];
    for (node, (op, c)) in nodes.iter().enumerate() {
        let mut perm: Vec<Vec<usize>> = c.blocks.iter().map(|b| (0..b.values.len()).collect()).collect();
        if node > 0 {
            for (si, blk) in c.blocks.iter().enumerate() {
                let count = blk.values.len();
                if count < 2 {
                    continue;
                }
                let prev_of = |pos: usize| {
                    layout
                        .iter()
                        .position(|m| m.contains(&(si, pos)))
                        .and_then(|b| previous[b].clone())
                };
                let mut pairs = Vec::new();
                for old in 0..count {
                    if let Some(pp) = prev_of(old) {
                        for new in 0..count {
                            let fp = FactoredProjection {
                                right: CMat::from_fn(blk.right.nrows(), 1, |i, _| blk.right[(i, new)]),
                                left: CMat::from_fn(1, blk.left.ncols(), |_, i| blk.left[(new, i)]),
                            };
                            pairs.push((pp.overlap(&fp) / pp.rank() as f64, old, new));
                        }
                    }
                }
                pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
                let mut taken_old = vec![false; count];
                let mut taken_new = vec![false; count];
                for (_, old, new) in pairs {
                    if !taken_old[old] && !taken_new[new] {
                        perm[si][old] = new;
                        taken_old[old] = true;
                        taken_new[new] = true;
                    }
                }
            }
        }
        let b_mat = op.matrix();
        for (bi, members) in layout.iter().enumerate() {
            let cols: Vec<(usize, usize)> = members.iter().map(|&(si, pos)| (si, perm[si][pos])).collect();
            let nn = b_mat.nrows();
            let m = cols.len();
            let p = FactoredProjection {
                right: CMat::from_fn(nn, m, |i, k| c.blocks[cols[k].0].right[(i, cols[k].1)]),
                left: CMat::from_fn(m, nn, |k, i| c.blocks[cols[k].0].left[(cols[k].1, i)]),
            };
            let vals: Vec<C64> = cols.iter().map(|&(si, j)| c.blocks[si].values[j]).collect();
            let zeta = mean(&vals);
            let bp = b_mat * &p.right;
            let shifted = CMat::from_fn(nn, m, |i, j| bp[(i, j)] - zeta * p.right[(i, j)]);
            let semi = frobenius(&(&shifted * &p.left));
            let comm = frobenius(&(&(&bp * &p.left) - &(&p.right * &(&p.left * b_mat))));
            let biorth = (0..m)
                .map(|k| {
                    let r: Vec<C64> = (0..nn).map(|i| p.right[(i, k)]).collect();
                    let lrow: Vec<C64> = (0..nn).map(|i| p.left[(k, i)]).collect();
                    dot_plain(&lrow, &r).norm() / (norm2(&r) * norm2(&lrow))
                })
                .fold(f64::INFINITY, f64::min);
            if biorth < opts.biorth_tol {
                return Err(Error::Numerical(format!(
                    "branch {bi} at κ = {:.3e} is near-defective (biorthogonality {biorth:.2e}); semisimplicity violated",
                    kappas[node]
                )));
            }
            let br = &mut branches[bi];
            br.kappa.push(kappas[node]);
            br.zeta.push(zeta);
            br.eigen_residual.push(cols.iter().map(|&(si, j)| c.blocks[si].residuals[j]).fold(0.0, f64::max));
            br.idempotence.push(p.idempotence_defect());
            br.semisimple_residual.push(semi);
            br.commutator.push(comm);
            br.biorth.push(biorth);
            previous[bi] = Some(p.clone());
            br.projections.push(p);
        }
    }
    Ok(BranchSet {
        n,
        kappa: kappas.to_vec(),
        branches,
        separation: nodes.iter().map(|(_, c)| c.separation).collect(),
        diameter: nodes.iter().map(|(_, c)| c.diameter).collect(),
        norm_b: nodes.iter().map(|(_, c)| c.norm).collect(),
        kappa0_heuristic: kappa0_heuristic(l)?,
        kinetic: l.clone(),
    })
}

fn dot_plain(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Largest κ of `candidates` such that it and every smaller candidate
/// have cluster separation ≥ `factor`× diameter.
pub fn adaptive_kappa0(l: &KineticOperator, candidates: &[f64], factor: f64) -> Result<f64> {
    require_hard(l)?;
    let sectors = parity_sectors(l)?;
    let mut sorted = candidates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let omega = axis_direction(l.grid().n(), 0);
    let mut best = None;
    for k in sorted {
        let op = build_mode_operator(l, k, &omega)?;
        let c = cluster_node(&op, &sectors)?;
        if c.separation >= factor * c.diameter {
            best = Some(k);
        } else {
            break;
        }
    }
    best.ok_or_else(|| Error::KappaTooLarge("no candidate κ separates the low cluster".into()))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExpansionFit {
    pub branch: usize,
    pub multiplicity: usize,
    pub zeta1: f64,
    pub zeta2: f64,
    pub c3: f64,
    pub c4: f64,
    /// Slope of `log|ζ − iζ⁽¹⁾κ − ζ⁽²⁾κ²|` against `log κ`.
    pub residual_order: Option<f64>,
    pub order_nodes: usize,
    /// Residual order outside the admissible window.
    pub violation: bool,
}

/// `y/x^p = a + c x²` least squares on the given nodes.
fn fit_two(xs: &[f64], ys: &[f64], p: i32) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).map(|(x, y)| (x * x, y / x.powi(p))).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let c = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - c * mx, c)
}

/// Fits `Im ζ = ζ⁽¹⁾κ + c₃κ³` and `Re ζ = ζ⁽²⁾κ² + c₄κ⁴`, then measures the
/// scaling order of the quadratic-expansion residual.
pub fn fit_expansion(branch: &SpectralBranch, norm_b: f64) -> Result<ExpansionFit> {
    let k = &branch.kappa;
    if k.len() < 6 || k[k.len() - 1] / k[0] < 10.0 * (1.0 - 1e-12) {
        return Err(Error::Input("expansion fit needs ≥ 6 κ nodes spanning one decade".into()));
    }
    let im: Vec<f64> = branch.zeta.iter().map(|z| z.im).collect();
    let re: Vec<f64> = branch.zeta.iter().map(|z| z.re).collect();
    let (zeta1, c3) = fit_two(k, &im, 1);
    let (zeta2, c4) = fit_two(k, &re, 2);
    let floor = 1e3 * f64::EPSILON * norm_b.max(1.0);
    let pts: Vec<(f64, f64)> = k
        .iter()
        .zip(&branch.zeta)
        .filter_map(|(&kk, z)| {
            let r = (z - C64::new(zeta2 * kk * kk, zeta1 * kk)).norm();
            (r > floor).then_some((kk.ln(), r.ln()))
        })
        .collect();
    let residual_order = if pts.len() >= 3 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        Some(sxy / sxx)
    } else {
        None
    };
    // non-acoustic branches are even in κ, so their residual is O(κ⁴)
    let acoustic = zeta1.abs() > 1e-6;
    let violation = match residual_order {
        Some(o) => o < 2.5 || (acoustic && o > 3.5),
        None => true,
    };
    Ok(ExpansionFit {
        branch: branch.id,
        multiplicity: branch.multiplicity,
        zeta1,
        zeta2,
        c3,
        c4,
        residual_order,
        order_nodes: pts.len(),
        violation,
    })
}

impl BranchSet {
    pub fn fits(&self) -> Result<Vec<ExpansionFit>> {
        let nb = self.norm_b.iter().cloned().fold(0.0, f64::max);
        self.branches.iter().map(|b| fit_expansion(b, nb)).collect()
    }

    /// CSV `branch_id,kappa,re,im,multiplicity`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("branch_id,kappa,re,im,multiplicity\n");
        for b in &self.branches {
            for (k, z) in b.kappa.iter().zip(&b.zeta) {
                s.push_str(&format!("{},{k:e},{:e},{:e},{}\n", b.id, z.re, z.im, b.multiplicity));
            }
        }
        s
    }

    /// Sum of the branch projections at node `i`.
    pub fn total_projection(&self, i: usize) -> CMat {
        let mut acc = self.branches[0].projections[i].dense();
        for b in &self.branches[1..] {
            acc += b.projections[i].dense();
        }
        acc
    }
}

/// Summary stored as JSON.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExpansionSummary {
    pub fits: Vec<ExpansionFit>,
    pub kappa0: f64,
    pub kappa0_heuristic: f64,
}

/// Eigenvalues of the quadrature-assembled moment matrix `⟨e_a, v₁e_b⟩`
/// (first-order speeds) and the second-order coefficients
/// `ζ⁽²⁾ = (2π)²⟨(I−P)v₁φ, L⁻¹(I−P)v₁φ⟩` on each eigenspace.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerturbationCoefficients {
    /// `(speed, ζ⁽²⁾)` per first-order eigenvector, ascending speed.
    pub modes: Vec<(f64, f64)>,
}

pub fn perturbation_coefficients(l: &KineticOperator) -> Result<PerturbationCoefficients> {
    require_hard(l)?;
    let grid = l.grid();
    let e = l.basis().ortho();
    let m = e.ncols();
    let nn = e.nrows();
    let v1: Vec<f64> = (0..nn).map(|k| grid.node(k)[0]).collect();
    let ve = RMat::from_fn(nn, m, |k, a| v1[k] * e[(k, a)]);
    let a = e.transpose() * &ve;
    let a = RMat::from_fn(m, m, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
    let (speeds, vecs) = sym_eigen(&a)?;
    // (I−P)v₁E
    let micro = &ve - &(e * &(e.transpose() * &ve));
    let lm = l.matrix() + &(e * e.transpose());
    let solved = to_complex(&lm).partial_piv_lu().solve(to_complex(&micro));
    let g = micro.transpose();
    let h = RMat::from_fn(m, m, |i, j| (0..nn).map(|k| g[(i, k)] * solved[(k, j)].re).sum());
    // second order on each first-order eigenspace
    let mut modes = Vec::new();
    let mut i = 0;
    while i < m {
        let mut j = i + 1;
        while j < m && (speeds[j] - speeds[i]).abs() < 1e-8 {
            j += 1;
        }
        let d = j - i;
        let sub = RMat::from_fn(d, d, |a_, b_| {
            let mut s = 0.0;
            for p in 0..m {
                for q in 0..m {
                    s += vecs[(p, i + a_)] * h[(p, q)] * vecs[(q, i + b_)];
                }
            }
            s
        });
        let sub = RMat::from_fn(d, d, |a_, b_| 0.5 * (sub[(a_, b_)] + sub[(b_, a_)]));
        let (vals, _) = sym_eigen(&sub)?;
        for v in vals {
            modes.push((speeds[i], 4.0 * PI * PI * v));
        }
        i = j;
    }
    Ok(PerturbationCoefficients { modes })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProjectionReport {
    pub items: Vec<CheckItem>,
    /// `C` of `‖P_j(κ) − P⁽⁰⁾_j‖ ≤ Cκ`, per branch.
    pub linear_constants: Vec<f64>,
    pub sum_error: f64,
    pub coverage_min: f64,
    /// `max ‖P_jR_j^*‖/‖B̂‖` (as stated).
    pub residual_literal: f64,
    /// `max ‖P_j^*R_j^*‖/‖B̂‖` (the adjoint of `R_jP_j = 0`).
    pub residual_adjoint: f64,
    pub passed: bool,
}

/// Frozen lower bound for `Σ_j‖P_jf‖²/‖Pf‖²`.
pub const COVERAGE_THRESHOLD: f64 = 0.5;

fn adjoint(a: &CMat) -> CMat {
    CMat::from_fn(a.ncols(), a.nrows(), |i, j| a[(j, i)].conj())
}

/// Projection limits, the macroscopic coverage bound and the residual orthogonality `P_jR_j^*`.
pub fn check_projection_limits(set: &BranchSet, samples: usize, seed: u64) -> Result<ProjectionReport> {
    let nk = set.kappa.len();
    if nk < 3 {
        return Err(Error::Input("projection limits need ≥ 3 κ nodes".into()));
    }
    let l = &set.kinetic;
    let (k1, k2, k3) = (set.kappa[0], set.kappa[1], set.kappa[2]);
    // Lagrange weights extrapolating P(κ) ≈ P⁰ + κP¹ + κ²P² to κ = 0
    let w = [k2 * k3 / ((k1 - k2) * (k1 - k3)), k1 * k3 / ((k2 - k1) * (k2 - k3)), k1 * k2 / ((k3 - k1) * (k3 - k2))];
    let mut linear_constants = Vec::new();
    let mut p0_sum: Option<CMat> = None;
    for b in &set.branches {
        let d: Vec<CMat> = b.projections[..3].iter().map(|p| p.dense()).collect();
        let p0 = CMat::from_fn(d[0].nrows(), d[0].ncols(), |i, j| w[0] * d[0][(i, j)] + w[1] * d[1][(i, j)] + w[2] * d[2][(i, j)]);
        let mut c = 0.0f64;
        for (i, p) in b.projections.iter().enumerate().skip(2) {
            c = c.max(frobenius(&(&p.dense() - &p0)) / set.kappa[i]);
        }
        linear_constants.push(c);
        p0_sum = Some(match p0_sum {
            None => p0,
            Some(s) => s + p0,
        });
    }
    let pm = to_complex(&l.basis().projector());
    let sum_error = opnorm2(&(&p0_sum.unwrap() - &pm))?;

    let nn = pm.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs: Vec<Vec<C64>> = (0..samples)
        .map(|_| (0..nn).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect())
        .collect();
    let mut coverage_min = f64::INFINITY;
    let mut lit = 0.0f64;
    let mut adj = 0.0f64;
    let omega = axis_direction(set.n, 0);
    for i in 0..nk {
        let op = build_mode_operator(l, set.kappa[i], &omega)?;
        let nb = set.norm_b[i];
        for f in &fs {
            let pf = l.basis().project_coords(f);
            let den = norm2(&pf).powi(2);
            let num: f64 = set.branches.iter().map(|b| norm2(&b.projections[i].apply(f)).powi(2)).sum();
            coverage_min = coverage_min.min(num / den);
        }
        for b in &set.branches {
            let p = b.projections[i].dense();
            let zeta = b.zeta[i];
            let r = op.matrix() - &CMat::from_fn(nn, nn, |a, c| zeta * p[(a, c)]);
            let rstar = adjoint(&r);
            lit = lit.max(opnorm2(&(&p * &rstar))? / nb);
            adj = adj.max(opnorm2(&(&adjoint(&p) * &rstar))? / nb);
        }
    }
    let c_max = linear_constants.iter().cloned().fold(0.0, f64::max);
    let items = vec![
        CheckItem::le("projection_linear_constant", c_max, 1e4)
            .with_note("max over branches of ‖P_j(κ) − P_j⁰‖_F/κ"),
        CheckItem::le("projection_sum_limit", sum_error, 1e-6),
        CheckItem::ge("macro_coverage", coverage_min, COVERAGE_THRESHOLD),
        CheckItem::le("residual_orthogonality", lit, 1e-6).with_note("‖P_jR_j^*‖/‖B̂‖ as stated"),
        CheckItem::le("residual_orthogonality_adjoint", adj, 1e-6).with_note("‖P_j^*R_j^*‖/‖B̂‖"),
    ];
    let passed = items.iter().all(|c| c.pass);
    Ok(ProjectionReport {
        items,
        linear_constants,
        sum_error,
        coverage_min,
        residual_literal: lit,
        residual_adjoint: adj,
        passed,
    })
}

/// `M(ζ, κ) = Eᵀ(B̂(κe₁)+P−ζ)^{-1}E` over the orthonormal macroscopic basis.
#[derive(Clone, Debug)]
pub struct DispersionSystem {
    pub kappa: f64,
    shifted: CMat,
    basis: CMat,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DispersionRoot {
    pub zeta: C64,
    pub multiplicity: usize,
    pub iterations: usize,
    /// `|det(M − I)|` at the root.
    pub residual: f64,
}

impl DispersionSystem {
    pub fn new(l: &KineticOperator, kappa: f64) -> Result<Self> {
        require_hard(l)?;
        let op = build_mode_operator(l, kappa, &axis_direction(l.grid().n(), 0))?;
        let pm = to_complex(&l.basis().projector());
        Ok(Self {
            kappa,
            shifted: op.matrix() + &pm,
            basis: to_complex(l.basis().ortho()),
        })
    }

    fn solves(&self, zeta: C64) -> Result<(CMat, CMat)> {
        let nn = self.shifted.nrows();
        let a = CMat::from_fn(nn, nn, |i, j| self.shifted[(i, j)] - if i == j { zeta } else { C64::new(0.0, 0.0) });
        let lu = a.partial_piv_lu();
        let x = lu.solve(&self.basis);
        let x2 = lu.solve(&x);
        if !crate::linalg::is_finite(&x2) {
            return Err(Error::Numerical(format!("B̂ + P − ζ is singular at ζ = {zeta}")));
        }
        let et = self.basis.transpose().to_owned();
        Ok((&et * &x, &et * &x2))
    }

    pub fn matrix(&self, zeta: C64) -> Result<CMat> {
        Ok(self.solves(zeta)?.0)
    }

    /// `det(M(ζ) − I)`.
    pub fn determinant(&self, zeta: C64) -> Result<C64> {
        let mut m = self.matrix(zeta)?;
        for i in 0..m.nrows() {
            m[(i, i)] -= C64::new(1.0, 0.0);
        }
        Ok(m.determinant())
    }

    /// Modified Newton on `det(M−I)` with step `m / tr((M−I)^{-1}M′)`.
    pub fn newton(&self, seed: C64, multiplicity: usize, tol: f64, max_iter: usize) -> Result<DispersionRoot> {
        let mut z = seed;
        for it in 1..=max_iter {
            let (mut m, dm) = self.solves(z)?;
            for i in 0..m.nrows() {
                m[(i, i)] -= C64::new(1.0, 0.0);
            }
            let x = m.partial_piv_lu().solve(&dm);
            let tr: C64 = (0..x.nrows()).map(|i| x[(i, i)]).sum();
            if !(tr.re.is_finite() && tr.im.is_finite()) || tr.norm() == 0.0 {
                // exactly on the root
                return Ok(DispersionRoot {
                    zeta: z,
                    multiplicity,
                    iterations: it,
                    residual: m.determinant().norm(),
                });
            }
            let step = C64::new(multiplicity as f64, 0.0) / tr;
            z -= step;
            if step.norm() <= tol * z.norm().max(self.kappa) || step.norm() <= 1e2 * f64::EPSILON {
                return Ok(DispersionRoot {
                    zeta: z,
                    multiplicity,
                    iterations: it,
                    residual: self.determinant(z)?.norm(),
                });
            }
        }
        Err(Error::Numerical(format!("dispersion Newton did not converge at κ = {:.3e}", self.kappa)))
    }
}

/// Restriction of `M` to one parity sector, where every low-frequency root
/// is simple.
fn sector_system(l: &KineticOperator, op: &ModeOperator, sector: &ParitySector) -> Result<(DispersionSystem, RMat)> {
    let u = &sector.basis;
    let pu = u.transpose() * &(&l.basis().projector() * u);
    let pu = RMat::from_fn(pu.nrows(), pu.ncols(), |i, j| 0.5 * (pu[(i, j)] + pu[(j, i)]));
    let (vals, vecs) = sym_eigen(&pu)?;
    let d = pu.nrows();
    let m = sector.macro_count;
    // eigenvalues ascend, so the macroscopic directions are the last m
    let es = RMat::from_fn(d, m, |i, j| vecs[(i, d - m + j)]);
    if vals[d - m] < 0.5 || (d > m && vals[d - m - 1] > 0.5) {
        return Err(Error::Numerical("sector projector is not a clean projection".into()));
    }
    let uc = to_complex(u);
    let red = uc.transpose() * &(op.matrix() * &uc);
    let pr = to_complex(&(&es * es.transpose()));
    Ok((
        DispersionSystem {
            kappa: op.kappa(),
            shifted: red + pr,
            basis: to_complex(&es),
        },
        u * &es,
    ))
}

/// First-order speeds and `ζ⁽²⁾` on the span of the columns of `e`
/// (orthonormal, macroscopic).
fn local_coefficients(l: &KineticOperator, e: &RMat) -> Result<Vec<(f64, f64)>> {
    let grid = l.grid();
    let m = e.ncols();
    let nn = e.nrows();
    let ve = RMat::from_fn(nn, m, |k, a| grid.node(k)[0] * e[(k, a)]);
    let a = e.transpose() * &ve;
    let a = RMat::from_fn(m, m, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
    let (speeds, vecs) = sym_eigen(&a)?;
    let pe = l.basis().ortho();
    let micro = &ve - &(pe * &(pe.transpose() * &ve));
    let lm = l.matrix() + &l.basis().projector();
    let solved = to_complex(&lm).partial_piv_lu().solve(to_complex(&micro));
    let h = RMat::from_fn(m, m, |i, j| (0..nn).map(|k| micro[(k, i)] * solved[(k, j)].re).sum());
    Ok((0..m)
        .map(|c| {
            let q: f64 = (0..m).map(|p| (0..m).map(|r| vecs[(p, c)] * h[(p, r)] * vecs[(r, c)]).sum::<f64>()).sum();
            (speeds[c], 4.0 * PI * PI * q)
        })
        .collect())
}

/// Low-frequency roots of `det(M(ζ,κ) − I)`, one per branch in the order of
/// [`track_branches`]. Each parity sector is solved separately from
/// second-order seeds.
pub fn dispersion_solve(l: &KineticOperator, kappa: f64) -> Result<Vec<DispersionRoot>> {
    require_hard(l)?;
    let sectors = parity_sectors(l)?;
    let op = build_mode_operator(l, kappa, &axis_direction(l.grid().n(), 0))?;
    let per_sector: Vec<Vec<DispersionRoot>> = sectors
        .iter()
        .map(|sec| {
            if sec.macro_count == 0 {
                return Ok(Vec::new());
            }
            let (sys, e) = sector_system(l, &op, sec)?;
            let mut roots = local_coefficients(l, &e)?
                .into_iter()
                .map(|(c, z2)| {
                    let mut seed = C64::new(z2 * kappa * kappa, 2.0 * PI * c * kappa);
                    let mut last_err = None;
                    for _ in 0..4 {
                        match sys.newton(seed, 1, 1e-13, 60) {
                            Ok(r) => return Ok(r),
                            Err(e) => {
                                last_err = Some(e);
                                seed = C64::new(seed.re * 0.5, seed.im);
                            }
                        }
                    }
                    Err(last_err.unwrap())
                })
                .collect::<Result<Vec<_>>>()?;
            roots.sort_by(|a, b| a.zeta.im.total_cmp(&b.zeta.im));
            Ok(roots)
        })
        .collect::<Result<_>>()?;
    Ok(branch_layout(&sectors)
        .into_iter()
        .map(|members| {
            let rs: Vec<&DispersionRoot> = members.iter().map(|&(si, pos)| &per_sector[si][pos]).collect();
            DispersionRoot {
                zeta: rs.iter().map(|r| r.zeta).sum::<C64>() / rs.len() as f64,
                multiplicity: rs.len(),
                iterations: rs.iter().map(|r| r.iterations).max().unwrap_or(0),
                residual: rs.iter().map(|r| r.residual).fold(0.0, f64::max),
            }
        })
        .collect())
}
