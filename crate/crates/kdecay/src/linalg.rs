//! Dense linear-algebra helpers on top of `faer`.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};

use crate::{C64, Error, Result};

pub type CMat = Mat<C64>;
pub type RMat = Mat<f64>;

pub fn to_complex(a: &RMat) -> CMat {
    CMat::from_fn(a.nrows(), a.ncols(), |i, j| C64::new(a[(i, j)], 0.0))
}

pub fn matvec(a: &CMat, x: &[C64]) -> Vec<C64> {
    assert_eq!(a.ncols(), x.len());
    let mut y = vec![C64::new(0.0, 0.0); a.nrows()];
    for j in 0..a.ncols() {
        let xj = x[j];
        if xj == C64::new(0.0, 0.0) {
            continue;
        }
        let col = a.col_as_slice(j);
        for (yi, aij) in y.iter_mut().zip(col) {
            *yi += aij * xj;
        }
    }
    y
}

pub fn rmatvec(a: &RMat, x: &[C64]) -> Vec<C64> {
    assert_eq!(a.ncols(), x.len());
    let mut y = vec![C64::new(0.0, 0.0); a.nrows()];
    for j in 0..a.ncols() {
        let xj = x[j];
        let col = a.col_as_slice(j);
        for (yi, aij) in y.iter_mut().zip(col) {
            *yi += xj * *aij;
        }
    }
    y
}

pub fn dot(x: &[C64], y: &[C64]) -> C64 {
    x.iter().zip(y).map(|(a, b)| a * b.conj()).sum()
}

/// Euclidean distance `‖a − b‖₂`.
pub fn dist(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

pub fn norm2(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn norm1(a: &CMat) -> f64 {
    (0..a.ncols())
        .map(|j| a.col_as_slice(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn frobenius(a: &CMat) -> f64 {
    a.norm_l2()
}

/// Spectral norm via singular values.
pub fn opnorm2(a: &CMat) -> Result<f64> {
    let sv = a
        .singular_values()
        .map_err(|e| Error::Numerical(format!("svd failed: {e:?}")))?;
    Ok(sv.into_iter().fold(0.0, f64::max))
}

pub fn scale(a: &CMat, s: C64) -> CMat {
    CMat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * s)
}

pub fn add(a: &CMat, b: &CMat) -> CMat {
    CMat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] + b[(i, j)])
}

pub fn sub(a: &CMat, b: &CMat) -> CMat {
    CMat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] - b[(i, j)])
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn is_finite(a: &CMat) -> bool {
    (0..a.ncols()).all(|j| a.col_as_slice(j).iter().all(|z| z.re.is_finite() && z.im.is_finite()))
}

pub fn solve(a: &CMat, b: &CMat) -> Result<CMat> {
    let x = a.partial_piv_lu().solve(b);
    if !is_finite(&x) {
        return Err(Error::Numerical("linear solve produced non-finite values".into()));
    }
    Ok(x)
}

pub fn inverse(a: &CMat) -> Result<CMat> {
    solve(a, &identity(a.nrows()))
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by degree-13 Padé scaling and squaring.
pub fn expm(a: &CMat) -> Result<CMat> {
    let n = a.nrows();
    let nrm = norm1(a);
    if !nrm.is_finite() {
        return Err(Error::Numerical("expm of non-finite matrix".into()));
    }
    let s = if nrm > THETA13 {
        (nrm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = scale(a, C64::new(0.5f64.powi(s), 0.0));
    let b = &PADE13;
    let id = identity(n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let c = |x: f64| C64::new(x, 0.0);
    let lin = |c6: f64, c4: f64, c2: f64| {
        CMat::from_fn(n, n, |i, j| a6[(i, j)] * c(c6) + a4[(i, j)] * c(c4) + a2[(i, j)] * c(c2))
    };
    let u_inner = &a6 * &lin(b[13], b[11], b[9]);
    let u_inner = CMat::from_fn(n, n, |i, j| {
        u_inner[(i, j)]
            + a6[(i, j)] * c(b[7])
            + a4[(i, j)] * c(b[5])
            + a2[(i, j)] * c(b[3])
            + id[(i, j)] * c(b[1])
    });
    let u = &a * &u_inner;
    let v = &a6 * &lin(b[12], b[10], b[8]);
    let v = CMat::from_fn(n, n, |i, j| {
        v[(i, j)]
            + a6[(i, j)] * c(b[6])
            + a4[(i, j)] * c(b[4])
            + a2[(i, j)] * c(b[2])
            + id[(i, j)] * c(b[0])
    });
    let mut r = solve(&sub(&v, &u), &add(&v, &u))?;
    for _ in 0..s {
        r = &r * &r;
    }
    if !is_finite(&r) {
        return Err(Error::Numerical("expm overflow".into()));
    }
    Ok(r)
}

/// Eigendecomposition `A = V diag(λ) V^{-1}`; rows of `left` are the left
/// eigenvectors normalised so that `left[i,:]·right[:,i] = 1`.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<C64>,
    pub right: CMat,
    pub left: CMat,
    /// `‖V‖_F‖V^{-1}‖_F / N`, equal to 1 for a unitary eigenbasis.
    pub condition: f64,
}

pub fn eigen_decompose(a: &CMat) -> Result<EigenDecomposition> {
    let n = a.nrows();
    let evd = a
        .eigen()
        .map_err(|e| Error::Numerical(format!("eigensolver did not converge: {e:?}")))?;
    let values: Vec<C64> = (0..n).map(|i| evd.S().column_vector()[i]).collect();
    let right = evd.U().to_owned();
    let left = inverse(&right)
        .map_err(|_| Error::Numerical("eigenvector matrix is singular (defective matrix)".into()))?;
    let condition = right.norm_l2() * left.norm_l2() / n.max(1) as f64;
    Ok(EigenDecomposition {
        values,
        right,
        left,
        condition,
    })
}

/// Ascending eigenvalues and orthonormal eigenvectors of a real symmetric matrix.
pub fn sym_eigen(a: &RMat) -> Result<(Vec<f64>, RMat)> {
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("symmetric eigensolver failed: {e:?}")))?;
    let n = a.nrows();
    let mut idx: Vec<usize> = (0..n).collect();
    let vals: Vec<f64> = (0..n).map(|i| evd.S().column_vector()[i]).collect();
    idx.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]));
    let u = evd.U();
    let vecs = RMat::from_fn(n, n, |i, j| u[(i, idx[j])]);
    Ok((idx.iter().map(|&i| vals[i]).collect(), vecs))
}

/// Ascending eigenvalues of a Hermitian matrix.
pub fn herm_eigenvalues(a: &CMat) -> Result<Vec<f64>> {
    let mut v: Vec<f64> = a
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("hermitian eigensolver failed: {e:?}")))?;
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Three-point Lagrange weights for the `deriv`-th derivative at `x` from
/// nodes `xs` (deriv ∈ {0,1,2}).
pub fn lagrange3(xs: [f64; 3], x: f64, deriv: usize) -> [f64; 3] {
    let mut w = [0.0; 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        let den = (xs[i] - xs[j]) * (xs[i] - xs[k]);
        w[i] = match deriv {
            0 => (x - xs[j]) * (x - xs[k]) / den,
            1 => ((x - xs[j]) + (x - xs[k])) / den,
            2 => 2.0 / den,
            _ => panic!("lagrange3 supports derivatives up to order 2"),
        };
    }
    w
}
