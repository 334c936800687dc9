//! Dense symmetric linear algebra on `ndarray` matrices.
//!
//! Everything here is small-matrix work (d ≲ a few thousand): second-moment
//! matrices, a cyclic Jacobi eigensolver, projectors, PCA/MDS embeddings and a
//! Cholesky-based ridge solver.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sparse::SparseBinary;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentMode {
    /// `XᵀX / n`.
    Raw,
    /// Covariance with population normalization.
    Centered,
    Correlation,
}

impl MomentMode {
    pub fn name(self) -> &'static str {
        match self {
            MomentMode::Raw => "raw",
            MomentMode::Centered => "centered",
            MomentMode::Correlation => "correlation",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SecondMoment {
    pub matrix: Array2<f64>,
    pub mode: MomentMode,
    /// Columns with zero variance (only ever set in correlation mode).
    pub degenerate: Vec<bool>,
}

const ZERO_VARIANCE: f64 = 1e-15;

fn finish_moment(raw: Array2<f64>, means: Array1<f64>, mode: MomentMode) -> SecondMoment {
    let d = raw.nrows();
    let mut degenerate = vec![false; d];
    let matrix = match mode {
        MomentMode::Raw => raw,
        MomentMode::Centered | MomentMode::Correlation => {
            let mut c = raw;
            for i in 0..d {
                for j in 0..d {
                    c[[i, j]] -= means[i] * means[j];
                }
            }
            if mode == MomentMode::Correlation {
                let sd: Vec<f64> = (0..d).map(|i| c[[i, i]].max(0.0).sqrt()).collect();
                for i in 0..d {
                    degenerate[i] = c[[i, i]] <= ZERO_VARIANCE;
                }
                for i in 0..d {
                    for j in 0..d {
                        c[[i, j]] = if i == j {
                            1.0
                        } else if degenerate[i] || degenerate[j] {
                            0.0
                        } else {
                            c[[i, j]] / (sd[i] * sd[j])
                        };
                    }
                }
            }
            c
        }
    };
    SecondMoment { matrix, mode, degenerate }
}

fn check_rows(n: usize, mode: MomentMode) -> Result<()> {
    if n == 0 || (n < 2 && mode != MomentMode::Raw) {
        return Err(Error::EmptyDataset(format!("{} second moment needs more samples (got {n})", mode.name())));
    }
    Ok(())
}

/// Second-moment matrix of the rows of `x`.
pub fn second_moment(x: ArrayView2<f64>, mode: MomentMode) -> Result<SecondMoment> {
    let n = x.nrows();
    check_rows(n, mode)?;
    let means = x.mean_axis(Axis(0)).expect("non-empty");
    let raw = match mode {
        MomentMode::Raw => x.t().dot(&x) / n as f64,
        _ => {
            // Center first: the subtraction form loses precision for
            // nearly constant columns.
            let xc = &x - &means;
            let mut c = xc.t().dot(&xc) / n as f64;
            for i in 0..c.nrows() {
                for j in 0..c.ncols() {
                    c[[i, j]] += means[i] * means[j];
                }
            }
            c
        }
    };
    Ok(finish_moment(raw, means, mode))
}

/// Second-moment matrix of a sparse binary matrix, from exact co-occurrence
/// counts.
pub fn second_moment_sparse(x: &SparseBinary, mode: MomentMode) -> Result<SecondMoment> {
    let n = x.rows();
    check_rows(n, mode)?;
    let d = x.cols();
    let counts = (0..n)
        .into_par_iter()
        .fold(
            || Array2::<f64>::zeros((d, d)),
            |mut acc, r| {
                let row = x.row(r);
                for &i in row {
                    for &j in row {
                        acc[[i as usize, j as usize]] += 1.0;
                    }
                }
                acc
            },
        )
        // Integer-valued partial sums: any reduction order gives the same bits.
        .reduce(|| Array2::zeros((d, d)), |a, b| a + b);
    let means = x.column_counts().mapv(|c| c as f64 / n as f64);
    Ok(finish_moment(counts / n as f64, means, mode))
}

/// `WᵀW` — inner products between the columns of `w`.
pub fn gram(w: &Array2<f64>) -> Array2<f64> {
    w.t().dot(w)
}

/// Eigenvalues in descending order with matching orthonormal eigenvector
/// columns.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Array1<f64>,
    pub eigenvectors: Array2<f64>,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn reconstruct(&self) -> Array2<f64> {
        let scaled = &self.eigenvectors * &self.eigenvalues;
        scaled.dot(&self.eigenvectors.t())
    }
}

/// Index of the first entry within a relative hair of the largest magnitude.
/// The tolerance keeps the choice stable when symmetric inputs produce
/// magnitudes that tie up to rounding.
fn dominant_index(v: ArrayView1<f64>) -> usize {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    v.iter().position(|x| x.abs() >= max * (1.0 - 1e-9)).unwrap_or(0)
}

/// Flips `v` so that its dominant entry is positive.
pub fn orient(mut v: ndarray::ArrayViewMut1<f64>) {
    let k = dominant_index(v.view());
    if v[k] < 0.0 {
        v.mapv_inplace(|x| -x);
    }
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Each eigenvector is oriented so its largest-magnitude component is positive.
pub fn sym_eig(a: &Array2<f64>) -> Result<SpectralDecomposition> {
    let d = a.nrows();
    if a.ncols() != d {
        return Err(Error::Dimension(format!("expected a square matrix, got {}x{}", d, a.ncols())));
    }
    let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    for i in 0..d {
        for j in 0..i {
            if (a[[i, j]] - a[[j, i]]).abs() > 1e-10 * scale.max(1.0) {
                return Err(Error::Contract(format!("matrix is not symmetric at ({i}, {j})")));
            }
        }
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Contract("matrix has non-finite entries".into()));
    }

    let mut m: Vec<f64> = a.iter().copied().collect();
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    let frob: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-15 * frob.max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..d).flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i * d + j].powi(2)).sum::<f64>().sqrt();
        if off <= tol {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = m[p * d + q];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (m[q * d + q] - m[p * d + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let (kp, kq) = (m[k * d + p], m[k * d + q]);
                    m[k * d + p] = c * kp - s * kq;
                    m[k * d + q] = s * kp + c * kq;
                }
                for k in 0..d {
                    let (pk, qk) = (m[p * d + k], m[q * d + k]);
                    m[p * d + k] = c * pk - s * qk;
                    m[q * d + k] = s * pk + c * qk;
                }
                m[p * d + q] = 0.0;
                m[q * d + p] = 0.0;
                for k in 0..d {
                    let (kp, kq) = (v[k * d + p], v[k * d + q]);
                    v[k * d + p] = c * kp - s * kq;
                    v[k * d + q] = s * kp + c * kq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| m[j * d + j].total_cmp(&m[i * d + i]).then(i.cmp(&j)));
    let eigenvalues = Array1::from_iter(order.iter().map(|&i| m[i * d + i]));
    let mut eigenvectors = Array2::from_shape_fn((d, d), |(r, c)| v[r * d + order[c]]);
    for col in eigenvectors.columns_mut() {
        orient(col);
    }
    Ok(SpectralDecomposition { eigenvalues, eigenvectors })
}

/// `V_m V_mᵀ`, the orthogonal projector onto the leading `m` eigenvectors.
pub fn top_m_projector(decomp: &SpectralDecomposition, m: usize) -> Result<Array2<f64>> {
    if m == 0 || m > decomp.dim() {
        return Err(Error::InvalidParameter(format!("projector rank {m} outside 1..={}", decomp.dim())));
    }
    let vm = decomp.eigenvectors.slice(s![.., ..m]);
    Ok(vm.dot(&vm.t()))
}

/// Smallest `k` whose leading eigenvalues explain at least `threshold` of the
/// total.
pub fn effective_rank(eigenvalues: &[f64], threshold: f64) -> Result<usize> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidParameter("threshold must lie in (0, 1]".into()));
    }
    let top = eigenvalues.iter().fold(0.0f64, |m, &x| m.max(x));
    if eigenvalues.iter().any(|&x| x < -1e-10 * top.max(1.0)) {
        return Err(Error::Contract("spectrum has negative eigenvalues".into()));
    }
    let clipped: Vec<f64> = eigenvalues.iter().map(|&x| x.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if total <= 0.0 {
        return Err(Error::Contract("all-zero spectrum has no effective rank".into()));
    }
    let mut acc = 0.0;
    for (k, &x) in clipped.iter().enumerate() {
        acc += x;
        if acc / total >= threshold - 1e-12 {
            return Ok(k + 1);
        }
    }
    Ok(clipped.len())
}

/// Frobenius norm of the off-diagonal part of a square matrix.
pub fn offdiag_frobenius(g: &Array2<f64>) -> f64 {
    g.indexed_iter().filter(|((i, j), _)| i != j).map(|(_, x)| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Components {
    Top2,
    /// Zero-based principal component indices.
    Pair(usize, usize),
}

impl Components {
    fn indices(self) -> (usize, usize) {
        match self {
            Components::Top2 => (0, 1),
            Components::Pair(i, j) => (i, j),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Pca2d {
    /// One row per input point.
    pub coords: Array2<f64>,
    /// Variances along every principal axis, descending.
    pub variances: Array1<f64>,
    pub components: (usize, usize),
    /// The point cloud spans fewer than two dimensions; the second coordinate
    /// is then zero.
    pub degenerate: bool,
}

/// Projects centered points (rows) onto two principal components.
///
/// When there are fewer points than dimensions the decomposition runs on the
/// point Gram matrix instead of the covariance; both give the same
/// coordinates. Each coordinate axis is oriented so its largest-magnitude
/// entry is positive.
pub fn pca_2d(points: ArrayView2<f64>, which: Components) -> Result<Pca2d> {
    let (n, d) = points.dim();
    if n < 3 {
        return Err(Error::InvalidParameter(format!("PCA needs at least 3 points, got {n}")));
    }
    let (ci, cj) = which.indices();
    let rank_cap = n.min(d);
    if ci >= rank_cap || cj >= rank_cap || ci == cj {
        return Err(Error::InvalidParameter(format!("component pair ({ci}, {cj}) invalid for {n} points in {d} dims")));
    }
    let mean = points.mean_axis(Axis(0)).expect("non-empty");
    let xc = &points - &mean;
    let mut coords = Array2::zeros((n, 2));
    let variances;
    if n < d {
        let dec = sym_eig(&xc.dot(&xc.t()))?;
        variances = dec.eigenvalues.mapv(|l| l.max(0.0) / n as f64);
        for (slot, c) in [ci, cj].into_iter().enumerate() {
            let scale = dec.eigenvalues[c].max(0.0).sqrt();
            coords.column_mut(slot).assign(&(&dec.eigenvectors.column(c) * scale));
        }
    } else {
        let dec = sym_eig(&(xc.t().dot(&xc) / n as f64))?;
        variances = dec.eigenvalues.mapv(|l| l.max(0.0));
        for (slot, c) in [ci, cj].into_iter().enumerate() {
            coords.column_mut(slot).assign(&xc.dot(&dec.eigenvectors.column(c)));
        }
    }
    let top = variances[0];
    let degenerate = top <= 1e-300 || variances[cj.max(ci)] <= 1e-12 * top;
    if degenerate {
        coords.column_mut(1).fill(0.0);
    }
    for col in coords.columns_mut() {
        orient(col);
    }
    Ok(Pca2d { coords, variances, components: (ci, cj), degenerate })
}

/// Chordal distances `sqrt(2(1 − R_ij))` between unit-normalized variables.
pub fn correlation_to_chordal(r: &Array2<f64>) -> Result<Array2<f64>> {
    if r.nrows() != r.ncols() {
        return Err(Error::Dimension("correlation matrix must be square".into()));
    }
    if let Some(i) = (0..r.nrows()).find(|&i| (r[[i, i]] - 1.0).abs() > 1e-9) {
        return Err(Error::Contract(format!("diagonal entry {i} is {}, expected 1", r[[i, i]])));
    }
    Ok(r.mapv(|x| (2.0 * (1.0 - x)).max(0.0).sqrt()))
}

/// Classical multidimensional scaling of a distance matrix into two
/// dimensions.
///
/// The doubly centered matrix `−½ J D² J` is decomposed; for chordal
/// distances it equals the centered correlation matrix, so this is PCA of the
/// correlation structure.
pub fn classical_mds(distances: &Array2<f64>, which: Components) -> Result<Pca2d> {
    let n = distances.nrows();
    if n < 3 || distances.ncols() != n {
        return Err(Error::InvalidParameter("MDS needs a square distance matrix over at least 3 points".into()));
    }
    let (ci, cj) = which.indices();
    if ci >= n || cj >= n || ci == cj {
        return Err(Error::InvalidParameter(format!("component pair ({ci}, {cj}) invalid for {n} points")));
    }
    let sq = distances.mapv(|x| x * x);
    let row_mean = sq.mean_axis(Axis(1)).expect("non-empty");
    let grand = row_mean.mean().expect("non-empty");
    let b = Array2::from_shape_fn((n, n), |(i, j)| -0.5 * (sq[[i, j]] - row_mean[i] - row_mean[j] + grand));
    let dec = sym_eig(&b)?;
    let mut coords = Array2::zeros((n, 2));
    for (slot, c) in [ci, cj].into_iter().enumerate() {
        coords.column_mut(slot).assign(&(&dec.eigenvectors.column(c) * dec.eigenvalues[c].max(0.0).sqrt()));
    }
    let variances = dec.eigenvalues.mapv(|l| l.max(0.0) / n as f64);
    let top = variances[0];
    let degenerate = top <= 1e-300 || variances[cj.max(ci)] <= 1e-12 * top;
    if degenerate {
        coords.column_mut(1).fill(0.0);
    }
    for col in coords.columns_mut() {
        orient(col);
    }
    Ok(Pca2d { coords, variances, components: (ci, cj), degenerate })
}

/// Solves `A X = B` for symmetric positive-definite `A` by Cholesky.
pub fn solve_spd(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(Error::Dimension(format!("system {}x{} with right-hand side of {} rows", n, a.ncols(), b.nrows())));
    }
    let max_diag = (0..n).fold(0.0f64, |m, i| m.max(a[[i, i]].abs()));
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut diag = a[[j, j]];
        for k in 0..j {
            diag -= l[[j, k]] * l[[j, k]];
        }
        if !(diag > 1e-12 * max_diag.max(f64::MIN_POSITIVE)) {
            return Err(Error::Singular(format!("pivot {j} is not positive; add ridge regularization")));
        }
        let ljj = diag.sqrt();
        l[[j, j]] = ljj;
        for i in j + 1..n {
            let mut v = a[[i, j]];
            for k in 0..j {
                v -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = v / ljj;
        }
    }
    let mut x = b.clone();
    for mut col in x.columns_mut() {
        for i in 0..n {
            let mut v = col[i];
            for k in 0..i {
                v -= l[[i, k]] * col[k];
            }
            col[i] = v / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut v = col[i];
            for k in i + 1..n {
                v -= l[[k, i]] * col[k];
            }
            col[i] = v / l[[i, i]];
        }
    }
    Ok(x)
}

/// Least-squares fit `y ≈ X β + c` with an unpenalized intercept and ridge
/// penalty `λ‖β‖²`.
#[derive(Debug, Clone)]
pub struct RidgeFit {
    /// One column per target.
    pub coef: Array2<f64>,
    pub intercept: Array1<f64>,
}

impl RidgeFit {
    pub fn predict(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.coef) + &self.intercept
    }
}

pub fn ridge_regression(x: ArrayView2<f64>, y: ArrayView2<f64>, lambda: f64) -> Result<RidgeFit> {
    if x.nrows() != y.nrows() {
        return Err(Error::Dimension(format!("{} inputs but {} targets", x.nrows(), y.nrows())));
    }
    if x.nrows() == 0 {
        return Err(Error::EmptyDataset("regression without samples".into()));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter("ridge strength must be non-negative".into()));
    }
    let xm = x.mean_axis(Axis(0)).expect("non-empty");
    let ym = y.mean_axis(Axis(0)).expect("non-empty");
    let xc = &x - &xm;
    let yc = &y - &ym;
    let mut a = xc.t().dot(&xc);
    for i in 0..a.nrows() {
        a[[i, i]] += lambda;
    }
    let coef = solve_spd(&a, &xc.t().dot(&yc))?;
    let intercept = &ym - &xm.dot(&coef);
    Ok(RidgeFit { coef, intercept })
}

/// Pearson correlation between the entries of two equally shaped matrices.
pub fn matrix_correlation(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    let (ma, mb) = (a.mean().unwrap_or(0.0), b.mean().unwrap_or(0.0));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b.iter()) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return Err(Error::Contract("correlation of a constant matrix is undefined".into()));
    }
    Ok(sab / (saa * sbb).sqrt())
}
