//! Dense complex linear algebra substrate.
//!
//! Every rank, equality and positivity decision in the crate goes through a
//! [`ToleranceConfig`]. The Hermitian eigensolver, Schur form and QR come from
//! `nalgebra`; singular values use a one-sided Jacobi iteration because the
//! `nalgebra` complex SVD loses accuracy on rank-deficient inputs. Everything is
//! wrapped behind a small [`CMatrix`] newtype.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen, QR};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use nalgebra::Complex;

/// Complex scalar.
pub type C64 = Complex<f64>;

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

/// Tolerance policy shared by every decision procedure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceConfig {
    /// Relative tolerance for matrix equality.
    pub eq_tol: f64,
    /// Explicit relative singular-value threshold. `None` selects
    /// `dim * EPSILON * sigma_max`, floored at [`RANK_FLOOR`].
    pub rank_tol: Option<f64>,
    /// Relative eigenvalue floor for positive definiteness.
    pub psd_tol: f64,
}

/// Absolute floor of the default rank threshold.
pub const RANK_FLOOR: f64 = 1e-12;

impl Default for ToleranceConfig {
    fn default() -> Self {
        ToleranceConfig {
            eq_tol: 1e-9,
            rank_tol: None,
            psd_tol: 1e-10,
        }
    }
}

impl ToleranceConfig {
    pub fn with_eq_tol(mut self, eq_tol: f64) -> Self {
        self.eq_tol = eq_tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |t: f64| t.is_finite() && t > 0.0;
        if !ok(self.eq_tol) || !ok(self.psd_tol) || !self.rank_tol.map_or(true, ok) {
            return Err(Error::InvalidInput(format!(
                "tolerances must be finite and strictly positive: {self:?}"
            )));
        }
        Ok(())
    }

    /// Singular values at or below this value are treated as zero.
    pub fn rank_threshold(&self, dim: usize, sigma_max: f64) -> f64 {
        match self.rank_tol {
            Some(t) => t * sigma_max.max(1.0),
            None => (dim as f64 * f64::EPSILON * sigma_max).max(RANK_FLOOR),
        }
    }

    /// `a` and `b` agree to `eq_tol` relative to `max(1, |b|)`.
    pub fn close(&self, distance: f64, scale: f64) -> bool {
        distance <= self.eq_tol * scale.max(1.0)
    }
}

/// Dense complex matrix, row/column counts at least one.
#[derive(Clone, PartialEq)]
pub struct CMatrix(DMatrix<C64>);

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows(), self.cols())?;
        for i in 0..self.rows() {
            write!(f, "  ")?;
            for j in 0..self.cols() {
                let z = self.0[(i, j)];
                write!(f, "{:>10.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl CMatrix {
    pub fn from_inner(m: DMatrix<C64>) -> Self {
        CMatrix(m)
    }

    /// Builds a matrix, rejecting empty shapes and non-finite entries.
    pub fn try_from_inner(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return Err(Error::InvalidInput("matrix must have at least one row and column".into()));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput("matrix entries must be finite".into()));
        }
        Ok(CMatrix(m))
    }

    pub fn inner(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<C64> {
        self.0
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        CMatrix(DMatrix::identity(n, n))
    }

    /// Matrix unit `e_ij` in `M_n`.
    pub fn unit(n: usize, i: usize, j: usize) -> Self {
        let mut m = DMatrix::zeros(n, n);
        m[(i, j)] = c64(1.0, 0.0);
        CMatrix(m)
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        CMatrix(DMatrix::from_fn(rows, cols, f))
    }

    /// Row-major real entries.
    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        CMatrix::from_fn(r, c, |i, j| c64(rows[i][j], 0.0))
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::InvalidInput("ragged matrix rows".into()));
        }
        Self::try_from_inner(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
    }

    pub fn diag_real(d: &[f64]) -> Self {
        let n = d.len();
        CMatrix::from_fn(n, n, |i, j| if i == j { c64(d[i], 0.0) } else { C64::default() })
    }

    /// Column vector.
    pub fn column(v: &[C64]) -> Self {
        CMatrix(DMatrix::from_column_slice(v.len(), 1, v))
    }

    pub fn real_column(v: &[f64]) -> Self {
        CMatrix::from_fn(v.len(), 1, |i, _| c64(v[i], 0.0))
    }

    /// Standard basis vector `e_i` of `C^n`.
    pub fn basis_vector(n: usize, i: usize) -> Self {
        let mut m = DMatrix::zeros(n, 1);
        m[(i, 0)] = c64(1.0, 0.0);
        CMatrix(m)
    }

    /// Entries drawn i.i.d. from the complex standard normal distribution.
    pub fn random_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        CMatrix::from_fn(rows, cols, |_, _| {
            c64(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
        })
    }

    /// Haar-ish unitary from the QR factor of a Gaussian matrix.
    pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let g = Self::random_gaussian(n, n, rng);
        let qr = QR::new(g.0);
        let q = qr.q();
        let r = qr.r();
        // Fix column phases so the distribution does not depend on QR sign conventions.
        let q = DMatrix::from_fn(n, n, |i, j| {
            let d = r[(j, j)];
            let ph = if d.norm() > 0.0 { d / d.norm() } else { c64(1.0, 0.0) };
            q[(i, j)] * ph
        });
        CMatrix(q)
    }

    /// Random Hermitian matrix `(G + G*)/2`.
    pub fn random_hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let g = Self::random_gaussian(n, n, rng);
        (&g + &g.adjoint()).scale(0.5)
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, z: C64) {
        self.0[(i, j)] = z;
    }

    pub fn adjoint(&self) -> Self {
        CMatrix(self.0.adjoint())
    }

    pub fn scale(&self, s: f64) -> Self {
        CMatrix(&self.0 * c64(s, 0.0))
    }

    pub fn scale_c(&self, s: C64) -> Self {
        CMatrix(&self.0 * s)
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    /// Frobenius norm.
    pub fn fro_norm(&self) -> f64 {
        self.0.norm()
    }

    /// Spectral (operator 2-) norm.
    pub fn norm(&self) -> f64 {
        if self.0.iter().all(|z| z.re == 0.0 && z.im == 0.0) {
            return 0.0;
        }
        singular_values(self).first().copied().unwrap_or(0.0)
    }

    /// Frobenius inner product `tr(self* other)`.
    pub fn inner_product(&self, other: &CMatrix) -> C64 {
        self.0.dotc(&other.0)
    }

    /// Column-major vectorisation, matching `nalgebra` storage.
    pub fn vec(&self) -> DVector<C64> {
        DVector::from_column_slice(self.0.as_slice())
    }

    pub fn from_vec(v: &[C64], rows: usize, cols: usize) -> Self {
        CMatrix(DMatrix::from_column_slice(rows, cols, v))
    }

    pub fn column_at(&self, j: usize) -> CMatrix {
        CMatrix(self.0.columns(j, 1).into_owned())
    }

    pub fn columns(&self, start: usize, count: usize) -> CMatrix {
        CMatrix(self.0.columns(start, count).into_owned())
    }

    pub fn submatrix(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> CMatrix {
        CMatrix(self.0.view((r0, c0), (nr, nc)).into_owned())
    }

    pub fn set_submatrix(&mut self, r0: usize, c0: usize, block: &CMatrix) {
        self.0.view_mut((r0, c0), (block.rows(), block.cols())).copy_from(&block.0);
    }

    /// Horizontal concatenation; all parts must share the row count.
    pub fn hstack(parts: &[CMatrix]) -> Result<CMatrix> {
        let rows = parts.first().map(|p| p.rows()).ok_or_else(|| {
            Error::InvalidInput("hstack of an empty list".into())
        })?;
        if parts.iter().any(|p| p.rows() != rows) {
            return Err(Error::DimensionMismatch(format!("hstack expects {rows} rows in every part")));
        }
        let cols: usize = parts.iter().map(|p| p.cols()).sum();
        let mut out = DMatrix::zeros(rows, cols);
        let mut c = 0;
        for p in parts {
            out.view_mut((0, c), (rows, p.cols())).copy_from(&p.0);
            c += p.cols();
        }
        Ok(CMatrix(out))
    }

    pub fn vstack(parts: &[CMatrix]) -> Result<CMatrix> {
        let cols = parts.first().map(|p| p.cols()).ok_or_else(|| {
            Error::InvalidInput("vstack of an empty list".into())
        })?;
        if parts.iter().any(|p| p.cols() != cols) {
            return Err(Error::DimensionMismatch(format!("vstack expects {cols} columns in every part")));
        }
        let rows: usize = parts.iter().map(|p| p.rows()).sum();
        let mut out = DMatrix::zeros(rows, cols);
        let mut r = 0;
        for p in parts {
            out.view_mut((r, 0), (p.rows(), cols)).copy_from(&p.0);
            r += p.rows();
        }
        Ok(CMatrix(out))
    }

    /// Commutator `self*other - other*self`.
    pub fn commutator(&self, other: &CMatrix) -> CMatrix {
        &(self * other) - &(other * self)
    }

    /// `‖self - other‖` (spectral).
    pub fn distance(&self, other: &CMatrix) -> f64 {
        (self - other).norm()
    }

    pub fn is_hermitian(&self, tol: &ToleranceConfig) -> bool {
        self.is_square() && tol.close((self - &self.adjoint()).norm(), self.norm())
    }

    /// Block-diagonal matrix from square blocks.
    pub fn block_diag(blocks: &[CMatrix]) -> CMatrix {
        let n: usize = blocks.iter().map(|b| b.rows()).sum();
        let mut out = CMatrix::zeros(n.max(1), n.max(1));
        let mut off = 0;
        for b in blocks {
            out.set_submatrix(off, off, b);
            off += b.rows();
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl<'a> Mul<&'a CMatrix> for &'a CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &'a CMatrix) -> CMatrix {
        CMatrix(&self.0 * &rhs.0)
    }
}

impl<'a> Add<&'a CMatrix> for &'a CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &'a CMatrix) -> CMatrix {
        CMatrix(&self.0 + &rhs.0)
    }
}

impl<'a> Sub<&'a CMatrix> for &'a CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &'a CMatrix) -> CMatrix {
        CMatrix(&self.0 - &rhs.0)
    }
}

impl Neg for &CMatrix {
    type Output = CMatrix;
    fn neg(self) -> CMatrix {
        CMatrix(-&self.0)
    }
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermitianEig {
    pub values: Vec<f64>,
    /// Unitary whose `k`-th column is the eigenvector of `values[k]`.
    pub vectors: CMatrix,
}

pub fn hermitian_eig(x: &CMatrix, tol: &ToleranceConfig) -> Result<HermitianEig> {
    if !x.is_square() {
        return Err(Error::NotSquare(x.rows(), x.cols()));
    }
    if !x.is_hermitian(tol) {
        return Err(Error::NotHermitian);
    }
    let n = x.rows();
    // Symmetrise exactly so the solver sees a Hermitian input.
    let h = (&x.0 + &x.0.adjoint()) * c64(0.5, 0.0);
    let eig = SymmetricEigen::try_new(h, f64::EPSILON, 0)
        .ok_or_else(|| Error::NumericalFailure("hermitian eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok(HermitianEig { values, vectors: CMatrix(vectors) })
}

/// Thin SVD `m = u diag(σ) v*` with `σ` in descending order.
pub(crate) struct Svd {
    /// `rows x k`, `k = min(rows, cols)`.
    pub u: DMatrix<C64>,
    pub singular_values: Vec<f64>,
    /// `cols x k`; unitary when `rows >= cols`.
    pub v: DMatrix<C64>,
}

const JACOBI_MAX_SWEEPS: usize = 80;

/// Right-multiplies columns `p`, `q` by the unitary `[[c, s e], [-s ē, c]]`.
fn rotate_columns(x: &mut DMatrix<C64>, p: usize, q: usize, c: f64, s: f64, e: C64) {
    for i in 0..x.nrows() {
        let (xp, xq) = (x[(i, p)], x[(i, q)]);
        x[(i, p)] = xp * c - e.conj() * xq * s;
        x[(i, q)] = e * xp * s + xq * c;
    }
}

/// One-sided (Hestenes) Jacobi SVD.
pub(crate) fn svd(m: &CMatrix) -> Result<Svd> {
    let (rows, cols) = (m.rows(), m.cols());
    if rows < cols {
        let t = svd(&m.adjoint())?;
        return Ok(Svd { u: t.v, singular_values: t.singular_values, v: t.u });
    }
    if !m.is_finite() {
        return Err(Error::NumericalFailure("SVD of a matrix with non-finite entries".into()));
    }
    let mut w = m.0.clone();
    let mut v = DMatrix::<C64>::identity(cols, cols);
    let mut converged = cols < 2;
    let rel = rows as f64 * f64::EPSILON;
    // Columns below this norm carry only rounding noise and are left alone.
    let negligible = (f64::EPSILON * m.fro_norm()).powi(2);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let (cp, cq) = (w.column(p), w.column(q));
                let alpha = cp.norm_squared();
                let beta = cq.norm_squared();
                let gamma = cp.dotc(&cq);
                let g = gamma.norm();
                if alpha <= negligible || beta <= negligible || g <= rel * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let e = gamma / g;
                rotate_columns(&mut w, p, q, c, c * t, e);
                rotate_columns(&mut v, p, q, c, c * t, e);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NumericalFailure("Jacobi SVD did not converge".into()));
    }
    let norms: Vec<f64> = (0..cols).map(|j| w.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    let u = DMatrix::from_fn(rows, cols, |i, j| {
        let k = order[j];
        if norms[k] > 0.0 {
            w[(i, k)] / norms[k]
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let v = DMatrix::from_fn(cols, cols, |i, j| v[(i, order[j])]);
    Ok(Svd { u, singular_values: order.iter().map(|&k| norms[k]).collect(), v })
}

/// Singular values in descending order.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    if m.rows() == 0 || m.cols() == 0 {
        return Vec::new();
    }
    svd(m).map(|d| d.singular_values).unwrap_or_else(|_| vec![f64::NAN])
}

/// Numerical rank of `m` under the tolerance policy.
pub fn rank(m: &CMatrix, tol: &ToleranceConfig) -> Result<usize> {
    let s = svd(m)?.singular_values;
    let smax = s.first().copied().unwrap_or(0.0);
    let thr = tol.rank_threshold(m.rows().max(m.cols()), smax);
    Ok(s.iter().filter(|&&v| v > thr).count())
}

/// Orthonormal basis of the column space of `m` (`rows x r`), or `None` when
/// the range is zero.
pub fn range_basis(m: &CMatrix, tol: &ToleranceConfig) -> Result<Option<CMatrix>> {
    if m.fro_norm() == 0.0 {
        return Ok(None);
    }
    let dec = svd(m)?;
    let s = &dec.singular_values;
    let thr = tol.rank_threshold(m.rows().max(m.cols()), s[0]);
    let r = s.iter().filter(|&&v| v > thr).count();
    if r == 0 {
        return Ok(None);
    }
    Ok(Some(CMatrix(dec.u.columns(0, r).into_owned())))
}

/// Orthonormal basis (`cols x k`) of the null space of `m`, or `None` when trivial.
pub fn null_space(m: &CMatrix, tol: &ToleranceConfig) -> Result<Option<CMatrix>> {
    let n = m.cols();
    if m.fro_norm() == 0.0 {
        return Ok(Some(CMatrix::identity(n)));
    }
    // Compress tall inputs to a square triangular factor, pad short ones, so
    // the SVD returns a full right singular basis.
    let work = if m.rows() > n {
        CMatrix(QR::new(m.0.clone()).unpack_r())
    } else if m.rows() < n {
        let mut padded = DMatrix::zeros(n, n);
        padded.view_mut((0, 0), (m.rows(), n)).copy_from(&m.0);
        CMatrix(padded)
    } else {
        m.clone()
    };
    let dec = svd(&work)?;
    let s = &dec.singular_values;
    let thr = tol.rank_threshold(m.rows().max(n), s[0]);
    let r = s.iter().filter(|&&v| v > thr).count();
    if r == n {
        return Ok(None);
    }
    Ok(Some(CMatrix(dec.v.columns(r, n - r).into_owned())))
}

/// Null space of a tall stack of linear maps fed block by block. Row blocks are
/// compressed with QR whenever the stack grows past twice the column count.
pub fn stacked_null_space<I>(blocks: I, cols: usize, tol: &ToleranceConfig) -> Result<Option<CMatrix>>
where
    I: IntoIterator<Item = CMatrix>,
{
    let mut acc: Option<DMatrix<C64>> = None;
    for b in blocks {
        if b.cols() != cols {
            return Err(Error::DimensionMismatch(format!(
                "stacked map has {} columns, expected {cols}",
                b.cols()
            )));
        }
        acc = Some(match acc {
            None => b.0,
            Some(prev) => {
                let mut s = DMatrix::zeros(prev.nrows() + b.rows(), cols);
                s.view_mut((0, 0), (prev.nrows(), cols)).copy_from(&prev);
                s.view_mut((prev.nrows(), 0), (b.rows(), cols)).copy_from(&b.0);
                s
            }
        });
        if let Some(a) = &acc {
            if a.nrows() > 2 * cols {
                acc = Some(QR::new(a.clone()).unpack_r());
            }
        }
    }
    match acc {
        None => Ok(Some(CMatrix::identity(cols))),
        Some(a) => null_space(&CMatrix(a), tol),
    }
}

/// Projection onto the span of the given column vectors.
pub fn range_projection(vectors: &[CMatrix], dim: usize, tol: &ToleranceConfig) -> Result<CMatrix> {
    if vectors.is_empty() {
        return Ok(CMatrix::zeros(dim, dim));
    }
    if let Some(bad) = vectors.iter().find(|v| v.rows() != dim) {
        return Err(Error::DimensionMismatch(format!(
            "vector of dimension {} in a space of dimension {dim}",
            bad.rows()
        )));
    }
    let stacked = CMatrix::hstack(vectors)?;
    Ok(match range_basis(&stacked, tol)? {
        None => CMatrix::zeros(dim, dim),
        Some(q) => projector_from_basis(&q),
    })
}

/// Orthonormal basis of the range of an orthogonal projection, chosen by
/// column-pivoted Gram-Schmidt on the columns of `p`. Coordinate projections
/// yield their standard basis vectors exactly.
pub fn projection_basis(p: &CMatrix, tol: &ToleranceConfig) -> Result<Option<CMatrix>> {
    let n = p.rows();
    let k = rank(p, tol)?;
    if k == 0 {
        return Ok(None);
    }
    let mut cols: Vec<DVector<C64>> = (0..n).map(|j| p.0.column(j).into_owned()).collect();
    let mut picked: Vec<DVector<C64>> = Vec::with_capacity(k);
    for _ in 0..k {
        let (best, norm) = cols
            .iter()
            .enumerate()
            .map(|(j, c)| (j, c.norm()))
            .fold((0, -1.0), |acc, x| if x.1 > acc.1 + 1e-12 { x } else { acc });
        if norm <= 0.0 {
            return Err(Error::NumericalFailure("projection range basis collapsed".into()));
        }
        let mut v = cols[best].clone() / c64(norm, 0.0);
        for q in &picked {
            let c = q.dotc(&v);
            v -= q * c;
        }
        let nv = v.norm();
        v /= c64(nv, 0.0);
        for c in cols.iter_mut() {
            let proj = v.dotc(c);
            *c -= &v * proj;
        }
        picked.push(v);
    }
    let mut out = DMatrix::zeros(n, k);
    for (j, v) in picked.iter().enumerate() {
        out.set_column(j, v);
    }
    Ok(Some(CMatrix(out)))
}

/// `Q Q*` for a matrix with orthonormal columns, symmetrised.
pub fn projector_from_basis(q: &CMatrix) -> CMatrix {
    let p = q * &q.adjoint();
    (&p + &p.adjoint()).scale(0.5)
}

/// Smallest eigenvalue and spectral norm of a Hermitian matrix.
pub fn hermitian_extremes(x: &CMatrix, tol: &ToleranceConfig) -> Result<(f64, f64)> {
    let e = hermitian_eig(x, tol)?;
    let lo = e.values[0];
    let hi = e.values[e.values.len() - 1];
    Ok((lo, lo.abs().max(hi.abs())))
}

/// Checks Hermitian positive definiteness against `psd_tol`.
pub fn require_positive_definite(x: &CMatrix, tol: &ToleranceConfig) -> Result<()> {
    if !x.is_square() {
        return Err(Error::NotSquare(x.rows(), x.cols()));
    }
    let (lo, norm) = hermitian_extremes(x, tol)?;
    if lo <= tol.psd_tol * norm {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: lo, norm });
    }
    Ok(())
}

/// Upper triangular `U` with positive real diagonal such that `U* U = X`.
pub fn cholesky_upper(x: &CMatrix, tol: &ToleranceConfig) -> Result<CMatrix> {
    require_positive_definite(x, tol)?;
    cholesky_upper_unchecked(x)
}

/// Column-oriented Cholesky without the spectral positivity pre-check.
pub(crate) fn cholesky_upper_unchecked(x: &CMatrix) -> Result<CMatrix> {
    let n = x.rows();
    let mut u = DMatrix::<C64>::zeros(n, n);
    for j in 0..n {
        let mut d = x.0[(j, j)].re;
        for k in 0..j {
            d -= u[(k, j)].norm_sqr();
        }
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: d, norm: x.norm() });
        }
        let ujj = d.sqrt();
        u[(j, j)] = c64(ujj, 0.0);
        for i in (j + 1)..n {
            let mut s = x.0[(j, i)];
            for k in 0..j {
                s -= u[(k, j)].conj() * u[(k, i)];
            }
            u[(j, i)] = s / ujj;
        }
    }
    Ok(CMatrix(u))
}

/// Inverse of an upper triangular matrix by back substitution.
pub fn upper_triangular_inverse(u: &CMatrix) -> Result<CMatrix> {
    let n = u.rows();
    let mut inv = DMatrix::<C64>::zeros(n, n);
    for j in 0..n {
        if u.0[(j, j)].norm() == 0.0 {
            return Err(Error::NumericalFailure("singular triangular factor".into()));
        }
    }
    for col in 0..n {
        for i in (0..=col).rev() {
            let mut s = if i == col { c64(1.0, 0.0) } else { C64::default() };
            for k in (i + 1)..=col {
                s -= u.0[(i, k)] * inv[(k, col)];
            }
            inv[(i, col)] = s / u.0[(i, i)];
        }
    }
    Ok(CMatrix(inv))
}

/// General inverse via LU.
pub fn inverse(m: &CMatrix) -> Result<CMatrix> {
    if !m.is_square() {
        return Err(Error::NotSquare(m.rows(), m.cols()));
    }
    m.0.clone()
        .try_inverse()
        .map(CMatrix)
        .ok_or_else(|| Error::NumericalFailure("matrix is singular".into()))
}

/// Principal square root of a positive semidefinite matrix.
pub fn psd_sqrt(x: &CMatrix, tol: &ToleranceConfig) -> Result<CMatrix> {
    let e = hermitian_eig(x, tol)?;
    let d = CMatrix::diag_real(&e.values.iter().map(|&l| l.max(0.0).sqrt()).collect::<Vec<_>>());
    let r = &(&e.vectors * &d) * &e.vectors.adjoint();
    Ok((&r + &r.adjoint()).scale(0.5))
}

/// Complex eigenvalues of a general square matrix (diagonal of its Schur form).
pub fn eigenvalues(m: &CMatrix) -> Result<Vec<C64>> {
    if !m.is_square() {
        return Err(Error::NotSquare(m.rows(), m.cols()));
    }
    let schur = Schur::try_new(m.0.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::NumericalFailure("Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok((0..m.rows()).map(|i| t[(i, i)]).collect())
}

/// The `count` right singular vectors of `m` with the smallest singular values.
pub fn smallest_right_singular_vectors(m: &CMatrix, count: usize) -> Result<CMatrix> {
    let n = m.cols();
    let work = if m.rows() < n {
        let mut padded = DMatrix::zeros(n, n);
        padded.view_mut((0, 0), (m.rows(), n)).copy_from(&m.0);
        CMatrix(padded)
    } else {
        m.clone()
    };
    let dec = svd(&work)?;
    let k = count.min(n);
    Ok(CMatrix(dec.v.columns(n - k, k).into_owned()))
}

/// Orthonormal basis of a set of matrices in the Frobenius inner product.
///
/// Classical Gram-Schmidt applied twice per candidate; a candidate is dropped
/// when its residual falls under the rank threshold relative to its own norm.
#[derive(Debug, Clone)]
pub struct FrobeniusBasis {
    rows: usize,
    cols: usize,
    elems: Vec<CMatrix>,
}

impl FrobeniusBasis {
    pub fn new(rows: usize, cols: usize) -> Self {
        FrobeniusBasis { rows, cols, elems: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elems.is_empty()
    }

    pub fn elements(&self) -> &[CMatrix] {
        &self.elems
    }

    pub fn into_elements(self) -> Vec<CMatrix> {
        self.elems
    }

    fn residual(&self, x: &CMatrix) -> CMatrix {
        let mut r = x.clone();
        for _ in 0..2 {
            for b in &self.elems {
                let c = b.inner_product(&r);
                r = &r - &b.scale_c(c);
            }
        }
        r
    }

    /// Adds `x` if it is independent of the current span; returns whether it was added.
    /// Candidates are judged on the scale `max(‖x‖_F, 1)`, so rounding noise is never promoted.
    pub fn push(&mut self, x: &CMatrix, tol: &ToleranceConfig) -> bool {
        self.push_scaled(x, x.fro_norm().max(1.0), tol)
    }

    /// As [`push`](Self::push) with an explicit scale, e.g. `‖a‖_F ‖b‖_F` for a product `ab`.
    pub fn push_scaled(&mut self, x: &CMatrix, scale: f64, tol: &ToleranceConfig) -> bool {
        debug_assert_eq!((x.rows(), x.cols()), (self.rows, self.cols));
        let r = self.residual(x);
        let nr = r.fro_norm();
        if nr <= tol.rank_threshold(self.rows * self.cols, scale) {
            return false;
        }
        // A second pass restores orthogonality lost to cancellation in tiny residuals.
        let r = self.residual(&r.scale(1.0 / nr));
        let nr = r.fro_norm();
        self.elems.push(r.scale(1.0 / nr));
        true
    }

    /// Frobenius distance from `x` to the span.
    pub fn distance(&self, x: &CMatrix) -> f64 {
        self.residual(x).fro_norm()
    }
}
