//! Nest-Cholesky factorization, block triangularization, factorization verdicts,
//! non-logmodularity witnesses and the numerical gap estimator.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::algebra::{AmbientAlgebra, MatrixAlgebra};
use crate::error::{Error, Result};
use crate::lattice::{compute_lat, Classification, Projection, ProjectionLattice};
use crate::numerics::{
    c64, cholesky_upper, inverse, projection_basis, psd_sqrt, require_positive_definite, upper_triangular_inverse,
    CMatrix, ToleranceConfig,
};
use crate::reflexivity::{reflexivity_from_lattice, ReflexivityStatus};
use crate::twoproj::halmos_decompose;

/// Number of starts of the gap estimator.
pub const DEFAULT_STARTS: usize = 8;
/// Iteration limit per start of the gap estimator.
pub const DEFAULT_MAX_ITER: usize = 500;
/// Default coupling strength of ORTHOGONAL and COMMUTING witnesses.
pub const DEFAULT_EPSILON: f64 = 0.25;
/// Candidates with `σ_min < SINGULARITY_RATIO · σ_max` are rejected.
pub const SINGULARITY_RATIO: f64 = 1e-6;

/// A complete nest `0 = p_0 < p_1 < … < p_m = I`.
#[derive(Debug, Clone)]
pub struct Nest {
    projections: Vec<Projection>,
    adapted: OnceLock<CMatrix>,
}

impl Nest {
    /// Validates a strictly increasing chain from `0` to `I`.
    pub fn new(projections: Vec<Projection>, tol: &ToleranceConfig) -> Result<Self> {
        let Some(first) = projections.first() else {
            return Err(Error::NotANest("empty chain".into()));
        };
        let n = first.dim();
        if projections.iter().any(|p| p.dim() != n) {
            return Err(Error::DimensionMismatch("nest projections of different dimensions".into()));
        }
        if first.rank() != 0 || projections.last().map(Projection::rank) != Some(n) {
            return Err(Error::NotANest("a complete nest starts at 0 and ends at I".into()));
        }
        for w in projections.windows(2) {
            if w[0].rank() >= w[1].rank() || !w[0].le(&w[1], tol) {
                return Err(Error::NotANest(format!(
                    "projections of rank {} and {} are not strictly nested",
                    w[0].rank(),
                    w[1].rank()
                )));
            }
        }
        Ok(Nest { projections, adapted: OnceLock::new() })
    }

    /// Sorts a chain by rank, drops duplicates and adds `0` and `I`.
    pub fn from_chain(n: usize, chain: &[Projection], tol: &ToleranceConfig) -> Result<Self> {
        let mut ps: Vec<Projection> = vec![Projection::zero(n), Projection::identity(n)];
        for p in chain {
            if p.dim() != n {
                return Err(Error::DimensionMismatch(format!("projection of dimension {} in a nest on C^{n}", p.dim())));
            }
            if !ps.iter().any(|q| q.approx_eq(p, tol)) {
                ps.push(p.clone());
            }
        }
        ps.sort_by_key(Projection::rank);
        Self::new(ps, tol)
    }

    /// Coordinate nest from index sets, e.g. `[[0], [0, 1]]`.
    pub fn from_index_sets(n: usize, sets: &[Vec<usize>], tol: &ToleranceConfig) -> Result<Self> {
        if let Some(&bad) = sets.iter().flatten().find(|&&i| i >= n) {
            return Err(Error::InvalidInput(format!("index {bad} out of range for dimension {n}")));
        }
        let ps: Vec<Projection> = sets.iter().map(|s| Projection::coordinate(n, s)).collect();
        Self::from_chain(n, &ps, tol)
    }

    /// Coordinate nest whose atoms have the given dimensions in order.
    pub fn from_atom_dims(dims: &[usize], tol: &ToleranceConfig) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::InvalidInput(format!("atom dimensions must be positive, got {dims:?}")));
        }
        let n = dims.iter().sum();
        let mut acc = 0;
        let sets: Vec<Vec<usize>> = dims
            .iter()
            .map(|&d| {
                acc += d;
                (0..acc).collect()
            })
            .collect();
        Self::from_index_sets(n, &sets, tol)
    }

    /// The nest of a lattice classified as NEST.
    pub fn from_lattice(l: &ProjectionLattice, tol: &ToleranceConfig) -> Result<Self> {
        if l.classification() != Classification::Nest {
            return Err(Error::NotANest(format!("lattice is {}", l.classification())));
        }
        Self::from_chain(l.dim(), l.elements(), tol)
    }

    pub fn projections(&self) -> &[Projection] {
        &self.projections
    }

    pub fn dim(&self) -> usize {
        self.projections[0].dim()
    }

    pub fn atom_dims(&self) -> Vec<usize> {
        self.projections.windows(2).map(|w| w[1].rank() - w[0].rank()).collect()
    }

    /// Unitary whose leading columns span each `p_k`; computed once and cached.
    pub fn adapted_basis(&self, tol: &ToleranceConfig) -> Result<&CMatrix> {
        if let Some(u) = self.adapted.get() {
            return Ok(u);
        }
        let mut cols = Vec::new();
        for w in self.projections.windows(2) {
            let r = w[1].matrix() - w[0].matrix();
            let b = projection_basis(&r, tol)?.ok_or_else(|| Error::NotANest("empty atom".into()))?;
            cols.push(b);
        }
        let u = CMatrix::hstack(&cols)?;
        Ok(self.adapted.get_or_init(|| u))
    }

    /// Every projection lies in the ambient algebra.
    pub fn check_in_ambient(&self, m: &AmbientAlgebra, tol: &ToleranceConfig) -> Result<()> {
        for p in &self.projections {
            m.check_dim(p.matrix())?;
            let residual = m.residual(p.matrix())?;
            if !tol.close(residual, p.matrix().fro_norm()) {
                return Err(Error::OutsideAmbient { residual });
            }
        }
        Ok(())
    }

    /// `max_k ‖p_k⊥ x p_k‖ / max(1, ‖x‖)`: distance of `x` from `Alg(E)` in structure.
    pub fn defect(&self, x: &CMatrix) -> f64 {
        let scale = x.norm().max(1.0);
        self.projections
            .iter()
            .map(|p| (&(p.complement().matrix() * x) * p.matrix()).norm() / scale)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FactorizationStatus {
    Factored,
    Gap,
}

/// Per-start record of the gap estimator.
#[derive(Debug, Clone, Serialize)]
pub struct StartTrace {
    pub start: usize,
    pub iterations: usize,
    /// Relative operator-norm residual `‖a*a − X‖ / ‖X‖` at the end of the run.
    pub residual: f64,
    pub stop: String,
}

/// Comparison of the gap estimator with the structural nest-Cholesky factor.
#[derive(Debug, Clone, Serialize)]
pub struct CrossCheck {
    pub nest_residual: f64,
    pub agrees: bool,
}

#[derive(Debug, Clone)]
pub struct FactorizationReport {
    pub status: FactorizationStatus,
    pub s: Option<CMatrix>,
    pub s_inv: Option<CMatrix>,
    /// `‖S*S − X‖ / ‖X‖` (operator norm).
    pub residual: f64,
    pub gap: Option<f64>,
    pub iterations: usize,
    /// Structural or span distance of `S` and `S⁻¹` from the algebra.
    pub membership_residual: Option<f64>,
    pub membership_residual_inv: Option<f64>,
    pub trace: Vec<StartTrace>,
    pub cross_check: Option<CrossCheck>,
}

fn check_pd(x: &CMatrix, n: usize, tol: &ToleranceConfig) -> Result<()> {
    if x.rows() != n || x.cols() != n {
        return Err(Error::DimensionMismatch(format!("expected a {n}x{n} matrix, got {}x{}", x.rows(), x.cols())));
    }
    if !x.is_hermitian(tol) {
        return Err(Error::NotHermitian);
    }
    require_positive_definite(x, tol)
}

/// `X = S*S` with `S, S⁻¹ ∈ Alg(E)`, by ordinary Cholesky in a nest-adapted basis.
///
/// An upper triangular factor is block upper triangular for every partition, so
/// the diagonal blocks are the Cholesky factors of the successive Schur complements.
pub fn nest_cholesky(x: &CMatrix, e: &Nest, tol: &ToleranceConfig) -> Result<FactorizationReport> {
    let n = e.dim();
    check_pd(x, n, tol)?;
    let u = e.adapted_basis(tol)?;
    let y = &(&u.adjoint() * x) * u;
    let r = cholesky_upper(&(&y + &y.adjoint()).scale(0.5), tol)?;
    let r_inv = upper_triangular_inverse(&r)?;
    let s = &(u * &r) * &u.adjoint();
    let s_inv = &(u * &r_inv) * &u.adjoint();
    let residual = (&(&s.adjoint() * &s) - x).norm() / x.norm();
    Ok(FactorizationReport {
        status: FactorizationStatus::Factored,
        membership_residual: Some(e.defect(&s)),
        membership_residual_inv: Some(e.defect(&s_inv)),
        s: Some(s),
        s_inv: Some(s_inv),
        residual,
        gap: None,
        iterations: 0,
        trace: Vec::new(),
        cross_check: None,
    })
}

/// Block upper triangular form of an algebra whose lattice is a nest.
#[derive(Debug, Clone)]
pub struct Triangularization {
    pub u: CMatrix,
    pub nest: Nest,
    pub atom_dims: Vec<usize>,
    /// Largest lower-left block of `U* a U` over the algebra basis, relative to `max(1, ‖a‖)`.
    pub max_lower_left: f64,
}

/// Largest strictly-lower block of `y` for the given diagonal block sizes.
pub fn lower_left_norm(y: &CMatrix, dims: &[usize]) -> f64 {
    let mut offs = Vec::with_capacity(dims.len());
    let mut acc = 0;
    for &d in dims {
        offs.push(acc);
        acc += d;
    }
    let mut worst = 0.0f64;
    for (j, (&oj, &dj)) in offs.iter().zip(dims).enumerate() {
        for (&oi, &di) in offs.iter().zip(dims).skip(j + 1) {
            worst = worst.max(y.submatrix(oi, oj, di, dj).norm());
        }
    }
    worst
}

pub fn triangularize_with_lattice(
    a: &MatrixAlgebra,
    lat: &ProjectionLattice,
    tol: &ToleranceConfig,
) -> Result<Triangularization> {
    if lat.classification() != Classification::Nest {
        return Err(Error::NotApplicable(format!(
            "triangularization needs a nest lattice, found {}",
            lat.classification()
        )));
    }
    let nest = Nest::from_lattice(lat, tol)?;
    let u = nest.adapted_basis(tol)?.clone();
    let dims = nest.atom_dims();
    let max_lower_left = a
        .basis()
        .iter()
        .map(|b| lower_left_norm(&(&(&u.adjoint() * b) * &u), &dims) / b.norm().max(1.0))
        .fold(0.0, f64::max);
    if max_lower_left > tol.eq_tol {
        return Err(Error::NumericalFailure(format!(
            "adapted basis leaves a lower-left block of norm {max_lower_left:e}"
        )));
    }
    Ok(Triangularization { u, nest, atom_dims: dims, max_lower_left })
}

pub fn triangularize(a: &MatrixAlgebra, seed: u64, budget: usize, tol: &ToleranceConfig) -> Result<Triangularization> {
    let lat = compute_lat(a, seed, budget, tol)?;
    triangularize_with_lattice(a, &lat, tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Yes,
    No,
    Indeterminate,
}

#[derive(Debug, Clone)]
pub struct FactorizationVerdict {
    pub verdict: Verdict,
    pub reason: String,
    pub lattice: Option<ProjectionLattice>,
    /// Nest of the compression to each ambient block, when the verdict is yes.
    pub block_nests: Vec<Nest>,
    /// Present for factor ambients with a positive verdict.
    pub triangularization: Option<Triangularization>,
}

/// Whether `A` has factorization in its finite-dimensional ambient.
///
/// In `M_{n_1} ⊕ … ⊕ M_{n_k}` this holds exactly when `A` is reflexive and the
/// lattice compressed to every block is a nest; in a factor, when `Lat A` is a
/// nest and `A = Alg Lat A`.
pub fn has_factorization_fd(
    a: &MatrixAlgebra,
    seed: u64,
    budget: usize,
    tol: &ToleranceConfig,
) -> Result<FactorizationVerdict> {
    let lat = match compute_lat(a, seed, budget, tol) {
        Ok(l) => l,
        Err(Error::NonCslSuspected { cap }) => {
            return Ok(FactorizationVerdict {
                verdict: Verdict::Indeterminate,
                reason: format!("lattice enumeration exceeded {cap} elements"),
                lattice: None,
                block_nests: Vec::new(),
                triangularization: None,
            })
        }
        Err(e) => return Err(e),
    };
    factorization_from_lattice(a, lat, tol)
}

pub fn factorization_from_lattice(
    a: &MatrixAlgebra,
    lat: ProjectionLattice,
    tol: &ToleranceConfig,
) -> Result<FactorizationVerdict> {
    let no = |reason: String, lat: ProjectionLattice| FactorizationVerdict {
        verdict: Verdict::No,
        reason,
        lattice: Some(lat),
        block_nests: Vec::new(),
        triangularization: None,
    };
    if lat.classification() == Classification::NonCsl {
        return Ok(no("invariant projections fail to commute".into(), lat));
    }
    if !lat.complete() {
        return Ok(FactorizationVerdict {
            verdict: Verdict::Indeterminate,
            reason: "lattice enumeration did not complete".into(),
            lattice: Some(lat),
            block_nests: Vec::new(),
            triangularization: None,
        });
    }
    match reflexivity_from_lattice(a, &lat, tol)? {
        ReflexivityStatus::Reflexive => {}
        ReflexivityStatus::NotReflexive { extra_dim } => {
            return Ok(no(format!("not reflexive: Alg Lat A is larger by {extra_dim} dimensions"), lat))
        }
        ReflexivityStatus::NotApplicable => return Ok(no("reflexivity not applicable".into(), lat)),
    }
    let ambient = a.ambient();
    let mut block_nests = Vec::new();
    for (off, d) in ambient.blocks() {
        let n = ambient.dim();
        let chain: Vec<Projection> = lat
            .elements()
            .iter()
            .map(|p| Projection::from_hermitian(p.matrix().submatrix(off, off, d, d)))
            .collect();
        let ordered = chain
            .iter()
            .enumerate()
            .all(|(i, p)| chain[i + 1..].iter().all(|q| p.le(q, tol) || q.le(p, tol)));
        if !ordered {
            let why = if ambient.is_factor() {
                "lattice is a commutative subspace lattice but not a nest".to_string()
            } else {
                format!("lattice restricted to the block at offset {off} of {n} is not a nest")
            };
            return Ok(no(why, lat));
        }
        block_nests.push(Nest::from_chain(d, &chain, tol)?);
    }
    let triangularization =
        if ambient.is_factor() { Some(triangularize_with_lattice(a, &lat, tol)?) } else { None };
    Ok(FactorizationVerdict {
        verdict: Verdict::Yes,
        reason: "reflexive with a nest lattice in every block".into(),
        lattice: Some(lat),
        block_nests,
        triangularization,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WitnessMode {
    Orthogonal,
    Commuting,
    Generic,
}

#[derive(Debug, Clone)]
pub struct Witness {
    /// Positive invertible element of the ambient outside `{a*a : a ∈ Alg{p, q}}`.
    pub z: CMatrix,
    /// The partial isometry used in the construction.
    pub v: CMatrix,
}

/// Unit vectors `a ∈ ran r1`, `b ∈ ran r2` lying in one ambient block.
fn connecting_vectors(r1: &CMatrix, r2: &CMatrix, m: &AmbientAlgebra, tol: &ToleranceConfig) -> Result<(CMatrix, CMatrix)> {
    let n = m.dim();
    for (off, d) in m.blocks() {
        let sub = |r: &CMatrix| projection_basis(&r.submatrix(off, off, d, d), tol);
        if let (Some(ba), Some(bb)) = (sub(r1)?, sub(r2)?) {
            let embed = |v: CMatrix| {
                let mut e = CMatrix::zeros(n, 1);
                e.set_submatrix(off, 0, &v);
                e
            };
            return Ok((embed(ba.column_at(0)), embed(bb.column_at(0))));
        }
    }
    Err(Error::PreconditionViolated("no partial isometry in the ambient connects the two corners".into()))
}

/// The positive invertible `Z` from the obstruction lemmas, built from `p` and `q`.
pub fn witness_generator(
    p: &Projection,
    q: &Projection,
    m: &AmbientAlgebra,
    mode: WitnessMode,
    epsilon: f64,
    alpha: f64,
    tol: &ToleranceConfig,
) -> Result<Witness> {
    let n = m.dim();
    for x in [p, q] {
        m.check_dim(x.matrix())?;
        let residual = m.residual(x.matrix())?;
        if !tol.close(residual, x.matrix().fro_norm()) {
            return Err(Error::OutsideAmbient { residual });
        }
    }
    let id = CMatrix::identity(n);
    let coupled = |v: &CMatrix| -> Result<Witness> {
        if !(epsilon > 0.0 && epsilon < 0.5) {
            return Err(Error::InvalidInput(format!("epsilon must lie in (0, 1/2), got {epsilon}")));
        }
        let z = &id + &(v + &v.adjoint()).scale(epsilon);
        Ok(Witness { z, v: v.clone() })
    };
    match mode {
        WitnessMode::Orthogonal => {
            if p.is_zero() || q.is_zero() || (p.matrix() * q.matrix()).norm() > tol.eq_tol {
                return Err(Error::PreconditionViolated("ORTHOGONAL needs nonzero p, q with pq = 0".into()));
            }
            let (a, b) = connecting_vectors(p.matrix(), q.matrix(), m, tol)?;
            coupled(&(&b * &a.adjoint()))
        }
        WitnessMode::Commuting => {
            if !p.commutes(q, tol) {
                return Err(Error::PreconditionViolated("COMMUTING needs pq = qp".into()));
            }
            let r1 = p.matrix() * q.complement().matrix();
            let r2 = p.complement().matrix() * q.matrix();
            if r1.norm() <= tol.eq_tol || r2.norm() <= tol.eq_tol {
                return Err(Error::PreconditionViolated("COMMUTING needs pq⊥ ≠ 0 and p⊥q ≠ 0".into()));
            }
            let (a, b) = connecting_vectors(&r1, &r2, m, tol)?;
            coupled(&(&b * &a.adjoint()))
        }
        WitnessMode::Generic => {
            if alpha < 1.0 {
                return Err(Error::InvalidInput(format!("alpha must be at least 1, got {alpha}")));
            }
            let h = halmos_decompose(p, q, tol)?;
            if h.generic_dim == 0 {
                return Err(Error::PreconditionViolated("the pair has no generic part".into()));
            }
            let (k1, k2) = (h.generic_first(), h.generic_second());
            let swap = &(&k2 * &k1.adjoint()) + &(&k1 * &k2.adjoint());
            let p1 = &k1 * &k1.adjoint();
            let p2 = &k2 * &k2.adjoint();
            // Identity off the generic part, [[1, α], [α, α² + 1]] on K ⊕ K.
            let z = &(&id + &swap.scale(alpha)) + &p2.scale(alpha * alpha);
            debug_assert!(p1.distance(&(&p1 * &p1)) < 1e-9);
            let residual = m.residual(&z)?;
            if !tol.close(residual, z.fro_norm()) {
                return Err(Error::PreconditionViolated(
                    "the generic part does not fit inside one ambient block".into(),
                ));
            }
            Ok(Witness { z, v: swap })
        }
    }
}

/// Residual vector and real Jacobian of `θ ↦ (a*a − X) / s` with `a = Σ (θ_k + iθ_{d+k}) b_k`.
struct GapProblem<'a> {
    x: &'a CMatrix,
    basis: &'a [CMatrix],
    scale: f64,
}

impl GapProblem<'_> {
    fn element(&self, theta: &[f64]) -> CMatrix {
        let d = self.basis.len();
        let n = self.x.rows();
        self.basis
            .iter()
            .enumerate()
            .fold(CMatrix::zeros(n, n), |acc, (k, b)| &acc + &b.scale_c(c64(theta[k], theta[d + k])))
    }

    fn residual(&self, a: &CMatrix) -> Vec<f64> {
        let r = (&(&a.adjoint() * a) - self.x).vec();
        r.iter().map(|z| z.re / self.scale).chain(r.iter().map(|z| z.im / self.scale)).collect()
    }

    fn jacobian(&self, a: &CMatrix) -> DMatrix<f64> {
        let d = self.basis.len();
        let m = self.x.rows() * self.x.cols();
        let mut j = DMatrix::zeros(2 * m, 2 * d);
        let i = c64(0.0, 1.0);
        for (k, b) in self.basis.iter().enumerate() {
            let ba = &b.adjoint() * a;
            let ab = &a.adjoint() * b;
            let re = (&ba + &ab).vec();
            let im = (&ab - &ba).scale_c(i).vec();
            for (col, v) in [(k, re), (d + k, im)] {
                for r in 0..m {
                    j[(r, col)] = v[r].re / self.scale;
                    j[(m + r, col)] = v[r].im / self.scale;
                }
            }
        }
        j
    }
}

fn well_conditioned(a: &CMatrix) -> bool {
    let s = crate::numerics::singular_values(a);
    let (lo, hi) = (s.last().copied().unwrap_or(0.0), s.first().copied().unwrap_or(0.0));
    hi > 0.0 && lo >= SINGULARITY_RATIO * hi
}

fn sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Levenberg–Marquardt from one start. Returns the final parameters, iteration count and stop reason.
fn levenberg_marquardt(problem: &GapProblem, mut theta: Vec<f64>, max_iter: usize) -> (Vec<f64>, usize, &'static str) {
    let p = theta.len();
    let mut a = problem.element(&theta);
    if !well_conditioned(&a) {
        return (theta, 0, "singular start");
    }
    let mut r = problem.residual(&a);
    let mut f = sq(&r);
    let mut mu = 1e-3;
    for it in 0..max_iter {
        if f < 1e-30 {
            return (theta, it, "converged");
        }
        let j = problem.jacobian(&a);
        let jt = j.transpose();
        let jtj = &jt * &j;
        let g = &jt * nalgebra::DVector::from_column_slice(&r);
        if g.norm() < 1e-15 {
            return (theta, it, "stationary");
        }
        loop {
            let mut lhs = jtj.clone();
            for k in 0..p {
                lhs[(k, k)] += mu * (1.0 + jtj[(k, k)]);
            }
            let step = match lhs.cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => {
                    mu *= 10.0;
                    continue;
                }
            };
            let trial: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + s).collect();
            let ta = problem.element(&trial);
            let accepted = well_conditioned(&ta) && {
                let tr = problem.residual(&ta);
                let tf = sq(&tr);
                if tf < f {
                    let rel = (f - tf) / f.max(1e-300);
                    theta = trial;
                    a = ta;
                    r = tr;
                    f = tf;
                    mu = (mu / 3.0).max(1e-12);
                    if rel < 1e-14 || step.norm() < 1e-15 * (1.0 + sq(&theta).sqrt()) {
                        return (theta, it + 1, "stationary");
                    }
                    true
                } else {
                    false
                }
            };
            if accepted {
                break;
            }
            mu *= 4.0;
            if mu > 1e16 {
                return (theta, it + 1, "stalled");
            }
        }
    }
    (theta, max_iter, "iteration limit")
}

/// Estimates `inf ‖a*a − X‖ / ‖X‖` over invertible `a ∈ A` by multi-start local optimization.
///
/// The result is an upper bound on the infimum. When the lattice of `A` is a
/// nest and `A` is reflexive the estimate is compared with nest-Cholesky.
pub fn logmodularity_gap(
    x: &CMatrix,
    a: &MatrixAlgebra,
    seed: u64,
    max_iter: usize,
    tol: &ToleranceConfig,
) -> Result<FactorizationReport> {
    let n = a.n();
    check_pd(x, n, tol)?;
    let xn = x.norm();
    let problem = GapProblem { x, basis: a.basis(), scale: xn };
    let d = a.dim();
    let to_theta = |m: &CMatrix| -> Vec<f64> {
        let c = a.coefficients(m);
        c.iter().map(|z| z.re).chain(c.iter().map(|z| z.im)).collect()
    };
    let root = xn.sqrt();
    let mut starts = vec![
        to_theta(&cholesky_upper(x, tol)?),
        to_theta(&psd_sqrt(x, tol)?),
        to_theta(&CMatrix::identity(n).scale(root)),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while starts.len() < DEFAULT_STARTS {
        let mut t = to_theta(&CMatrix::identity(n).scale(root));
        for v in t.iter_mut() {
            let g: f64 = StandardNormal.sample(&mut rng);
            *v += 0.5 * root * g / (d as f64).sqrt();
        }
        starts.push(t);
    }
    let mut best: Option<(f64, CMatrix)> = None;
    let mut trace = Vec::with_capacity(starts.len());
    let mut iterations = 0;
    for (k, start) in starts.into_iter().enumerate() {
        let (theta, its, stop) = levenberg_marquardt(&problem, start, max_iter);
        iterations += its;
        let cand = problem.element(&theta);
        let residual = (&(&cand.adjoint() * &cand) - x).norm() / xn;
        trace.push(StartTrace { start: k, iterations: its, residual, stop: stop.to_string() });
        if well_conditioned(&cand) && best.as_ref().is_none_or(|(r, _)| residual < *r) {
            best = Some((residual, cand));
        }
    }
    let (best_res, s) =
        best.ok_or_else(|| Error::NumericalFailure("every start of the gap estimator was singular".into()))?;
    let s_inv = inverse(&s)?;
    let mem = a.contains(&s, tol)?.residual;
    let mem_inv = a.contains(&s_inv, tol)?.residual;
    let factored = best_res <= tol.eq_tol && tol.close(mem_inv, s_inv.fro_norm());
    let mut report = FactorizationReport {
        status: if factored { FactorizationStatus::Factored } else { FactorizationStatus::Gap },
        gap: if factored { None } else { Some(best_res) },
        residual: best_res,
        s: Some(s),
        s_inv: Some(s_inv),
        iterations,
        membership_residual: Some(mem),
        membership_residual_inv: Some(mem_inv),
        trace,
        cross_check: None,
    };
    if let Ok(lat) = compute_lat(a, seed, crate::lattice::DEFAULT_BUDGET, tol) {
        if lat.classification() == Classification::Nest
            && lat.complete()
            && reflexivity_from_lattice(a, &lat, tol)? == ReflexivityStatus::Reflexive
        {
            let nest = Nest::from_lattice(&lat, tol)?;
            let nc = nest_cholesky(x, &nest, tol)?;
            report.cross_check = Some(CrossCheck {
                nest_residual: nc.residual,
                agrees: (nc.residual <= tol.eq_tol) == factored,
            });
        }
    }
    Ok(report)
}
