//! Invariant projection lattices: membership, join/meet, enumeration and classification.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::algebra::MatrixAlgebra;
use crate::error::{Error, Result};
use crate::numerics::{
    self, c64, null_space, projection_basis, projector_from_basis, range_basis, range_projection, CMatrix,
    FrobeniusBasis, ToleranceConfig, C64,
};

/// Default number of Gaussian seed vectors used by [`compute_lat`].
pub const DEFAULT_BUDGET: usize = 64;

/// Hard ceiling on the exponent of the element cap `2^min(n, 20)`.
const MAX_CAP_EXPONENT: usize = 20;

/// Number of found subspaces whose leading vectors are combined pairwise.
const PAIR_SEED_LIMIT: usize = 16;

/// Commutators above this multiple of `eq_tol` count as a proven failure to commute.
const WITNESS_FACTOR: f64 = 10.0;

/// An orthogonal projection with its rank.
#[derive(Debug, Clone)]
pub struct Projection {
    matrix: CMatrix,
    rank: usize,
}

impl Projection {
    /// Validates `P² = P = P*` within `eq_tol` and stores the exactly symmetrised matrix.
    pub fn new(matrix: CMatrix, tol: &ToleranceConfig) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::NotSquare(matrix.rows(), matrix.cols()));
        }
        let scale = matrix.norm().max(1.0);
        if (&matrix - &matrix.adjoint()).norm() > tol.eq_tol * scale {
            return Err(Error::NotProjection("matrix is not hermitian".into()));
        }
        let idem = (&(&matrix * &matrix) - &matrix).norm();
        if idem > tol.eq_tol * scale {
            return Err(Error::NotProjection(format!("‖P² − P‖ = {idem:e}")));
        }
        let tr = matrix.trace().re;
        let rank = tr.round().max(0.0) as usize;
        if (tr - rank as f64).abs() > tol.eq_tol * matrix.rows() as f64 {
            return Err(Error::NotProjection(format!("trace {tr} is not an integer")));
        }
        Ok(Self::from_hermitian(matrix))
    }

    /// Symmetrises a matrix that is known to be a projection up to rounding.
    pub(crate) fn from_hermitian(matrix: CMatrix) -> Self {
        let m = (&matrix + &matrix.adjoint()).scale(0.5);
        let rank = m.trace().re.round().max(0.0) as usize;
        Projection { matrix: m, rank }
    }

    /// Projection onto the span of orthonormal columns.
    pub fn from_orthonormal(q: &CMatrix) -> Self {
        Projection { rank: q.cols(), matrix: projector_from_basis(q) }
    }

    /// Projection onto the span of arbitrary column vectors.
    pub fn from_vectors(vectors: &[CMatrix], dim: usize, tol: &ToleranceConfig) -> Result<Self> {
        Ok(Self::from_hermitian(range_projection(vectors, dim, tol)?))
    }

    pub fn zero(n: usize) -> Self {
        Projection { matrix: CMatrix::zeros(n, n), rank: 0 }
    }

    pub fn identity(n: usize) -> Self {
        Projection { matrix: CMatrix::identity(n), rank: n }
    }

    /// Diagonal projection onto the listed coordinates.
    pub fn coordinate(n: usize, indices: &[usize]) -> Self {
        let mut m = CMatrix::zeros(n, n);
        for &i in indices {
            m.set(i, i, c64(1.0, 0.0));
        }
        Self::from_hermitian(m)
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn is_zero(&self) -> bool {
        self.rank == 0
    }

    pub fn complement(&self) -> Projection {
        let n = self.dim();
        Projection { matrix: &CMatrix::identity(n) - &self.matrix, rank: n - self.rank }
    }

    /// Orthonormal basis of the range, or `None` for the zero projection.
    pub fn basis(&self, tol: &ToleranceConfig) -> Result<Option<CMatrix>> {
        projection_basis(&self.matrix, tol)
    }

    /// `self ≤ other`, i.e. `other · self = self`.
    pub fn le(&self, other: &Projection, tol: &ToleranceConfig) -> bool {
        let d = (&(&other.matrix * &self.matrix) - &self.matrix).fro_norm();
        tol.close(d, self.matrix.fro_norm())
    }

    /// Equality at `eq_tol` on the Frobenius distance.
    pub fn approx_eq(&self, other: &Projection, tol: &ToleranceConfig) -> bool {
        self.rank == other.rank
            && tol.close((&self.matrix - &other.matrix).fro_norm(), self.matrix.fro_norm())
    }

    /// Spectral norm of `pq − qp`.
    pub fn commutator_norm(&self, other: &Projection) -> f64 {
        self.matrix.commutator(&other.matrix).norm()
    }

    pub fn commutes(&self, other: &Projection, tol: &ToleranceConfig) -> bool {
        self.commutator_norm(other) <= tol.eq_tol
    }
}

fn check_dims(ps: &[Projection], dim: usize) -> Result<()> {
    if let Some(p) = ps.iter().find(|p| p.dim() != dim) {
        return Err(Error::DimensionMismatch(format!(
            "projection of dimension {} in a space of dimension {dim}",
            p.dim()
        )));
    }
    Ok(())
}

/// Projection onto the smallest subspace containing every range. Empty input gives `0`.
pub fn join(ps: &[Projection], dim: usize, tol: &ToleranceConfig) -> Result<Projection> {
    check_dims(ps, dim)?;
    let mats: Vec<CMatrix> = ps.iter().filter(|p| !p.is_zero()).map(|p| p.matrix.clone()).collect();
    Projection::from_vectors(&mats, dim, tol)
}

/// Projection onto the intersection of the ranges. Empty input gives `I`.
pub fn meet(ps: &[Projection], dim: usize, tol: &ToleranceConfig) -> Result<Projection> {
    check_dims(ps, dim)?;
    let comps: Vec<Projection> = ps.iter().map(Projection::complement).collect();
    Ok(join(&comps, dim, tol)?.complement())
}

/// Outcome of [`invariant_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvariantCheck {
    pub invariant: bool,
    /// `max ‖p⊥ a p‖ / max(1, ‖a‖)` over the algebra basis.
    pub defect: f64,
    pub in_ambient: bool,
}

/// Whether `p` lies in `Lat_M(A)`.
pub fn invariant_check(p: &Projection, a: &MatrixAlgebra, tol: &ToleranceConfig) -> Result<InvariantCheck> {
    a.ambient().check_dim(p.matrix())?;
    let in_ambient = a.ambient().contains(p.matrix(), tol)?;
    let perp = p.complement();
    let mut defect = 0.0f64;
    for b in a.basis() {
        let x = &(perp.matrix() * b) * p.matrix();
        defect = defect.max(x.norm() / b.norm().max(1.0));
    }
    Ok(InvariantCheck { invariant: in_ambient && defect <= tol.eq_tol, defect, in_ambient })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Classification {
    Nest,
    CslNotNest,
    NonCsl,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::Nest => "NEST",
            Classification::CslNotNest => "CSL_NOT_NEST",
            Classification::NonCsl => "NON_CSL",
        })
    }
}

/// A finite lattice of invariant projections with its classification.
#[derive(Debug, Clone)]
pub struct ProjectionLattice {
    dim: usize,
    elements: Vec<Projection>,
    classification: Classification,
    witness: Option<(Projection, Projection)>,
    complete: bool,
}

impl ProjectionLattice {
    /// Classifies a commuting family that is already closed under join and meet.
    pub fn from_commuting(dim: usize, mut elements: Vec<Projection>, complete: bool, tol: &ToleranceConfig) -> Self {
        elements.sort_by_key(Projection::rank);
        let ordered = elements
            .iter()
            .enumerate()
            .all(|(i, p)| elements[i + 1..].iter().all(|q| p.le(q, tol) || q.le(p, tol)));
        let classification = if ordered { Classification::Nest } else { Classification::CslNotNest };
        ProjectionLattice { dim, elements, classification, witness: None, complete }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn elements(&self) -> &[Projection] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn classification(&self) -> Classification {
        self.classification
    }

    pub fn witness(&self) -> Option<&(Projection, Projection)> {
        self.witness.as_ref()
    }

    /// Whether the search reached a fixed point on which every atom compression is transitive.
    pub fn complete(&self) -> bool {
        self.complete
    }

    pub fn position(&self, p: &Projection, tol: &ToleranceConfig) -> Option<usize> {
        self.elements.iter().position(|q| q.approx_eq(p, tol))
    }

    pub fn contains(&self, p: &Projection, tol: &ToleranceConfig) -> bool {
        self.position(p, tol).is_some()
    }
}

/// `(p − p₋, p, p₋)` for an element of a lattice.
#[derive(Debug, Clone)]
pub struct Atom {
    pub atom: Projection,
    pub p: Projection,
    pub p_minus: Projection,
}

/// Atoms `p − p₋` with `p₋` the join of the elements strictly below `p`.
pub fn atoms(l: &ProjectionLattice, tol: &ToleranceConfig) -> Result<Vec<Atom>> {
    if l.classification == Classification::NonCsl {
        return Err(Error::NotApplicable("atoms of a non-commutative lattice".into()));
    }
    if !l.complete {
        return Err(Error::PreconditionViolated("lattice enumeration is not complete".into()));
    }
    let n = l.dim;
    let mut out = Vec::new();
    for p in &l.elements {
        let below: Vec<Projection> =
            l.elements.iter().filter(|q| q.rank < p.rank && q.le(p, tol)).cloned().collect();
        let p_minus = join(&below, n, tol)?;
        if p_minus.rank < p.rank {
            let atom = Projection::from_hermitian(p.matrix() - p_minus.matrix());
            out.push(Atom { atom, p: p.clone(), p_minus });
        }
    }
    Ok(out)
}

/// `{s : p + s ∈ L, s ≤ q − p}` represented on the range of `q − p`.
pub fn lattice_compress(
    l: &ProjectionLattice,
    p: &Projection,
    q: &Projection,
    tol: &ToleranceConfig,
) -> Result<ProjectionLattice> {
    if l.classification == Classification::NonCsl {
        return Err(Error::NotApplicable("compression of a non-commutative lattice".into()));
    }
    if !l.contains(p, tol) || !l.contains(q, tol) {
        return Err(Error::InvalidInput("p and q must be elements of the lattice".into()));
    }
    if !(p.le(q, tol) && p.rank < q.rank) {
        return Err(Error::NotOrdered("p is not strictly below q".into()));
    }
    let r = q.matrix() - p.matrix();
    let v = projection_basis(&r, tol)?.expect("q − p has positive rank");
    let elements = l
        .elements
        .iter()
        .filter(|x| p.le(x, tol) && x.le(q, tol))
        .map(|x| Projection::from_hermitian(&(&v.adjoint() * &(x.matrix() - p.matrix())) * &v))
        .collect();
    Ok(ProjectionLattice::from_commuting(v.cols(), elements, l.complete, tol))
}

enum Added {
    New,
    Known,
    Rejected,
}

/// Incremental lattice builder over the effective algebra `B = alg(A ∪ M')`.
struct Builder<'a> {
    n: usize,
    a: &'a MatrixAlgebra,
    b: Vec<CMatrix>,
    b_adj: Vec<CMatrix>,
    elems: Vec<Projection>,
    witness: Option<(Projection, Projection)>,
    cap: usize,
    tol: &'a ToleranceConfig,
    /// Atom matrices already found to have transitive compressions.
    transitive: Vec<CMatrix>,
}

impl<'a> Builder<'a> {
    fn new(a: &'a MatrixAlgebra, tol: &'a ToleranceConfig) -> Self {
        let n = a.n();
        let b: Vec<CMatrix> = a.with_ambient_commutant(tol).basis().to_vec();
        let b_adj = b.iter().map(CMatrix::adjoint).collect();
        let cap = 1usize << n.min(MAX_CAP_EXPONENT);
        Builder {
            n,
            a,
            b,
            b_adj,
            elems: vec![Projection::zero(n), Projection::identity(n)],
            witness: None,
            cap,
            tol,
            transitive: Vec::new(),
        }
    }

    /// Range of `{b v : b ∈ basis}` for a block of column vectors.
    fn cyclic(basis: &[CMatrix], v: &CMatrix, tol: &ToleranceConfig) -> Result<Option<CMatrix>> {
        let images: Vec<CMatrix> = basis.iter().map(|b| b * v).collect();
        range_basis(&CMatrix::hstack(&images)?, tol)
    }

    fn invariant_cyclic(&self, v: &CMatrix) -> Result<Option<CMatrix>> {
        Ok(Self::cyclic(&self.b, v, self.tol)?.map(|q| projector_from_basis(&q)))
    }

    fn coinvariant_cyclic(&self, v: &CMatrix) -> Result<Option<CMatrix>> {
        Ok(Self::cyclic(&self.b_adj, v, self.tol)?
            .map(|q| &CMatrix::identity(self.n) - &projector_from_basis(&q)))
    }

    /// Cheap invariance test: Frobenius bound on every `p⊥ a p`.
    fn quick_invariant(&self, p: &Projection) -> bool {
        let perp = p.complement();
        self.a.basis().iter().all(|b| (&(perp.matrix() * b) * p.matrix()).fro_norm() <= self.tol.eq_tol)
            && self.a.ambient().contains(p.matrix(), self.tol).unwrap_or(false)
    }

    fn known(&self, p: &Projection) -> bool {
        self.elems.iter().any(|q| q.approx_eq(p, self.tol))
    }

    fn add(&mut self, m: CMatrix) -> Result<Added> {
        if self.witness.is_some() {
            return Ok(Added::Rejected);
        }
        let p = Projection::from_hermitian(m);
        if (&(p.matrix() * p.matrix()) - p.matrix()).fro_norm() > self.tol.eq_tol * (p.rank as f64).max(1.0) {
            return Ok(Added::Rejected);
        }
        if self.known(&p) {
            return Ok(Added::Known);
        }
        if !self.quick_invariant(&p) {
            return Ok(Added::Rejected);
        }
        for q in &self.elems {
            let c = p.matrix().commutator(q.matrix()).fro_norm();
            if c <= self.tol.eq_tol {
                continue;
            }
            if p.commutator_norm(q) > WITNESS_FACTOR * self.tol.eq_tol {
                self.witness = Some((q.clone(), p));
                return Ok(Added::Rejected);
            }
            return Ok(Added::Rejected);
        }
        self.push(p)?;
        Ok(Added::New)
    }

    fn push(&mut self, p: Projection) -> Result<()> {
        self.elems.push(p);
        if self.elems.len() > self.cap {
            return Err(Error::NonCslSuspected { cap: self.cap });
        }
        Ok(())
    }

    /// Closes under join and meet using the commuting formulas `p + q − pq` and `pq`.
    fn close(&mut self, from: usize) -> Result<()> {
        let mut i = from;
        while i < self.elems.len() {
            for j in 0..i {
                let (p, q) = (self.elems[i].matrix(), self.elems[j].matrix());
                let pq = p * q;
                let pq = (&pq + &pq.adjoint()).scale(0.5);
                let joined = &(p + q) - &pq;
                for cand in [pq, joined] {
                    let c = Projection::from_hermitian(cand);
                    if !self.known(&c) {
                        self.push(c)?;
                    }
                }
            }
            i += 1;
        }
        Ok(())
    }

    /// Atoms `(q₋, q − q₋)` of the current (commuting) family.
    fn current_atoms(&self) -> Vec<(CMatrix, CMatrix)> {
        let mut out = Vec::new();
        for q in &self.elems {
            let mut acc = CMatrix::zeros(self.n, self.n);
            for l in &self.elems {
                if l.rank < q.rank && l.le(q, self.tol) {
                    let cross = &acc * l.matrix();
                    acc = &(&acc + l.matrix()) - &cross;
                }
            }
            let r = q.matrix() - &acc;
            if r.trace().re.round() >= 1.0 {
                out.push((acc, r));
            }
        }
        out
    }

    /// Adds the cyclic subspace of `v` and the complement of its dual; returns
    /// the leading basis vector of each new element.
    fn seed_vector(&mut self, v: &CMatrix) -> Result<Vec<CMatrix>> {
        let mut leads = Vec::new();
        for cand in [self.invariant_cyclic(v)?, self.coinvariant_cyclic(v)?].into_iter().flatten() {
            let at = self.elems.len();
            if let Added::New = self.add(cand)? {
                if let Some(basis) = self.elems[at].basis(self.tol)? {
                    leads.push(basis.column_at(0));
                }
            }
        }
        Ok(leads)
    }

    fn seed(&mut self, seed: u64, budget: usize) -> Result<()> {
        let n = self.n;
        let mut leads: Vec<CMatrix> = Vec::new();
        for i in 0..n {
            leads.extend(self.seed_vector(&CMatrix::basis_vector(n, i))?);
        }
        leads.truncate(PAIR_SEED_LIMIT);
        for i in 0..leads.len() {
            for j in i + 1..leads.len() {
                for v in [&leads[i] + &leads[j], &leads[i] - &leads[j]] {
                    self.seed_vector(&v)?;
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..budget {
            let v = CMatrix::from_fn(n, 1, |_, _| {
                c64(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
            });
            self.seed_vector(&v)?;
        }
        Ok(())
    }

    /// Candidate invariant projections strictly inside the atom `r` above `base`,
    /// or `None` when the compression to `r` is transitive.
    fn refine_atom(&self, base: &CMatrix, r: &CMatrix, seed: u64) -> Result<Option<Vec<CMatrix>>> {
        let tol = self.tol;
        let v = match projection_basis(r, tol)? {
            Some(v) => v,
            None => return Ok(None),
        };
        let k = v.cols();
        if k == 1 {
            return Ok(None);
        }
        let mut fb = FrobeniusBasis::new(k, k);
        for b in &self.b {
            fb.push(&(&(&v.adjoint() * b) * &v), tol);
        }
        if fb.len() == k * k {
            return Ok(None);
        }
        let c = fb.into_elements();
        let c_adj: Vec<CMatrix> = c.iter().map(CMatrix::adjoint).collect();
        let mut local: Vec<CMatrix> = Vec::new();
        let radical = radical_basis(&c, tol)?;
        if !radical.is_empty() {
            if let Some(q) = range_basis(&CMatrix::hstack(&radical)?, tol)? {
                local.push(projector_from_basis(&q));
            }
            if let Some(q) = null_space(&CMatrix::vstack(&radical)?, tol)? {
                local.push(projector_from_basis(&q));
            }
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let coeffs: Vec<C64> =
                (0..c.len()).map(|_| c64(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))).collect();
            let x = c.iter().zip(&coeffs).fold(CMatrix::zeros(k, k), |acc, (ci, &z)| &acc + &ci.scale_c(z));
            for (basis, dual) in [(&c, false), (&c_adj, true)] {
                let x = if dual { x.adjoint() } else { x.clone() };
                for vecs in eigenspaces(&x)? {
                    let mut probes: Vec<CMatrix> = (0..vecs.cols()).map(|j| vecs.column_at(j)).collect();
                    if probes.len() >= 2 {
                        probes.push(&probes[0] + &probes[1]);
                    }
                    for pv in probes {
                        if let Some(q) = Self::cyclic(basis, &pv, tol)? {
                            if q.cols() < k {
                                let s = projector_from_basis(&q);
                                local.push(if dual { &CMatrix::identity(k) - &s } else { s });
                            }
                        }
                    }
                }
            }
        }
        Ok(Some(local.into_iter().map(|s| base + &(&(&v * &s) * &v.adjoint())).collect()))
    }

    fn is_marked_transitive(&self, r: &CMatrix) -> bool {
        self.transitive.iter().any(|t| (t - r).fro_norm() <= self.tol.eq_tol * t.fro_norm().max(1.0))
    }

    /// One refinement sweep. Returns `(added anything, every atom transitive)`.
    fn refine(&mut self, seed: u64) -> Result<(bool, bool)> {
        let start = self.elems.len();
        let mut all_transitive = true;
        let atoms = self.current_atoms();
        for (idx, (base, r)) in atoms.iter().enumerate() {
            if self.is_marked_transitive(r) {
                continue;
            }
            match self.refine_atom(base, r, seed.wrapping_add(idx as u64))? {
                None => self.transitive.push(r.clone()),
                Some(cands) => {
                    all_transitive = false;
                    for c in cands {
                        self.add(c)?;
                        if self.witness.is_some() {
                            return Ok((false, false));
                        }
                    }
                }
            }
        }
        if self.elems.len() == start && all_transitive {
            // Invariant subspaces generated by each atom, and their duals.
            for (_, r) in &atoms {
                if let Some(v) = projection_basis(r, self.tol)? {
                    for cand in [self.invariant_cyclic(&v)?, self.coinvariant_cyclic(&v)?].into_iter().flatten() {
                        self.add(cand)?;
                        if self.witness.is_some() {
                            return Ok((false, false));
                        }
                    }
                }
            }
        }
        let added = self.elems.len() > start;
        if added {
            self.close(start)?;
        }
        Ok((added, all_transitive))
    }
}

/// Jacobson radical of the span of `c` (closed under products), from the
/// null space of the trace form `(x, y) ↦ tr(xy)`.
fn radical_basis(c: &[CMatrix], tol: &ToleranceConfig) -> Result<Vec<CMatrix>> {
    let d = c.len();
    let g = CMatrix::from_fn(d, d, |i, j| (&c[i] * &c[j]).trace());
    let ns = match null_space(&g, tol)? {
        Some(ns) => ns,
        None => return Ok(Vec::new()),
    };
    let k = c[0].rows();
    Ok((0..ns.cols())
        .map(|l| (0..d).fold(CMatrix::zeros(k, k), |acc, i| &acc + &c[i].scale_c(ns.get(i, l))))
        .collect())
}

/// Orthonormal bases of the (approximate) eigenspaces of `x`, one per eigenvalue cluster.
fn eigenspaces(x: &CMatrix) -> Result<Vec<CMatrix>> {
    let k = x.rows();
    let mut vals = numerics::eigenvalues(x)?;
    vals.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let gap = 1e-8 * x.norm().max(1.0);
    let mut clusters: Vec<Vec<C64>> = Vec::new();
    for v in vals {
        match clusters.iter_mut().find(|c| (c[0] - v).norm() <= gap) {
            Some(c) => c.push(v),
            None => clusters.push(vec![v]),
        }
    }
    clusters
        .into_iter()
        .map(|c| {
            let mean = c.iter().sum::<C64>() / c64(c.len() as f64, 0.0);
            let shifted = x - &CMatrix::identity(k).scale_c(mean);
            numerics::smallest_right_singular_vectors(&shifted, c.len())
        })
        .collect()
}

/// Enumerates `Lat_M(A)`, or returns a verified pair of non-commuting invariant projections.
///
/// Seeds are cyclic subspaces of standard basis vectors, `budget` Gaussian
/// vectors, and pairwise sums of the subspaces found, together with the
/// complements of the corresponding cyclic subspaces of `A*`. The commuting
/// family is then refined atom by atom: each atom whose compression is not
/// transitive is split by the radical of the compressed algebra, or by
/// eigenvectors of a generic element when that radical vanishes.
pub fn compute_lat(a: &MatrixAlgebra, seed: u64, budget: usize, tol: &ToleranceConfig) -> Result<ProjectionLattice> {
    let n = a.n();
    let mut builder = Builder::new(a, tol);
    builder.seed(seed, budget)?;
    if builder.witness.is_none() {
        builder.close(2)?;
    }
    let mut complete = false;
    let mut round = 0u64;
    while builder.witness.is_none() {
        round += 1;
        let (added, all_transitive) = builder.refine(seed ^ (round << 32))?;
        if !added {
            complete = all_transitive;
            break;
        }
    }
    if let Some(w) = builder.witness.take() {
        let mut elements = builder.elems;
        elements.sort_by_key(Projection::rank);
        return Ok(ProjectionLattice {
            dim: n,
            elements,
            classification: Classification::NonCsl,
            witness: Some(w),
            complete: false,
        });
    }
    Ok(ProjectionLattice::from_commuting(n, builder.elems, complete, tol))
}
