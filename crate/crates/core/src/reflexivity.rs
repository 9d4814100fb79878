//! `Alg_M(E)`, reflexive hulls and the masa criterion.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::algebra::{central_decomposition, AmbientAlgebra, MatrixAlgebra};
use crate::error::{Error, Result};
use crate::lattice::{compute_lat, Classification, Projection, ProjectionLattice};
use crate::numerics::{hermitian_eig, projection_basis, stacked_null_space, CMatrix, ToleranceConfig, C64};

fn check_projections(e: &[Projection], m: &AmbientAlgebra, tol: &ToleranceConfig) -> Result<()> {
    for p in e {
        m.check_dim(p.matrix())?;
        let residual = m.residual(p.matrix())?;
        if !tol.close(residual, p.matrix().fro_norm()) {
            return Err(Error::OutsideAmbient { residual });
        }
    }
    Ok(())
}

/// `Alg_M(E) = {x ∈ M : p⊥ x p = 0 for all p ∈ E}`.
pub fn alg_of(e: &[Projection], m: &AmbientAlgebra, tol: &ToleranceConfig) -> Result<MatrixAlgebra> {
    check_projections(e, m, tol)?;
    let commuting = e.iter().enumerate().all(|(i, p)| e[i + 1..].iter().all(|q| p.commutes(q, tol)));
    let alg = if commuting { alg_of_commuting(e, m, tol)? } else { alg_of_general(e, m, tol)? };
    alg.verify_closed(tol)?;
    Ok(alg)
}

/// Commuting families: `Alg` is spanned by `u v*` for unit vectors `v`, `u` in
/// joint atoms `b`, `a` with `b ≤ p ⟹ a ≤ p` for every `p`.
fn alg_of_commuting(e: &[Projection], m: &AmbientAlgebra, tol: &ToleranceConfig) -> Result<MatrixAlgebra> {
    let n = m.dim();
    // Joint atoms tagged with their ambient block and the set of p containing them.
    let mut parts: Vec<(usize, Vec<bool>, CMatrix)> =
        m.central_projections().into_iter().enumerate().map(|(k, z)| (k, Vec::new(), z)).collect();
    for p in e {
        let mut next = Vec::new();
        for (block, inside, s) in parts {
            let sp = &s * p.matrix();
            let sp = (&sp + &sp.adjoint()).scale(0.5);
            let rest = &s - &sp;
            for (x, flag) in [(sp, true), (rest, false)] {
                if x.trace().re.round() >= 1.0 {
                    let mut tags = inside.clone();
                    tags.push(flag);
                    next.push((block, tags, x));
                }
            }
        }
        parts = next;
    }
    let bases: Vec<CMatrix> = parts
        .iter()
        .map(|(_, _, s)| projection_basis(s, tol).map(|b| b.expect("atoms have positive rank")))
        .collect::<Result<_>>()?;
    let mut basis = Vec::new();
    for (a, (block_a, in_a, _)) in parts.iter().enumerate() {
        for (b, (block_b, in_b, _)) in parts.iter().enumerate() {
            let allowed = block_a == block_b && in_b.iter().zip(in_a).all(|(&pb, &pa)| !pb || pa);
            if !allowed {
                continue;
            }
            for i in 0..bases[a].cols() {
                for j in 0..bases[b].cols() {
                    basis.push(&bases[a].column_at(i) * &bases[b].column_at(j).adjoint());
                }
            }
        }
    }
    debug_assert!(basis.len() <= n * n);
    Ok(MatrixAlgebra::from_orthonormal(m.clone(), Vec::new(), basis))
}

/// General case: null space of the stacked maps `x ↦ p⊥ x p` on ambient coordinates.
fn alg_of_general(e: &[Projection], m: &AmbientAlgebra, tol: &ToleranceConfig) -> Result<MatrixAlgebra> {
    let n = m.dim();
    let units = m.basis();
    let d = units.len();
    let maps = e.iter().map(|p| {
        let perp = p.complement();
        let mut k = CMatrix::zeros(n * n, d);
        for (c, u) in units.iter().enumerate() {
            let img = (&(perp.matrix() * u) * p.matrix()).vec();
            for r in 0..n * n {
                k.set(r, c, img[r]);
            }
        }
        k
    });
    let ns = stacked_null_space(maps, d, tol)?
        .ok_or_else(|| Error::NumericalFailure("Alg(E) is empty; the identity should always lie in it".into()))?;
    let basis = (0..ns.cols())
        .map(|k| {
            units.iter().enumerate().fold(CMatrix::zeros(n, n), |acc, (c, u)| &acc + &u.scale_c(ns.get(c, k)))
        })
        .collect();
    Ok(MatrixAlgebra::from_orthonormal(m.clone(), Vec::new(), basis))
}

/// `Alg_M(Lat_M(A))` for a computed lattice. Fails for non-commutative lattices,
/// whose enumeration is not finite.
pub fn hull_from_lattice(a: &MatrixAlgebra, lat: &ProjectionLattice, tol: &ToleranceConfig) -> Result<MatrixAlgebra> {
    if lat.classification() == Classification::NonCsl {
        return Err(Error::NotApplicable("the invariant projection lattice is not commutative".into()));
    }
    let hull = alg_of(lat.elements(), a.ambient(), tol)?;
    if !hull.contains_algebra(a, tol)? {
        return Err(Error::NumericalFailure("reflexive hull does not contain the algebra".into()));
    }
    Ok(hull)
}

pub fn reflexive_hull(a: &MatrixAlgebra, seed: u64, budget: usize, tol: &ToleranceConfig) -> Result<MatrixAlgebra> {
    let lat = compute_lat(a, seed, budget, tol)?;
    hull_from_lattice(a, &lat, tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReflexivityStatus {
    Reflexive,
    NotReflexive { extra_dim: usize },
    NotApplicable,
}

impl ReflexivityStatus {
    pub fn is_reflexive(&self) -> bool {
        matches!(self, ReflexivityStatus::Reflexive)
    }
}

/// Reflexivity verdict against an already computed lattice.
pub fn reflexivity_from_lattice(
    a: &MatrixAlgebra,
    lat: &ProjectionLattice,
    tol: &ToleranceConfig,
) -> Result<ReflexivityStatus> {
    match hull_from_lattice(a, lat, tol) {
        Err(Error::NotApplicable(_)) => Ok(ReflexivityStatus::NotApplicable),
        Err(e) => Err(e),
        Ok(hull) if hull.dim() == a.dim() => Ok(ReflexivityStatus::Reflexive),
        Ok(hull) => Ok(ReflexivityStatus::NotReflexive { extra_dim: hull.dim() - a.dim() }),
    }
}

pub fn is_reflexive(a: &MatrixAlgebra, seed: u64, budget: usize, tol: &ToleranceConfig) -> Result<ReflexivityStatus> {
    let lat = compute_lat(a, seed, budget, tol)?;
    reflexivity_from_lattice(a, &lat, tol)
}

/// Outcome of [`masa_check`].
#[derive(Debug, Clone)]
pub struct MasaCheck {
    pub contains_masa: bool,
    /// Pairwise orthogonal rank-one projections in `A` summing to `I`.
    pub masa_basis: Option<Vec<CMatrix>>,
    /// Dimension of `A ∩ A*`.
    pub diagonal_dim: usize,
}

/// Looks for a maximal abelian self-adjoint subalgebra inside `A ∩ A*`.
///
/// `A ∩ A*` splits into summands `M_m ⊗ I_k`; an `n`-dimensional abelian
/// subalgebra exists exactly when every multiplicity `k` is one.
pub fn masa_check(a: &MatrixAlgebra, seed: u64, tol: &ToleranceConfig) -> Result<MasaCheck> {
    let n = a.n();
    let d = a.self_adjoint_part(tol)?;
    let none = MasaCheck { contains_masa: false, masa_basis: None, diagonal_dim: d.dim() };
    let cd = match central_decomposition(&d, seed, tol) {
        Ok(cd) => cd,
        Err(Error::PreconditionViolated(_)) => return Ok(none),
        Err(e) => return Err(e),
    };
    if !cd.full.iter().all(|&f| f) {
        return Ok(none);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = d.random_element(&mut rng);
    let h = (&x + &x.adjoint()).scale(0.5);
    let mut family = Vec::with_capacity(n);
    let mut off = 0;
    for &r in &cd.blocks {
        let v = cd.unitary.columns(off, r);
        off += r;
        let hb = &(&v.adjoint() * &h) * &v;
        let eig = hermitian_eig(&hb, tol)?;
        for j in 0..r {
            let w = &v * &eig.vectors.column_at(j);
            family.push(&w * &w.adjoint());
        }
    }
    for p in &family {
        if !a.contains(p, tol)?.member {
            // Degenerate spectrum of the sampled element; report failure rather than guess.
            return Ok(none);
        }
    }
    Ok(MasaCheck { contains_masa: true, masa_basis: Some(family), diagonal_dim: d.dim() })
}

/// Whether a family of matrices pairwise commutes and consists of orthogonal
/// rank-one projections summing to `I`.
pub fn is_masa_family(family: &[CMatrix], tol: &ToleranceConfig) -> bool {
    let Some(first) = family.first() else { return false };
    let n = first.rows();
    let sum = family.iter().fold(CMatrix::zeros(n, n), |acc, p| &acc + p);
    family.len() == n
        && sum.distance(&CMatrix::identity(n)) <= tol.eq_tol * n as f64
        && family.iter().all(|p| (&(p * p) - p).norm() <= tol.eq_tol && (p.trace() - C64::new(1.0, 0.0)).norm() <= tol.eq_tol)
        && family
            .iter()
            .enumerate()
            .all(|(i, p)| family[i + 1..].iter().all(|q| p.commutator(q).norm() <= tol.eq_tol))
}
