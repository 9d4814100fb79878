//! Canonical form of a pair of projections.
//!
//! Any two projections split the space as
//! `E∩F ⊕ E∩F⊥ ⊕ E⊥∩F ⊕ E⊥∩F⊥ ⊕ K ⊕ K`, where on `K ⊕ K`
//! `P = [[1, 0], [0, 0]]` and `Q = [[x², xy], [xy, y²]]` with commuting
//! injective positive contractions `x² + y² = 1`.

use crate::error::{Error, Result};
use crate::lattice::Projection;
use crate::numerics::{hermitian_eig, projection_basis, CMatrix, ToleranceConfig};

#[derive(Debug, Clone)]
pub struct HalmosDecomposition {
    pub corner_ef: Projection,
    pub corner_ef_perp: Projection,
    pub corner_eperp_f: Projection,
    pub corner_eperp_fperp: Projection,
    /// Dimension of one copy of `K`.
    pub generic_dim: usize,
    /// Unitary with `U P U*` and `U Q U*` in canonical block form.
    pub u: CMatrix,
    /// Diagonal, with `x²` in descending order.
    pub x: CMatrix,
    pub y: CMatrix,
}

impl HalmosDecomposition {
    pub fn corner_ranks(&self) -> [usize; 4] {
        [
            self.corner_ef.rank(),
            self.corner_ef_perp.rank(),
            self.corner_eperp_f.rank(),
            self.corner_eperp_fperp.rank(),
        ]
    }

    /// Columns of `U*`: the adapted orthonormal basis, in canonical order.
    pub fn basis(&self) -> CMatrix {
        self.u.adjoint()
    }

    /// Basis vectors of the first copy of `K` (inside the range of `P`).
    pub fn generic_first(&self) -> CMatrix {
        let off: usize = self.corner_ranks().iter().sum();
        self.basis().columns(off, self.generic_dim)
    }

    /// Basis vectors of the second copy of `K` (inside the range of `P⊥`).
    pub fn generic_second(&self) -> CMatrix {
        let off: usize = self.corner_ranks().iter().sum::<usize>() + self.generic_dim;
        self.basis().columns(off, self.generic_dim)
    }

    /// `U P U* = 1 ⊕ 1 ⊕ 0 ⊕ 0 ⊕ [[1, 0], [0, 0]]`.
    pub fn canonical_p(&self) -> CMatrix {
        let [a, b, c, d] = self.corner_ranks();
        let g = self.generic_dim;
        let mut diag = vec![1.0; a + b];
        diag.extend(std::iter::repeat(0.0).take(c + d));
        diag.extend(std::iter::repeat(1.0).take(g));
        diag.extend(std::iter::repeat(0.0).take(g));
        CMatrix::diag_real(&diag)
    }

    /// `U Q U* = 1 ⊕ 0 ⊕ 1 ⊕ 0 ⊕ [[x², xy], [xy, y²]]`.
    pub fn canonical_q(&self) -> CMatrix {
        let [a, b, c, d] = self.corner_ranks();
        let g = self.generic_dim;
        let n = a + b + c + d + 2 * g;
        let mut diag = vec![1.0; a];
        diag.extend(std::iter::repeat(0.0).take(b));
        diag.extend(std::iter::repeat(1.0).take(c));
        diag.extend(std::iter::repeat(0.0).take(d + 2 * g));
        let mut q = CMatrix::diag_real(&diag);
        let off = n - 2 * g;
        let xx = &self.x * &self.x;
        let xy = &self.x * &self.y;
        let yy = &self.y * &self.y;
        q.set_submatrix(off, off, &xx);
        q.set_submatrix(off, off + g, &xy);
        q.set_submatrix(off + g, off, &xy);
        q.set_submatrix(off + g, off + g, &yy);
        q
    }

    /// `U* C U`, mapping a canonical-form matrix back to the original space.
    pub fn from_canonical(&self, c: &CMatrix) -> CMatrix {
        &(&self.u.adjoint() * c) * &self.u
    }
}

/// Orthonormal eigenvectors of `V* Q V` split into eigenvalue ≈ 1, ≈ 0 and interior.
struct Split {
    ones: Vec<CMatrix>,
    zeros: Vec<CMatrix>,
    interior: Vec<(f64, CMatrix)>,
}

fn split(v: Option<&CMatrix>, q: &CMatrix, tol: &ToleranceConfig) -> Result<Split> {
    let mut s = Split { ones: Vec::new(), zeros: Vec::new(), interior: Vec::new() };
    let Some(v) = v else { return Ok(s) };
    let c = &(&v.adjoint() * q) * v;
    let eig = hermitian_eig(&c, tol)?;
    let thr = tol.rank_threshold(q.rows(), 1.0);
    for (k, &lam) in eig.values.iter().enumerate() {
        let w = v * &eig.vectors.column_at(k);
        if lam >= 1.0 - thr {
            s.ones.push(w);
        } else if lam <= thr {
            s.zeros.push(w);
        } else {
            s.interior.push((lam, w));
        }
    }
    Ok(s)
}

fn corner(vs: &[CMatrix], n: usize) -> Result<Projection> {
    if vs.is_empty() {
        return Ok(Projection::zero(n));
    }
    Ok(Projection::from_orthonormal(&CMatrix::hstack(vs)?))
}

/// Halmos decomposition of a projection pair, verified before return.
pub fn halmos_decompose(p: &Projection, q: &Projection, tol: &ToleranceConfig) -> Result<HalmosDecomposition> {
    let n = p.dim();
    if q.dim() != n {
        return Err(Error::DimensionMismatch(format!("projections of dimensions {n} and {}", q.dim())));
    }
    let qm = q.matrix();
    let in_p = split(projection_basis(p.matrix(), tol)?.as_ref(), qm, tol)?;
    let in_pperp = split(projection_basis(p.complement().matrix(), tol)?.as_ref(), qm, tol)?;
    if in_p.interior.len() != in_pperp.interior.len() {
        return Err(Error::NumericalFailure(format!(
            "generic parts of ran P ({}) and ran P⊥ ({}) differ in dimension",
            in_p.interior.len(),
            in_pperp.interior.len()
        )));
    }
    let mut generic = in_p.interior;
    generic.sort_by(|a, b| b.0.total_cmp(&a.0));
    let g = generic.len();
    let pperp = p.complement();
    let mut firsts = Vec::with_capacity(g);
    let mut seconds = Vec::with_capacity(g);
    let mut xs = Vec::with_capacity(g);
    let mut ys = Vec::with_capacity(g);
    for (lam, a) in generic {
        let (x, y) = (lam.sqrt(), (1.0 - lam).sqrt());
        let b = (pperp.matrix() * &(qm * &a)).scale(1.0 / (x * y));
        firsts.push(a);
        seconds.push(b);
        xs.push(x);
        ys.push(y);
    }
    let mut cols: Vec<CMatrix> = Vec::with_capacity(n);
    for part in [&in_p.ones, &in_p.zeros, &in_pperp.ones, &in_pperp.zeros, &firsts, &seconds] {
        cols.extend(part.iter().cloned());
    }
    let w = CMatrix::hstack(&cols)?;
    let h = HalmosDecomposition {
        corner_ef: corner(&in_p.ones, n)?,
        corner_ef_perp: corner(&in_p.zeros, n)?,
        corner_eperp_f: corner(&in_pperp.ones, n)?,
        corner_eperp_fperp: corner(&in_pperp.zeros, n)?,
        generic_dim: g,
        u: w.adjoint(),
        x: CMatrix::diag_real(&xs),
        y: CMatrix::diag_real(&ys),
    };
    verify(&h, p, q, tol)?;
    Ok(h)
}

/// Residuals of the defining identities of a decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalmosResiduals {
    pub commutator: f64,
    pub pythagoras: f64,
    /// Smallest singular value among `x` and `y` (`+∞` when `K = 0`).
    pub min_singular: f64,
    pub reconstruction: f64,
    pub unitarity: f64,
}

pub fn residuals(h: &HalmosDecomposition, p: &Projection, q: &Projection) -> HalmosResiduals {
    let g = h.generic_dim;
    let n = p.dim();
    let (commutator, pythagoras, min_singular) = if g == 0 {
        (0.0, 0.0, f64::INFINITY)
    } else {
        let sum = &(&h.x * &h.x) + &(&h.y * &h.y);
        let smin = |m: &CMatrix| crate::numerics::singular_values(m).last().copied().unwrap_or(0.0);
        (
            h.x.commutator(&h.y).norm(),
            sum.distance(&CMatrix::identity(g)),
            smin(&h.x).min(smin(&h.y)),
        )
    };
    let reconstruction = h
        .from_canonical(&h.canonical_p())
        .distance(p.matrix())
        .max(h.from_canonical(&h.canonical_q()).distance(q.matrix()));
    let unitarity = (&(&h.u * &h.u.adjoint()) - &CMatrix::identity(n)).norm();
    HalmosResiduals { commutator, pythagoras, min_singular, reconstruction, unitarity }
}

fn verify(h: &HalmosDecomposition, p: &Projection, q: &Projection, tol: &ToleranceConfig) -> Result<()> {
    let n = p.dim();
    let count: usize = h.corner_ranks().iter().sum::<usize>() + 2 * h.generic_dim;
    if count != n {
        return Err(Error::NumericalFailure(format!("decomposition covers {count} of {n} dimensions")));
    }
    let r = residuals(h, p, q);
    let floor = tol.rank_threshold(n, 1.0);
    let bad = [
        ("x y − y x", r.commutator),
        ("x² + y² − I", r.pythagoras),
        ("reconstruction", r.reconstruction),
        ("U U* − I", r.unitarity),
    ]
    .into_iter()
    .find(|&(_, v)| v > tol.eq_tol);
    if let Some((what, v)) = bad {
        return Err(Error::NumericalFailure(format!("Halmos identity {what} fails with residual {v:e}")));
    }
    if r.min_singular <= floor {
        return Err(Error::NumericalFailure("x or y is not injective".into()));
    }
    Ok(())
}

/// `‖PQ − QP‖ ≤ eq_tol`, cross-checked against the absence of a generic part.
pub fn commutes_iff_no_generic(p: &Projection, q: &Projection, tol: &ToleranceConfig) -> Result<bool> {
    let h = halmos_decompose(p, q, tol)?;
    let commutes = p.commutator_norm(q) <= tol.eq_tol;
    if commutes != (h.generic_dim == 0) {
        return Err(Error::NumericalFailure(format!(
            "commutator {:e} disagrees with generic dimension {}",
            p.commutator_norm(q),
            h.generic_dim
        )));
    }
    Ok(commutes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tol() -> ToleranceConfig {
        ToleranceConfig::default()
    }

    fn proj(rows: &[&[f64]]) -> Projection {
        Projection::new(CMatrix::from_real_rows(rows), &tol()).unwrap()
    }

    fn half() -> Projection {
        proj(&[&[0.5, 0.5], &[0.5, 0.5]])
    }

    #[test]
    fn equal_projections_have_no_generic_part() {
        let t = tol();
        let p = Projection::coordinate(2, &[0]);
        let h = halmos_decompose(&p, &p, &t).unwrap();
        assert_eq!(h.generic_dim, 0);
        assert!(h.corner_ef.approx_eq(&p, &t));
        assert!(h.corner_ef_perp.is_zero() && h.corner_eperp_f.is_zero());
        assert!(h.corner_eperp_fperp.approx_eq(&p.complement(), &t));
    }

    #[test]
    fn line_pair_in_generic_position() {
        let t = tol();
        let h = halmos_decompose(&Projection::coordinate(2, &[0]), &half(), &t).unwrap();
        assert_eq!(h.generic_dim, 1);
        for c in [&h.corner_ef, &h.corner_ef_perp, &h.corner_eperp_f, &h.corner_eperp_fperp] {
            assert!(c.is_zero());
        }
        assert!((h.x.get(0, 0).re.powi(2) - 0.5).abs() < 1e-14);
        assert!((h.y.get(0, 0).re.powi(2) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn mixed_four_dimensional_example() {
        let t = tol();
        let p = Projection::coordinate(4, &[0, 1]);
        let q = proj(&[
            &[1.0, 0.0, 0.0, 0.0],
            &[0.0, 0.5, 0.5, 0.0],
            &[0.0, 0.5, 0.5, 0.0],
            &[0.0, 0.0, 0.0, 0.0],
        ]);
        let h = halmos_decompose(&p, &q, &t).unwrap();
        assert!(h.corner_ef.approx_eq(&Projection::coordinate(4, &[0]), &t));
        assert!(h.corner_eperp_fperp.approx_eq(&Projection::coordinate(4, &[3]), &t));
        assert!(h.corner_ef_perp.is_zero() && h.corner_eperp_f.is_zero());
        assert_eq!(h.generic_dim, 1);
        let k = h.generic_first();
        assert!((k.get(1, 0).norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn commutation_examples() {
        let t = tol();
        let e1 = Projection::coordinate(2, &[0]);
        assert!(commutes_iff_no_generic(&e1, &Projection::coordinate(2, &[1]), &t).unwrap());
        assert!(!commutes_iff_no_generic(&e1, &half(), &t).unwrap());
        assert!((e1.commutator_norm(&half()) - 0.5).abs() < 1e-14);
        assert!(commutes_iff_no_generic(&half(), &half().complement(), &t).unwrap());
    }

    #[test]
    fn swapping_the_pair_swaps_mixed_corners() {
        let t = tol();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = CMatrix::random_unitary(6, &mut rng);
        let p = Projection::new(&(&u * Projection::coordinate(6, &[0, 1, 2]).matrix()) * &u.adjoint(), &t).unwrap();
        let q = Projection::coordinate(6, &[0, 5]);
        let h1 = halmos_decompose(&p, &q, &t).unwrap();
        let h2 = halmos_decompose(&q, &p, &t).unwrap();
        assert_eq!(h1.generic_dim, h2.generic_dim);
        assert_eq!(h1.corner_ef_perp.rank(), h2.corner_eperp_f.rank());
        assert_eq!(h1.corner_eperp_f.rank(), h2.corner_ef_perp.rank());
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let t = tol();
        assert!(halmos_decompose(&Projection::zero(2), &Projection::zero(3), &t).is_err());
    }
}
