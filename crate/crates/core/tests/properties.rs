//! Property tests for the structural invariants of each module.

mod common;

use common::*;
use nestlab::algebra::{close_algebra, commutant, compress, AmbientAlgebra};
use nestlab::factorization::{
    has_factorization_fd, lower_left_norm, nest_cholesky, witness_generator, Nest, Verdict, WitnessMode,
};
use nestlab::lattice::{atoms, compute_lat, invariant_check, Classification, Projection, DEFAULT_BUDGET};
use nestlab::numerics::{cholesky_upper, hermitian_eig, range_projection, upper_triangular_inverse};
use nestlab::reflexivity::{alg_of, hull_from_lattice, is_reflexive, masa_check, ReflexivityStatus};
use nestlab::twoproj::{halmos_decompose, residuals};
use nestlab::CMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, ..ProptestConfig::default() }
}

/// Hermitian generators block-diagonal in a random basis; their closure is `*`-closed.
fn star_generators(n: usize, seed: u64) -> Vec<CMatrix> {
    let mut r = rng(seed);
    let dims = random_dims(n, &mut r);
    let w = CMatrix::random_unitary(n, &mut r);
    (0..2)
        .map(|_| {
            let blocks: Vec<CMatrix> = dims.iter().map(|&d| CMatrix::random_hermitian(d, &mut r)).collect();
            &(&w * &CMatrix::block_diag(&blocks)) * &w.adjoint()
        })
        .collect()
}

proptest! {
    #![proptest_config(config(24))]

    #[test]
    fn hermitian_eig_reconstructs(n in 1usize..9, seed in any::<u64>()) {
        let t = tol();
        let x = CMatrix::random_hermitian(n, &mut rng(seed));
        let e = hermitian_eig(&x, &t).unwrap();
        let rec = &(&e.vectors * &CMatrix::diag_real(&e.values)) * &e.vectors.adjoint();
        prop_assert!(rec.distance(&x) <= 10.0 * t.eq_tol * x.norm());
    }

    #[test]
    fn range_projection_is_a_projection_fixing_its_inputs(n in 1usize..8, k in 1usize..5, seed in any::<u64>()) {
        let t = tol();
        let mut r = rng(seed);
        let vs: Vec<CMatrix> = (0..k).map(|_| CMatrix::random_gaussian(n, 1, &mut r)).collect();
        let p = range_projection(&vs, n, &t).unwrap();
        prop_assert!((&(&p * &p) - &p).norm() <= t.eq_tol);
        prop_assert!(p.distance(&p.adjoint()) <= t.eq_tol);
        for v in &vs {
            prop_assert!((&p * v).distance(v) <= t.eq_tol * v.norm().max(1.0));
        }
    }

    #[test]
    fn cholesky_inverse_is_upper_triangular(n in 1usize..10, seed in any::<u64>()) {
        let t = tol();
        let x = random_pd(n, 1e4, &mut rng(seed));
        let u = cholesky_upper(&x, &t).unwrap();
        let ui = upper_triangular_inverse(&u).unwrap();
        let dims = vec![1; n];
        prop_assert!(lower_left_norm(&ui, &dims) <= t.eq_tol * ui.norm());
    }

    #[test]
    fn double_commutant_of_a_star_algebra(n in 1usize..5, seed in any::<u64>()) {
        let t = tol();
        let gens = star_generators(n, seed);
        let a = close_algebra(&gens, &full(n), &t).unwrap();
        let cc = commutant(commutant(&gens, n, &t).unwrap().basis(), n, &t).unwrap();
        prop_assert!(cc.same_span(&a, &t).unwrap());
    }

    #[test]
    fn closure_is_idempotent(n in 1usize..5, k in 0usize..3, seed in any::<u64>()) {
        let t = tol();
        let mut r = rng(seed);
        let gens: Vec<CMatrix> = (0..k).map(|_| CMatrix::random_gaussian(n, n, &mut r)).collect();
        let a = close_algebra(&gens, &full(n), &t).unwrap();
        let again = close_algebra(a.basis(), &full(n), &t).unwrap();
        prop_assert_eq!(a.dim(), again.dim());
    }

    #[test]
    fn closure_commutes_with_unitary_conjugation(n in 2usize..5, seed in any::<u64>()) {
        let t = tol();
        let mut r = rng(seed);
        let (e, _) = random_nest(n, &mut r);
        let gens: Vec<CMatrix> = e.projections().iter().map(|p| p.matrix().clone()).chain([CMatrix::unit(n, 0, n - 1)]).collect();
        let u = CMatrix::random_unitary(n, &mut r);
        let a = close_algebra(&gens, &full(n), &t).unwrap();
        let moved: Vec<CMatrix> = gens.iter().map(|g| &(&u.adjoint() * g) * &u).collect();
        let b = close_algebra(&moved, &full(n), &t).unwrap();
        prop_assert!(b.same_span(&a.conjugate(&u, &t).unwrap(), &t).unwrap());
    }

    #[test]
    fn compression_respects_products(n in 2usize..7, seed in any::<u64>()) {
        let t = tol();
        let mut r = rng(seed);
        let (e, _) = random_nest(n, &mut r);
        let a = alg_of(e.projections(), &full(n), &t).unwrap();
        let ps = e.projections();
        let i = r.random_range(0..ps.len() - 1);
        let j = r.random_range(i + 1..ps.len());
        let (q, p) = (&ps[i], &ps[j]);
        let c = compress(&a, p, q, &t).unwrap();
        c.algebra.verify_closed(&t).unwrap();
        // (p − q) a b (p − q) = [(p − q) a (p − q)] [(p − q) b (p − q)].
        let (x, y) = (a.random_element(&mut r), a.random_element(&mut r));
        let lhs = c.restrict(&(&x * &y));
        let rhs = &c.restrict(&x) * &c.restrict(&y);
        prop_assert!(lhs.distance(&rhs) <= t.eq_tol * (x.norm() * y.norm()).max(1.0));
        prop_assert!(c.algebra.contains(&c.restrict(&x), &t).unwrap().member);
    }
}

proptest! {
    #![proptest_config(config(16))]

    #[test]
    fn lattice_of_a_nest_algebra_is_that_nest(n in 1usize..9, seed in any::<u64>()) {
        let t = tol();
        let (e, dims) = random_nest(n, &mut rng(seed));
        let a = alg_of(e.projections(), &full(n), &t).unwrap();
        let l = compute_lat(&a, seed, DEFAULT_BUDGET, &t).unwrap();
        prop_assert_eq!(l.classification(), Classification::Nest);
        prop_assert_eq!(l.len(), dims.len() + 1);
        for p in e.projections() {
            prop_assert!(l.contains(p, &t));
        }
        // Factor dichotomy: any two elements are comparable.
        for p in l.elements() {
            for q in l.elements() {
                prop_assert!(p.le(q, &t) || q.le(p, &t));
            }
        }
        for p in l.elements() {
            prop_assert!(invariant_check(p, &a, &t).unwrap().invariant);
        }
    }

    #[test]
    fn commuting_lattices_in_block_ambients_stay_commutative(
        blocks in prop::collection::vec(1usize..4, 2..4),
        k in 1usize..4,
        seed in any::<u64>(),
    ) {
        let t = tol();
        let mut r = rng(seed);
        let m = AmbientAlgebra::block_diagonal(&blocks).unwrap();
        let n = m.dim();
        let w = CMatrix::block_diag(&blocks.iter().map(|&b| CMatrix::random_unitary(b, &mut r)).collect::<Vec<_>>());
        let e: Vec<Projection> = (0..k)
            .map(|_| {
                let s = random_subset(n, 1, n - 1, &mut r);
                Projection::from_orthonormal(&(&w * &Projection::coordinate(n, &s).basis(&t).unwrap().unwrap()))
            })
            .collect();
        let a = alg_of(&e, &m, &t).unwrap();
        let l = compute_lat(&a, seed, DEFAULT_BUDGET, &t).unwrap();
        prop_assert!(l.classification() != Classification::NonCsl);
        prop_assert!(e.iter().all(|p| l.contains(p, &t)));
    }

    #[test]
    fn complements_are_invariant_for_the_adjoint(n in 2usize..6, extra in 0usize..3, seed in any::<u64>()) {
        let t = tol();
        let mut r = rng(seed);
        let mut gens: Vec<CMatrix> = (0..n).map(|i| CMatrix::unit(n, i, i)).collect();
        for _ in 0..extra {
            let (i, j) = (r.random_range(0..n), r.random_range(0..n));
            gens.push(CMatrix::unit(n, i, j));
        }
        let u = CMatrix::random_unitary(n, &mut r);
        let a = close_algebra(&gens, &full(n), &t).unwrap().conjugate(&u, &t).unwrap();
        let l = compute_lat(&a, seed, DEFAULT_BUDGET, &t).unwrap();
        let la = compute_lat(&a.adjoint(), seed, DEFAULT_BUDGET, &t).unwrap();
        prop_assert_eq!(l.len(), la.len());
        for p in l.elements() {
            prop_assert!(invariant_check(&p.complement(), &a.adjoint(), &t).unwrap().invariant);
            prop_assert!(la.contains(&p.complement(), &t));
        }
    }

    #[test]
    fn galois_connection_and_order_reversal(n in 2usize..6, seed in any::<u64>()) {
        let t = tol();
        let mut r = rng(seed);
        let w = CMatrix::random_unitary(n, &mut r);
        let rot = |s: &[usize]| Projection::from_orthonormal(&(&w * &Projection::coordinate(n, s).basis(&t).unwrap().unwrap()));
        let f: Vec<Projection> = (0..3).map(|_| rot(&random_subset(n, 1, n - 1, &mut r))).collect();
        let e = &f[..1];
        let alg_e = alg_of(e, &full(n), &t).unwrap();
        let alg_f = alg_of(&f, &full(n), &t).unwrap();
        prop_assert!(alg_e.contains_algebra(&alg_f, &t).unwrap());
        let lat_f = compute_lat(&alg_f, seed, DEFAULT_BUDGET, &t).unwrap();
        prop_assert!(f.iter().all(|p| lat_f.contains(p, &t)));
        let hull = hull_from_lattice(&alg_f, &lat_f, &t).unwrap();
        prop_assert!(hull.contains_algebra(&alg_f, &t).unwrap());
    }

    #[test]
    fn nest_algebras_are_reflexive_with_a_masa_and_their_atoms(n in 1usize..8, seed in any::<u64>()) {
        let t = tol();
        let (e, _) = random_nest(n, &mut rng(seed));
        let a = alg_of(e.projections(), &full(n), &t).unwrap();
        prop_assert_eq!(is_reflexive(&a, seed, DEFAULT_BUDGET, &t).unwrap(), ReflexivityStatus::Reflexive);
        let masa = masa_check(&a, seed, &t).unwrap();
        prop_assert!(masa.contains_masa);
        let l = compute_lat(&a, seed, DEFAULT_BUDGET, &t).unwrap();
        for x in atoms(&l, &t).unwrap() {
            prop_assert!(a.contains(x.atom.matrix(), &t).unwrap().member);
        }
    }

    #[test]
    fn nest_cholesky_blocks_are_schur_complement_factors(n in 1usize..10, seed in any::<u64>()) {
        let t = tol();
        let mut r = rng(seed);
        let dims = random_dims(n, &mut r);
        let e = Nest::from_atom_dims(&dims, &t).unwrap();
        let x = random_pd(n, 1e3, &mut r);
        let rep = nest_cholesky(&x, &e, &t).unwrap();
        let s = rep.s.unwrap();
        prop_assert!((&(&s.adjoint() * &s) - &x).norm() <= t.eq_tol * x.norm());
        let a = alg_of(e.projections(), &full(n), &t).unwrap();
        prop_assert!(a.contains(&s, &t).unwrap().member);
        prop_assert!(a.contains(&rep.s_inv.unwrap(), &t).unwrap().member);
        // Block k of S is the Cholesky factor of the leading block of the Schur
        // complement of the first k − 1 blocks.
        let mut off = 0;
        for &d in &dims {
            let rest = n - off;
            let tail = x.submatrix(off, off, rest, rest);
            let schur = if off == 0 {
                tail
            } else {
                let x11 = x.submatrix(0, 0, off, off);
                let x12 = x.submatrix(0, off, off, rest);
                &tail - &(&(&x12.adjoint() * &nestlab::numerics::inverse(&x11).unwrap()) * &x12)
            };
            let lead = schur.submatrix(0, 0, d, d);
            let want = cholesky_upper(&(&lead + &lead.adjoint()).scale(0.5), &t).unwrap();
            let got = s.submatrix(off, off, d, d);
            prop_assert!(got.distance(&want) <= 1e-7 * want.norm().max(1.0));
            off += d;
        }
    }

    #[test]
    fn limit_lemma_for_random_perturbations(n in 2usize..8, seed in any::<u64>()) {
        let t = tol();
        let mut r = rng(seed);
        let (e, _) = random_nest(n, &mut r);
        let h = CMatrix::random_hermitian(n, &mut r);
        let h = h.scale(0.5 / h.norm());
        let id = CMatrix::identity(n);
        let mut prev = f64::INFINITY;
        for k in [1.0, 4.0, 16.0, 64.0] {
            let rep = nest_cholesky(&(&id + &h.scale(1.0 / k)), &e, &t).unwrap();
            let s = rep.s.unwrap();
            let err = (&(&s * &s.adjoint()) - &id).norm();
            prop_assert!(err <= 0.5 / k + 1e-12);
            prop_assert!(err < prev);
            prop_assert!(rep.s_inv.unwrap().norm() <= 2f64.sqrt() + 1e-12);
            prev = err;
        }
    }

    #[test]
    fn corners_of_nest_algebras_factor(n in 2usize..8, seed in any::<u64>()) {
        let t = tol();
        let mut r = rng(seed);
        let (e, _) = random_nest(n, &mut r);
        let a = alg_of(e.projections(), &full(n), &t).unwrap();
        let ps = e.projections();
        let i = r.random_range(0..ps.len() - 1);
        let j = r.random_range(i + 1..ps.len());
        let c = compress(&a, &ps[j], &ps[i], &t).unwrap();
        let k = c.isometry.cols();
        let lat = compute_lat(&c.algebra, seed, DEFAULT_BUDGET, &t).unwrap();
        prop_assert_eq!(lat.classification(), Classification::Nest);
        let nest = Nest::from_lattice(&lat, &t).unwrap();
        let x = random_pd(k, 100.0, &mut r);
        let rep = nest_cholesky(&x, &nest, &t).unwrap();
        prop_assert!(c.algebra.contains(&rep.s.unwrap(), &t).unwrap().member);
        prop_assert!(c.algebra.contains(&rep.s_inv.unwrap(), &t).unwrap().member);
    }

    #[test]
    fn factorization_verdict_is_unitarily_invariant(n in 2usize..6, kind in 0usize..4, seed in any::<u64>()) {
        let t = tol();
        let mut r = rng(seed);
        let gens: Vec<CMatrix> = match kind {
            0 => (0..n).flat_map(|i| (i..n).map(move |j| CMatrix::unit(n, i, j))).collect(),
            1 => (0..n).map(|i| CMatrix::unit(n, i, i)).collect(),
            2 => vec![CMatrix::unit(n, 0, n - 1)],
            _ => full(n).basis(),
        };
        let a = close_algebra(&gens, &full(n), &t).unwrap();
        let u = CMatrix::random_unitary(n, &mut r);
        let v1 = has_factorization_fd(&a, seed, DEFAULT_BUDGET, &t).unwrap().verdict;
        let v2 = has_factorization_fd(&a.conjugate(&u, &t).unwrap(), seed, DEFAULT_BUDGET, &t).unwrap().verdict;
        prop_assert_eq!(v1, v2);
        prop_assert_eq!(v1, if kind == 0 || kind == 3 { Verdict::Yes } else { Verdict::No });
    }
}

fn pair_strategy() -> impl Strategy<Value = ([usize; 4], usize, u64)> {
    (prop::array::uniform4(0usize..3), 0usize..4, any::<u64>())
        .prop_filter("nonempty", |(c, g, _)| c.iter().sum::<usize>() + 2 * g > 0)
}

proptest! {
    #![proptest_config(config(32))]

    #[test]
    fn halmos_reconstruction_and_generic_part((corners, generic, seed) in pair_strategy()) {
        let t = tol();
        let (p, q) = projection_pair(corners, generic, &mut rng(seed));
        let h = halmos_decompose(&p, &q, &t).unwrap();
        let res = residuals(&h, &p, &q);
        prop_assert!(res.reconstruction <= 1e-8);
        prop_assert_eq!(h.generic_dim, generic);
        if generic > 0 {
            // On the generic part all four corner meets vanish.
            let k = CMatrix::hstack(&[h.generic_first(), h.generic_second()]).unwrap();
            let restrict = |x: &Projection| Projection::new(&(&k.adjoint() * x.matrix()) * &k, &t).unwrap();
            let g = halmos_decompose(&restrict(&p), &restrict(&q), &t).unwrap();
            prop_assert_eq!(g.corner_ranks(), [0, 0, 0, 0]);
            prop_assert_eq!(g.generic_dim, generic);
        }
    }

    #[test]
    fn halmos_symmetry((corners, generic, seed) in pair_strategy()) {
        let t = tol();
        let (p, q) = projection_pair(corners, generic, &mut rng(seed));
        let a = halmos_decompose(&p, &q, &t).unwrap().corner_ranks();
        let b = halmos_decompose(&q, &p, &t).unwrap();
        prop_assert_eq!(b.corner_ranks(), [a[0], a[2], a[1], a[3]]);
        prop_assert_eq!(b.generic_dim, generic);
    }

    #[test]
    fn generic_witness_has_the_block_pattern(generic in 1usize..4, extra in prop::array::uniform4(0usize..2), alpha in 1.0f64..8.0, seed in any::<u64>()) {
        let t = tol();
        let (p, q) = projection_pair(extra, generic, &mut rng(seed));
        let n = p.dim();
        let w = witness_generator(&p, &q, &full(n), WitnessMode::Generic, 0.25, alpha, &t).unwrap();
        let h = halmos_decompose(&p, &q, &t).unwrap();
        let (k1, k2) = (h.generic_first(), h.generic_second());
        let g = generic;
        let id = CMatrix::identity(g);
        prop_assert!((&(&k1.adjoint() * &w.z) * &k1).distance(&id) <= 1e-9 * alpha * alpha);
        prop_assert!((&(&k1.adjoint() * &w.z) * &k2).distance(&id.scale(alpha)) <= 1e-9 * alpha * alpha);
        prop_assert!((&(&k2.adjoint() * &w.z) * &k2).distance(&id.scale(alpha * alpha + 1.0)) <= 1e-9 * alpha * alpha);
        prop_assert!(hermitian_eig(&w.z, &t).unwrap().values[0] > 0.0);
    }
}

proptest! {
    #![proptest_config(config(8))]

    #[test]
    fn orthogonal_witnesses_obstruct_factorization(n in 2usize..6, eps in 0.05f64..0.45, seed in any::<u64>()) {
        let t = tol();
        let mut r = rng(seed);
        let s = random_subset(n, 1, n - 1, &mut r);
        let rest: Vec<usize> = (0..n).filter(|k| !s.contains(k)).collect();
        let u = CMatrix::random_unitary(n, &mut r);
        let rot = |s: &[usize]| Projection::from_orthonormal(&(&u * &Projection::coordinate(n, s).basis(&t).unwrap().unwrap()));
        let (p, q) = (rot(&s), rot(&rest));
        let w = witness_generator(&p, &q, &full(n), WitnessMode::Orthogonal, eps, 1.0, &t).unwrap();
        prop_assert!(hermitian_eig(&w.z, &t).unwrap().values[0] > 0.0);
        let coupling = &(q.matrix() * &w.z) * p.matrix();
        prop_assert!((coupling.norm() - eps).abs() <= 1e-10);
        let a = alg_of(&[p, q], &full(n), &t).unwrap();
        let rep = nestlab::factorization::logmodularity_gap(&w.z, &a, seed, nestlab::factorization::DEFAULT_MAX_ITER, &t).unwrap();
        prop_assert!(rep.gap.unwrap() >= eps / w.z.norm() - 1e-12);
    }
}
