//! Seeded instance generators shared by the integration tests.
#![allow(dead_code)]

use nestlab::algebra::AmbientAlgebra;
use nestlab::factorization::Nest;
use nestlab::lattice::Projection;
use nestlab::{CMatrix, ToleranceConfig};
use rand::Rng;

pub fn tol() -> ToleranceConfig {
    ToleranceConfig::default()
}

pub fn full(n: usize) -> AmbientAlgebra {
    AmbientAlgebra::full(n).unwrap()
}

/// Random composition of `n` into positive parts.
pub fn random_dims<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut dims = Vec::new();
    let mut left = n;
    while left > 0 {
        let d = rng.random_range(1..=left);
        dims.push(d);
        left -= d;
    }
    dims
}

/// `w (Σ_{i<k} e_i e_i*) w*` for each prefix of `dims`, including 0 and I.
pub fn conjugated_nest(dims: &[usize], w: &CMatrix) -> Nest {
    let n: usize = dims.iter().sum();
    let mut acc = 0;
    let mut chain = Vec::new();
    for &d in dims {
        acc += d;
        let p = Projection::coordinate(n, &(0..acc).collect::<Vec<_>>());
        chain.push(Projection::from_orthonormal(&(w * &p.basis(&tol()).unwrap().unwrap())));
    }
    Nest::from_chain(n, &chain, &tol()).unwrap()
}

/// Random complete nest in `M_n` with its atom dimensions.
pub fn random_nest<R: Rng>(n: usize, rng: &mut R) -> (Nest, Vec<usize>) {
    let dims = random_dims(n, rng);
    let w = CMatrix::random_unitary(n, rng);
    (conjugated_nest(&dims, &w), dims)
}

/// Hermitian positive definite matrix with spectrum in `[1, cond]`.
pub fn random_pd<R: Rng>(n: usize, cond: f64, rng: &mut R) -> CMatrix {
    let v = CMatrix::random_unitary(n, rng);
    let lambda: Vec<f64> = (0..n)
        .map(|i| match i {
            0 => 1.0,
            1 => cond,
            _ => cond.powf(rng.random::<f64>()),
        })
        .collect();
    &(&v * &CMatrix::diag_real(&lambda)) * &v.adjoint()
}

/// Projection pair with prescribed corner ranks `[P∧Q, P∧Q⊥, P⊥∧Q, P⊥∧Q⊥]` and
/// `generic` two-dimensional generic blocks, in a random basis.
pub fn projection_pair<R: Rng>(corners: [usize; 4], generic: usize, rng: &mut R) -> (Projection, Projection) {
    let n = corners.iter().sum::<usize>() + 2 * generic;
    let mut p = CMatrix::zeros(n, n);
    let mut q = CMatrix::zeros(n, n);
    let mut i = 0;
    for (k, &c) in corners.iter().enumerate() {
        for _ in 0..c {
            if k < 2 {
                p.set(i, i, nestlab::numerics::c64(1.0, 0.0));
            }
            if k % 2 == 0 {
                q.set(i, i, nestlab::numerics::c64(1.0, 0.0));
            }
            i += 1;
        }
    }
    for _ in 0..generic {
        let t: f64 = rng.random_range(0.1..1.45);
        let (c, s) = (t.cos(), t.sin());
        p.set_submatrix(i, i, &CMatrix::from_real_rows(&[&[1.0, 0.0], &[0.0, 0.0]]));
        q.set_submatrix(i, i, &CMatrix::from_real_rows(&[&[c * c, c * s], &[c * s, s * s]]));
        i += 2;
    }
    let w = CMatrix::random_unitary(n, rng);
    let conj = |m: &CMatrix| {
        let x = &(&w * m) * &w.adjoint();
        Projection::new((&x + &x.adjoint()).scale(0.5), &tol()).unwrap()
    };
    (conj(&p), conj(&q))
}

/// Random subset of `0..n` of size in `lo..=hi`.
pub fn random_subset<R: Rng>(n: usize, lo: usize, hi: usize, rng: &mut R) -> Vec<usize> {
    let k = rng.random_range(lo..=hi);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..n {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    let mut s = idx[..k].to_vec();
    s.sort();
    s
}
