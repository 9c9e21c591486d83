//! Independent reference implementations used to cross-check the library.
//! Each oracle reaches its answer by a different route than the code under
//! test: bracketed scalar search, exhaustive support enumeration, or
//! factorized alternating minimization. None of them call the closed forms
//! they are checking.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Elementwise minimizer of `tau*|z| + 0.5*(z - v)^2` found by ternary
/// search on a bracket that always contains the optimum.
pub fn l1_prox_oracle(x: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    x.map(|v| {
        let f = |z: f64| tau * z.abs() + 0.5 * (z - v) * (z - v);
        let mut lo = -v.abs() - tau - 1.0;
        let mut hi = v.abs() + tau + 1.0;
        for _ in 0..200 {
            let a = lo + (hi - lo) / 3.0;
            let b = hi - (hi - lo) / 3.0;
            if f(a) < f(b) {
                hi = b;
            } else {
                lo = a;
            }
        }
        0.5 * (lo + hi)
    })
}

pub fn nuclear_norm(z: &DMatrix<f64>) -> f64 {
    z.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .sum()
}

pub fn nuclear_prox_objective(x: &DMatrix<f64>, z: &DMatrix<f64>, tau: f64) -> f64 {
    tau * nuclear_norm(z) + 0.5 * (z - x).norm_squared()
}

/// Minimizer of `tau*||Z||_* + 0.5*||Z - X||_F^2` through the variational
/// form `||Z||_* = min over Z = A B^T of (||A||_F^2 + ||B||_F^2) / 2`,
/// solved by alternating ridge regressions in A and B from several random
/// starts. The objective is strictly convex in Z, so every run that reaches
/// the global basin agrees; the best objective across starts wins.
pub fn nuclear_prox_oracle(x: &DMatrix<f64>, tau: f64, seed: u64) -> DMatrix<f64> {
    assert!(tau > 0.0, "oracle needs a positive threshold");
    let m = x.nrows();
    let n = x.ncols();
    let r = m.min(n);
    let eye = DMatrix::<f64>::identity(r, r);
    let mut best: Option<(f64, DMatrix<f64>)> = None;
    for restart in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(restart));
        let mut a = DMatrix::from_fn(m, r, |_, _| rng.gen_range(-1.0..1.0));
        let mut b = DMatrix::from_fn(n, r, |_, _| rng.gen_range(-1.0..1.0));
        let mut z_prev = &a * b.transpose();
        for sweep in 0..20_000 {
            // Exact block updates: each is a ridge problem with tau > 0, so
            // the r x r system is always invertible.
            let gram_b = (&eye * tau + b.transpose() * &b)
                .try_inverse()
                .expect("ridge system is positive definite");
            a = x * &b * gram_b;
            let gram_a = (&eye * tau + a.transpose() * &a)
                .try_inverse()
                .expect("ridge system is positive definite");
            b = x.transpose() * &a * gram_a;
            if sweep % 10 == 9 {
                let z = &a * b.transpose();
                let delta = (&z - &z_prev).amax();
                z_prev = z;
                if delta < 1e-13 {
                    break;
                }
            }
        }
        let z = &a * b.transpose();
        let obj = nuclear_prox_objective(x, &z, tau);
        if best.as_ref().map_or(true, |(f, _)| obj < *f) {
            best = Some((obj, z));
        }
    }
    best.expect("at least one restart ran").1
}

/// Global non-negative least squares minimizer by trying every support set:
/// solve the unconstrained problem restricted to each support, keep the
/// feasible candidate with the smallest residual.
pub fn nnls_oracle(a: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let d = a.ncols();
    assert!(d <= 20, "support enumeration is 2^d");
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1u32 << d) {
        let support: Vec<usize> = (0..d).filter(|j| mask >> j & 1 == 1).collect();
        let beta = if support.is_empty() {
            DVector::zeros(d)
        } else {
            let sub = a.select_columns(support.iter());
            let eps = f64::EPSILON * a.nrows().max(d) as f64;
            let sol = match sub.svd(true, true).solve(&y.clone(), eps) {
                Ok(sol) => sol,
                Err(_) => continue,
            };
            if sol.iter().any(|&v| v < -1e-10) {
                continue;
            }
            let mut beta = DVector::zeros(d);
            for (pos, &j) in support.iter().enumerate() {
                beta[j] = sol[pos].max(0.0);
            }
            beta
        };
        let obj = (a * &beta - y).norm_squared();
        if best.as_ref().map_or(true, |(f, _)| obj < *f - 1e-15) {
            best = Some((obj, beta));
        }
    }
    best.expect("empty support always qualifies").1
}

/// Uniformly random matrix with entries in [-scale, scale].
pub fn random_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |_, _| rng.gen_range(-scale..scale))
}
