//! Matrix-free conjugate gradient for symmetric positive definite operators.

use crate::error::{Error, Result};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A x = b` starting from `x`, stopping once `‖r‖ ≤ tol ‖b‖`.
/// Returns the iteration count.
pub(crate) fn solve<F>(apply: F, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<usize>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0);
    }
    let ax = apply(x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut rr = dot(&r, &r);
    let target = tol * b_norm;
    if rr.sqrt() <= target {
        return Ok(0);
    }
    let mut p = r.clone();
    for iter in 1..=max_iter {
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::CgNotConverged {
                iterations: iter,
                residual: rr.sqrt() / b_norm,
            });
        }
        let alpha = rr / pap;
        for (xi, pi) in x.iter_mut().zip(&p) {
            *xi += alpha * pi;
        }
        for (ri, api) in r.iter_mut().zip(&ap) {
            *ri -= alpha * api;
        }
        let rr_next = dot(&r, &r);
        if rr_next.sqrt() <= target {
            return Ok(iter);
        }
        let beta = rr_next / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_next;
    }
    Err(Error::CgNotConverged {
        iterations: max_iter,
        residual: rr.sqrt() / b_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_tridiagonal_system() {
        let n = 30;
        let apply = |v: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let l = if i > 0 { v[i - 1] } else { 0.0 };
                    let r = if i + 1 < n { v[i + 1] } else { 0.0 };
                    3.0 * v[i] - l - r
                })
                .collect()
        };
        let truth: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let b = apply(&truth);
        let mut x = vec![0.0; n];
        solve(apply, &b, &mut x, 1e-12, 10 * n).unwrap();
        for (a, t) in x.iter().zip(&truth) {
            assert!((a - t).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let mut x = vec![1.0, 2.0];
        assert_eq!(solve(|v| v.to_vec(), &[0.0, 0.0], &mut x, 1e-10, 5).unwrap(), 0);
        assert_eq!(x, vec![0.0, 0.0]);
    }

    #[test]
    fn reports_non_convergence() {
        let apply = |v: &[f64]| vec![v[0], 1e6 * v[1], 1e-6 * v[2]];
        let mut x = vec![0.0; 3];
        let err = solve(apply, &[1.0, 1.0, 1.0], &mut x, 1e-14, 1).unwrap_err();
        assert!(matches!(err, Error::CgNotConverged { iterations: 1, .. }));
    }
}
