//! Nonnegative real roots of low-degree polynomials.
//!
//! Roots are isolated by the critical points of the polynomial (roots of
//! its derivative, found recursively): between consecutive critical points the
//! polynomial is monotone, so each sign change brackets exactly one root.

use super::quintic::QuinticCoeffs;
use crate::error::{Error, Result};

/// All real roots in `[0, inf)`, sorted ascending, without duplicates.
pub fn real_roots(poly: &QuinticCoeffs) -> Result<Vec<f64>> {
    let mut c: Vec<f64> = poly.c.to_vec();
    while c.last() == Some(&0.0) {
        c.pop();
    }
    if c.is_empty() {
        return Err(Error::ZeroPolynomial);
    }
    let lead = *c.last().unwrap();
    let bound = 1.0 + c[..c.len() - 1].iter().fold(0.0_f64, |m, &a| m.max((a / lead).abs()));
    Ok(roots_in(&c, 0.0, bound))
}

/// Bracketed root of a polynomial that changes sign on `[lo, hi]`:
/// Newton steps, falling back to bisection whenever a step leaves the bracket.
pub fn bracketed_root(poly: &QuinticCoeffs, lo: f64, hi: f64) -> f64 {
    solve_bracketed(|x| poly.eval_with_derivative(x), lo, hi)
}

fn eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
}

fn eval_d(c: &[f64], x: f64) -> (f64, f64) {
    let mut p = 0.0;
    let mut d = 0.0;
    for &a in c.iter().rev() {
        d = d * x + p;
        p = p * x + a;
    }
    (p, d)
}

fn magnitude(c: &[f64], x: f64) -> f64 {
    let ax = x.abs();
    c.iter().rev().fold(0.0, |acc, &a| acc * ax + a.abs())
}

fn roots_in(c: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    match c.len() {
        0 | 1 => Vec::new(),
        2 => {
            let r = -c[0] / c[1];
            if (lo..=hi).contains(&r) {
                vec![r]
            } else {
                Vec::new()
            }
        }
        n => {
            let deriv: Vec<f64> = (1..n).map(|k| k as f64 * c[k]).collect();
            let mut knots = vec![lo];
            knots.extend(roots_in(&deriv, lo, hi).into_iter().filter(|&x| x > lo && x < hi));
            knots.push(hi);
            let near_zero = |x: f64| eval(c, x).abs() <= 1e-10 * magnitude(c, x);
            let mut out: Vec<f64> = Vec::new();
            let push = |x: f64, out: &mut Vec<f64>| {
                if out.last().is_none_or(|&p| (x - p).abs() > 1e-10 * x.abs().max(1.0)) {
                    out.push(x);
                }
            };
            for w in knots.windows(2) {
                let (a, b) = (w[0], w[1]);
                if near_zero(a) {
                    push(a, &mut out);
                    continue;
                }
                let (fa, fb) = (eval(c, a), eval(c, b));
                if fa.signum() != fb.signum() && !near_zero(b) {
                    push(solve_bracketed(|x| eval_d(c, x), a, b), &mut out);
                }
            }
            if near_zero(hi) {
                push(hi, &mut out);
            }
            out
        }
    }
}

fn solve_bracketed(f: impl Fn(f64) -> (f64, f64), mut lo: f64, mut hi: f64) -> f64 {
    let (flo, _) = f(lo);
    let rising = flo < 0.0;
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (fx, dx) = f(x);
        if fx == 0.0 {
            return x;
        }
        if (fx < 0.0) == rising {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - fx / dx;
        let next = if newton > lo && newton < hi && dx != 0.0 { newton } else { 0.5 * (lo + hi) };
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) || hi - lo <= f64::EPSILON * hi.abs() {
            return next;
        }
        x = next;
    }
    x
}
