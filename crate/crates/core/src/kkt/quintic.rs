//! Per-server stationarity polynomial of the fixed-total subproblem.

use crate::analytic::InterferenceCoeffs;

/// Polynomial of degree at most five; `c[k]` multiplies `x^k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuinticCoeffs {
    pub c: [f64; 6],
}

impl QuinticCoeffs {
    pub fn eval(&self, x: f64) -> f64 {
        self.c.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// Value and first derivative by Horner's scheme.
    pub fn eval_with_derivative(&self, x: f64) -> (f64, f64) {
        let mut p = self.c[5];
        let mut d = 0.0;
        for &c in self.c[..5].iter().rev() {
            d = d * x + p;
            p = p * x + c;
        }
        (p, d)
    }

    /// Sum of `|c_k| |x|^k`, the natural scale of rounding error in `eval`.
    pub fn magnitude(&self, x: f64) -> f64 {
        let ax = x.abs();
        self.c.iter().rev().fold(0.0, |acc, &c| acc * ax + c.abs())
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.c.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn add_scaled(&self, other: &QuinticCoeffs, k: f64) -> QuinticCoeffs {
        let mut c = self.c;
        for (a, b) in c.iter_mut().zip(other.c) {
            *a += k * b;
        }
        QuinticCoeffs { c }
    }
}

/// Which transcription of the stationarity polynomial to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QuinticForm {
    /// `2 Den^2 (g' - phi + X + 2 varpi phi x / t)` expanded from the true
    /// derivative of the link term; used by the solver.
    #[default]
    Derived,
    /// The commonly published closed form, transcribed term by term.
    Printed,
}

/// Inputs of the stationarity polynomial of one server.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuinticContext {
    pub t: f64,
    pub phi: f64,
    pub theta: f64,
    pub coeffs: InterferenceCoeffs,
    /// `phi - eps + chi + rho * cost + varpi (mu / t + delta)`.
    pub x_big: f64,
    pub varpi: f64,
}

pub fn quintic_coefficients(ctx: &QuinticContext, form: QuinticForm) -> QuinticCoeffs {
    match form {
        QuinticForm::Derived => derived(ctx),
        QuinticForm::Printed => printed(ctx),
    }
}

fn derived(ctx: &QuinticContext) -> QuinticCoeffs {
    let QuinticContext { t, phi, theta, coeffs: k, x_big: x, varpi: w } = *ctx;
    let a = k.beta + k.alpha * t;
    let m = k.mu + k.delta * t;
    let s = t - k.nu * t;
    let q = m * m - 2.0 * phi * s;
    QuinticCoeffs {
        c: [
            2.0 * x * s * s + k.gamma * t * s,
            -4.0 * x * m * s + 2.0 * a * s + 4.0 * w * phi * s * s / t,
            2.0 * x * q + 3.0 * theta * s - a * m + k.gamma * t * phi - 8.0 * w * phi * m * s / t,
            4.0 * x * phi * m - 2.0 * theta * m + 4.0 * w * phi * q / t,
            2.0 * x * phi * phi - theta * phi + 8.0 * w * phi * phi * m / t,
            4.0 * w * phi.powi(3) / t,
        ],
    }
}

fn printed(ctx: &QuinticContext) -> QuinticCoeffs {
    let QuinticContext { t, phi, theta, coeffs: k, x_big: x, varpi: w } = *ctx;
    let a = k.beta + k.alpha * t;
    let m = k.mu + k.delta * t;
    let s = t - k.nu * t;
    let bracket = 2.0 * phi * (t - k.mu * t) + m * m;
    QuinticCoeffs {
        c: [
            2.0 * s * s * x + k.gamma * t * s,
            4.0 * x * m * s + 4.0 * w * (phi / t) * s * s + 2.0 * a * s - 2.0 * k.gamma * t * m,
            2.0 * bracket * x
                + 8.0 * w * (phi / t) * a * s
                + 3.0 * (theta * s - phi * k.gamma * t - a * m),
            4.0 * x * phi * m + 4.0 * w * (phi / t) * bracket - 4.0 * theta * m - 4.0 * phi * a,
            2.0 * x * phi * phi + 8.0 * w * (phi * phi / t) * m - 5.0 * theta * phi,
            4.0 * w * phi.powi(3) / t,
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(t: f64, coeffs: InterferenceCoeffs, x_big: f64, varpi: f64) -> QuinticContext {
        QuinticContext { t, phi: 0.3, theta: 0.2, coeffs, x_big, varpi }
    }

    #[test]
    fn printed_reduction_without_interference() {
        let (t, x, phi, theta) = (1.7, 0.9, 0.3, 0.2);
        let q = quintic_coefficients(&ctx(t, InterferenceCoeffs::default(), x, 0.0), QuinticForm::Printed);
        assert_eq!(q.c[5], 0.0);
        assert_eq!(q.c[3], 0.0);
        assert_eq!(q.c[1], 0.0);
        assert!((q.c[4] - (2.0 * x * phi * phi - 5.0 * theta * phi)).abs() < 1e-15);
        assert!((q.c[2] - (4.0 * phi * t * x + 3.0 * theta * t)).abs() < 1e-15);
        assert!((q.c[0] - 2.0 * t * t * x).abs() < 1e-15);
    }

    #[test]
    fn derived_reduction_without_interference() {
        let (t, x, phi, theta) = (1.7, 0.9, 0.3, 0.2);
        let q = quintic_coefficients(&ctx(t, InterferenceCoeffs::default(), x, 0.0), QuinticForm::Derived);
        assert_eq!((q.c[5], q.c[3], q.c[1]), (0.0, 0.0, 0.0));
        assert!((q.c[4] - (2.0 * x * phi * phi - theta * phi)).abs() < 1e-15);
        assert!((q.c[2] - (-4.0 * phi * t * x + 3.0 * theta * t)).abs() < 1e-15);
        assert!((q.c[0] - 2.0 * t * t * x).abs() < 1e-15);
    }

    #[test]
    fn continuous_in_t() {
        let k = InterferenceCoeffs { alpha: 0.1, beta: 0.2, gamma: 0.3, delta: 0.05, mu: 0.1, nu: 0.2 };
        for form in [QuinticForm::Derived, QuinticForm::Printed] {
            let a = quintic_coefficients(&ctx(1.3, k, 0.4, 0.7), form);
            let b = quintic_coefficients(&ctx(1.3 + 1e-9, k, 0.4, 0.7), form);
            for (x, y) in a.c.iter().zip(b.c) {
                assert!((x - y).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn derived_matches_definition() {
        // 2 Den^2 (g' - phi + X + 2 varpi phi x / t) evaluated directly.
        let k = InterferenceCoeffs { alpha: 0.1, beta: 0.2, gamma: 0.3, delta: 0.05, mu: 0.1, nu: 0.2 };
        let (t, x_big, w, phi, theta) = (1.3, 0.4, 0.7, 0.3, 0.2);
        let q = quintic_coefficients(&ctx(t, k, x_big, w), QuinticForm::Derived);
        let a = k.beta + k.alpha * t;
        let m = k.mu + k.delta * t;
        for x in [0.0_f64, 0.3, 1.1, 2.5] {
            let num = theta * x.powi(3) + a * x * x + k.gamma * t * x;
            let num_d = 3.0 * theta * x * x + 2.0 * a * x + k.gamma * t;
            let den = -phi * x * x - m * x + t - k.nu * t;
            let den_d = -2.0 * phi * x - m;
            let g_minus_phi = 0.5 * (num_d * den - num * den_d) / (den * den);
            let direct = 2.0 * den * den * (g_minus_phi + x_big + 2.0 * w * phi * x / t);
            assert!((q.eval(x) - direct).abs() < 1e-12 * q.magnitude(x).max(1.0), "x={x}");
        }
    }

    #[test]
    fn horner_derivative() {
        let q = QuinticCoeffs { c: [1.0, -2.0, 0.5, 3.0, -1.0, 0.25] };
        let (p, d) = q.eval_with_derivative(1.3);
        assert!((p - q.eval(1.3)).abs() < 1e-14);
        let h = 1e-6;
        assert!((d - (q.eval(1.3 + h) - q.eval(1.3 - h)) / (2.0 * h)).abs() < 1e-7);
    }
}
