//! Special functions and quadrature used by the tail and entropy brackets.

use std::sync::OnceLock;

use statrs::function::gamma::ln_gamma;

const TINY: f64 = 1e-300;

/// Upper incomplete gamma function Γ(s, x) for real `s` and `x > 0`.
///
/// Uses the power series for γ(s, x) when `s > 0` and `x < s + 1`, the
/// Legendre continued fraction (modified Lentz) otherwise. The continued
/// fraction converges for every real `s`, which the critical family needs
/// (its tails are Γ(α + 1, ·) with α < −1).
pub fn upper_gamma(s: f64, x: f64) -> f64 {
    assert!(x > 0.0, "upper_gamma needs x > 0");
    if s > 0.0 && x < s + 1.0 {
        let total = ln_gamma(s).exp();
        return total - lower_gamma_series(s, x);
    }
    upper_gamma_cf(s, x)
}

fn lower_gamma_series(s: f64, x: f64) -> f64 {
    let mut term = 1.0 / s;
    let mut sum = term;
    let mut n = 1.0;
    while n < 1e6 {
        term *= x / (s + n);
        sum += term;
        if term.abs() < sum.abs() * 1e-17 {
            break;
        }
        n += 1.0;
    }
    sum * (-x + s * x.ln()).exp()
}

fn upper_gamma_cf(s: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - s;
    let mut c = 1.0 / TINY;
    let mut d = if b.abs() < TINY { 1.0 / TINY } else { 1.0 / b };
    let mut h = d;
    for i in 1..200_000 {
        let fi = i as f64;
        let an = -fi * (fi - s);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x + s * x.ln()).exp() * h
}

fn gauss_legendre_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| legendre_nodes(20))
}

/// Nodes and weights of the n-point Gauss–Legendre rule on [-1, 1].
fn legendre_nodes(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                let jf = j as f64;
                p0 = ((2.0 * jf + 1.0) * z * p1 - jf * p2) / (jf + 1.0);
            }
            dp = nf * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite 20-point Gauss–Legendre rule with `panels` equal panels.
pub fn gauss_legendre<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, panels: usize) -> f64 {
    let (nodes, weights) = gauss_legendre_rule();
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * width;
        let mid = lo + 0.5 * width;
        let half = 0.5 * width;
        let mut acc = 0.0;
        for (x, w) in nodes.iter().zip(weights) {
            acc += w * f(mid + half * x);
        }
        total += acc * half;
    }
    total
}

/// Integral with an error estimate from panel doubling.
///
/// Returns `(value, error_estimate)`; the estimate is the difference between
/// the last two refinements.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> (f64, f64) {
    let mut panels = 8;
    let mut prev = gauss_legendre(&f, a, b, panels);
    loop {
        panels *= 2;
        let next = gauss_legendre(&f, a, b, panels);
        let err = (next - prev).abs();
        if err <= rel_tol * next.abs().max(1e-300) || panels >= 1 << 14 {
            return (next, err);
        }
        prev = next;
    }
}
