//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;

/// All `k`-subsets of `0..n` as membership vectors.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<bool>> {
    fn rec(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<bool>>) {
        if cur.len() == k {
            let mut m = vec![false; n];
            for &i in cur.iter() {
                m[i] = true;
            }
            out.push(m);
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(n, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, k, 0, &mut Vec::new(), &mut out);
    out
}

/// Expectation of a moment tag over independent uniform training sets,
/// with fixed indices 0, 1, 2.
pub fn lemma_by_enumeration(tag: &str, n: usize, n1: usize) -> BigRational {
    let sets = subsets(n, n1);
    let value = |s: &[bool], t: &[bool]| -> i64 {
        let y = s.iter().zip(t).filter(|(a, b)| **a && **b).count() as i64;
        let b = |c: bool| c as i64;
        match tag {
            "a" | "d_mean" | "d_var" => b(!s[0]),
            "b1" | "e" => b(!s[0] && !s[1]),
            "b2" => b(!s[0] && s[1]),
            "c" => b(!s[0] && s[1] && s[2]),
            "f" => b(!s[0] && !t[0]),
            "g" => b(!s[0] && s[1] && !t[1]),
            "h" => b(!s[0] && s[1] && !t[1] && t[0]),
            "i1" => y * b(!s[0] && !t[0]),
            "i2" => y * y * b(!s[0] && !t[0]),
            "j" => y * y * b(!s[0] && !t[1]),
            "k" => y * b(!s[0] && !t[1] && t[0]),
            other => panic!("unknown tag {other}"),
        }
    };
    let mut total = BigInt::from(0);
    for s in &sets {
        for t in &sets {
            total += value(s, t);
        }
    }
    let m = BigInt::from(sets.len());
    let mean = BigRational::new(total, &m * &m);
    if tag == "d_var" {
        &mean - &mean * &mean
    } else {
        mean
    }
}

fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn step<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            return left + right + diff / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    if b <= a {
        return 0.0;
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Adaptive Simpson on `[a, b]`, pre-split into `pieces` panels so narrow
/// features are not missed.
pub fn integrate_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64, pieces: usize) -> f64 {
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|k| {
            simpson(
                &f,
                a + k as f64 * h,
                a + (k + 1) as f64 * h,
                tol / pieces as f64,
            )
        })
        .sum()
}

const LOWER: f64 = -9.0;

/// `Φ(x)` from the density by adaptive Simpson.
pub fn normal_cdf_oracle(x: f64) -> f64 {
    let phi = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    if x <= 0.0 {
        integrate_simpson(phi, -12.0, x, 1e-15, 64)
    } else {
        1.0 - integrate_simpson(phi, x, 12.0, 1e-15, 64)
    }
}

/// `P(X <= a, Y <= b)` for a standard bivariate normal with correlation
/// `rho`, |rho| < 1, by nested adaptive Simpson over the joint density.
pub fn bvn_oracle(a: f64, b: f64, rho: f64) -> f64 {
    let s = (1.0 - rho * rho).sqrt();
    let c = 1.0 / (2.0 * std::f64::consts::PI * s);
    let density = |x: f64, y: f64| c * (-(x * x - 2.0 * rho * x * y + y * y) / (2.0 * s * s)).exp();
    let inner = |x: f64| {
        // the conditional law of Y is centred at rho * x with sd s
        let lo = (rho * x - 9.0 * s).max(LOWER);
        if b <= lo {
            return 0.0;
        }
        integrate_simpson(|y| density(x, y), lo, b, 1e-12, 4)
    };
    integrate_simpson(inner, LOWER, a, 1e-11, 32)
}

/// First minimiser of `A/t + B/(n-t)` over `ceil(n/2) <= t < n`.
pub fn brute_argmin(a: f64, b: f64, n: usize) -> usize {
    let mut best = (0usize, f64::INFINITY);
    for t in n.div_ceil(2)..n {
        let v = a / t as f64 + b / (n - t) as f64;
        if v < best.1 {
            best = (t, v);
        }
    }
    best.0
}
