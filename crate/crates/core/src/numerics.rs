//! Quadrature, root finding, power-law tail sums and two-sample statistics.

use crate::error::{Error, Result};

/// ζ(3/2).
pub const ZETA_3_2: f64 = 2.612_375_348_685_488;

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "need at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            dp = 1.0;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Gauss–Legendre rule mapped to [lo, hi].
pub fn gauss_legendre_on(lo: f64, hi: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    (x.iter().map(|t| mid + half * t).collect(), w.iter().map(|v| v * half).collect())
}

/// Composite rule: `panels` equal panels on [lo, hi], `per_panel` nodes each.
pub fn gauss_legendre_panels(lo: f64, hi: f64, per_panel: usize, panels: usize) -> (Vec<f64>, Vec<f64>) {
    let (t, v) = gauss_legendre(per_panel);
    let width = (hi - lo) / panels as f64;
    let mut xs = Vec::with_capacity(per_panel * panels);
    let mut ws = Vec::with_capacity(per_panel * panels);
    for k in 0..panels {
        let mid = lo + (k as f64 + 0.5) * width;
        for (ti, vi) in t.iter().zip(&v) {
            xs.push(mid + 0.5 * width * ti);
            ws.push(0.5 * width * vi);
        }
    }
    (xs, ws)
}

/// Root of a continuous `f` with a sign change on [lo, hi], to absolute width `tol`.
pub fn bisect(mut f: impl FnMut(f64) -> Result<f64>, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let mut flo = f(lo)?;
    let fhi = f(hi)?;
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::Bracket(format!("no sign change on [{lo}, {hi}]")));
    }
    for _ in 0..400 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Σ_{k=1}^{n} k^{-s}, summed from the small end.
fn partial_power_sum(n: usize, s: f64) -> f64 {
    (1..=n).rev().map(|k| (k as f64).powf(-s)).sum()
}

/// ∫_m^∞ e^{-λx} x^{-s} dx for s ∈ {1/2, 3/2, 5/2, ...}; λ = 0 allowed for s > 1.
fn tail_integral(lambda: f64, m: f64, s: f64) -> f64 {
    if lambda == 0.0 {
        return m.powf(1.0 - s) / (s - 1.0);
    }
    let mut order = 0.5;
    let mut value = (std::f64::consts::PI / lambda).sqrt() * libm::erfc((lambda * m).sqrt());
    let e = (-lambda * m).exp();
    while order < s - 1e-9 {
        value = (e * m.powf(-order) - lambda * value) / order;
        order += 1.0;
    }
    value
}

/// k-th derivative of x ↦ e^{-λx} x^{-s}.
fn tail_derivative(lambda: f64, s: f64, x: f64, k: usize) -> f64 {
    // Leibniz rule on e^{-λx} · x^{-s}
    let mut total = 0.0;
    let mut binom = 1.0;
    for j in 0..=k {
        let mut falling = 1.0;
        for i in 0..j {
            falling *= -s - i as f64;
        }
        total += binom * (-lambda).powi((k - j) as i32) * falling * x.powf(-s - j as f64);
        binom = binom * (k - j) as f64 / (j + 1) as f64;
    }
    total * (-lambda * x).exp()
}

/// Σ_{n > n_max} e^{-λn} n^{-s} for half-integer `s`.
///
/// λ = 0 with s = 3/2 uses ζ(3/2) minus the partial sum; large λ sums directly;
/// small λ uses Euler–Maclaurin against the closed-form incomplete-gamma integral.
pub fn power_tail_sum(lambda: f64, n_max: usize, s: f64) -> f64 {
    assert!(lambda >= 0.0, "lambda must be nonnegative");
    if lambda == 0.0 && s <= 1.0 {
        return f64::INFINITY;
    }
    if lambda == 0.0 && s == 1.5 {
        return ZETA_3_2 - partial_power_sum(n_max, s);
    }
    if lambda >= 0.05 {
        let mut sum = 0.0;
        let mut n = n_max + 1;
        loop {
            let term = (-lambda * n as f64).exp() * (n as f64).powf(-s);
            sum += term;
            if term <= 1e-17 * sum || term == 0.0 {
                break;
            }
            n += 1;
        }
        return sum;
    }
    // direct terms until the Euler–Maclaurin start is far from the origin
    let start = (n_max + 1).max(64);
    let mut head = 0.0;
    for n in n_max + 1..start {
        head += (-lambda * n as f64).exp() * (n as f64).powf(-s);
    }
    let m = start as f64;
    let g0 = (-lambda * m).exp() * m.powf(-s);
    let bernoulli = [1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0];
    let mut factorial = 1.0;
    let mut correction = 0.0;
    for (j, b) in bernoulli.iter().enumerate() {
        let order = 2 * j + 2;
        factorial *= ((order - 1) * order) as f64;
        correction += b / factorial * tail_derivative(lambda, s, m, order - 1);
    }
    head + tail_integral(lambda, m, s) + 0.5 * g0 - correction
}

/// Two-sample Kolmogorov–Smirnov statistic. Inputs need not be sorted.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "KS needs nonempty samples");
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// One-sample KS statistic against a continuous CDF.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = cdf(*x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Empirical quantile by the nearest-rank rule on a sorted copy.
pub fn quantile(values: &[f64], prob: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of empty sample");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((prob * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

/// Ordinary least squares `y = intercept + slope x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (my - slope * mx, slope)
}
