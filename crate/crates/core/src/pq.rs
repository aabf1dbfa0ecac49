//! Closed forms and exact transfer-matrix computations for the (p,q) walk.

use std::f64::consts::PI;
use std::ops::RangeInclusive;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::spectral::power_iteration;
use crate::Boundary;

/// Closed-form constants of the (p,q) walk.
#[derive(Debug, Clone, Serialize)]
pub struct PQConstants {
    pub p: f64,
    pub q: f64,
    pub beta_c_0: f64,
    pub beta_c_1: f64,
    pub beta_c_2: f64,
    pub r: f64,
    pub c_k: f64,
    #[serde(rename = "sumK")]
    pub sum_k: f64,
    #[serde(rename = "C_1")]
    pub c_1: f64,
    #[serde(rename = "Delta_q")]
    pub delta_q: f64,
    /// Coefficients (c2, c1, c0) of the monic characteristic cubic of M_2.
    pub cubic: [f64; 3],
}

fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p < 0.5 {
        Ok(())
    } else {
        Err(invalid(format!("p must lie in (0, 1/2), got {p}")))
    }
}

/// r = 2√7 cos(π/3 − arctan(3√3)/3).
pub fn r_constant() -> f64 {
    2.0 * 7f64.sqrt() * (PI / 3.0 - (3.0 * 3f64.sqrt()).atan() / 3.0).cos()
}

pub fn constants(p: f64) -> Result<PQConstants> {
    check_p(p)?;
    let q = 1.0 - 2.0 * p;
    let r = r_constant();
    let s5 = 5f64.sqrt();
    let c_k = (p / (8.0 * PI)).sqrt();
    Ok(PQConstants {
        p,
        q,
        beta_c_0: -(1.0 - p).ln(),
        beta_c_1: -(1.0 - (3.0 - s5) * p / 2.0).ln(),
        beta_c_2: -(1.0 - (5.0 - r) * p / 3.0).ln(),
        r,
        c_k,
        sum_k: (1.0 + q) / 2.0,
        c_1: 5.0 / ((s5 - 1.0).powi(2) * PI * c_k * c_k),
        delta_q: 5.0 * (q - 1.0).powi(2) / 4.0,
        cubic: cubic_coefficients(q),
    })
}

/// (c2, c1, c0) with P_q(X) = X³ + c2 X² + c1 X + c0 the characteristic polynomial of M_2.
pub fn cubic_coefficients(q: f64) -> [f64; 3] {
    [
        -(1.0 + 5.0 * q) / 2.0,
        (3.0 * q * q + 4.0 * q - 1.0) / 2.0,
        -(q * q * q + 9.0 * q * q - q - 1.0) / 8.0,
    ]
}

fn eval_cubic(c: [f64; 3], x: Complex64) -> (Complex64, Complex64) {
    let v = ((x + c[0]) * x + c[1]) * x + c[2];
    let d = (x * 3.0 + 2.0 * c[0]) * x + c[1];
    (v, d)
}

/// Roots of X³ + c2 X² + c1 X + c0 by Cardano's formulas, Newton-polished,
/// sorted by decreasing real part.
pub fn cardan_roots(c2: f64, c1: f64, c0: f64) -> [Complex64; 3] {
    let coeffs = [c2, c1, c0];
    let shift = c2 / 3.0;
    let pp = c1 - c2 * c2 / 3.0;
    let qq = 2.0 * c2 * c2 * c2 / 27.0 - c2 * c1 / 3.0 + c0;
    let disc = Complex64::new((qq / 2.0).powi(2) + (pp / 3.0).powi(3), 0.0);
    let sq = disc.sqrt();
    let mut u = (Complex64::new(-qq / 2.0, 0.0) + sq).cbrt();
    if u.norm() < 1e-300 {
        u = (Complex64::new(-qq / 2.0, 0.0) - sq).cbrt();
    }
    let omega = Complex64::from_polar(1.0, 2.0 * PI / 3.0);
    let mut roots = [Complex64::new(0.0, 0.0); 3];
    let mut wk = Complex64::new(1.0, 0.0);
    for root in roots.iter_mut() {
        let uk = u * wk;
        let t = if uk.norm() < 1e-300 { uk } else { uk - pp / (3.0 * uk) };
        *root = t - shift;
        wk *= omega;
    }
    let scale = 1.0 + c2.abs() + c1.abs() + c0.abs();
    for root in roots.iter_mut() {
        if root.im.abs() < 1e-7 * scale {
            root.im = 0.0;
        }
        for _ in 0..8 {
            let (v, d) = eval_cubic(coeffs, *root);
            if v.norm() < 1e-15 * scale || d.norm() == 0.0 {
                break;
            }
            *root -= v / d;
        }
    }
    roots.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    roots
}

/// The (a+1)×(a+1) matrix whose Perron root is e^{-β_c^a}.
#[derive(Debug, Clone)]
pub struct TridiagonalMa {
    pub diagonal: Vec<f64>,
    pub off: f64,
}

impl TridiagonalMa {
    pub fn new(p: f64, a: usize) -> Result<Self> {
        check_p(p)?;
        if a == 0 {
            return Err(invalid("the tridiagonal matrix is defined for a >= 1"));
        }
        let q = 1.0 - 2.0 * p;
        let mut diagonal = vec![q; a + 1];
        diagonal[a] = (1.0 + q) / 2.0;
        Ok(Self { diagonal, off: p })
    }

    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    /// Row-major dense copy.
    pub fn dense(&self) -> Vec<f64> {
        let n = self.dim();
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            m[i * n + i] = self.diagonal[i];
            if i + 1 < n {
                m[i * n + i + 1] = self.off;
                m[(i + 1) * n + i] = self.off;
            }
        }
        m
    }
}

pub fn spectral_radius_ma(p: f64, a: usize) -> Result<f64> {
    let m = TridiagonalMa::new(p, a)?;
    Ok(power_iteration(&m.dense(), m.dim())?.value)
}

/// Log partition function with bookkeeping of the height-cap truncation.
#[derive(Debug, Clone, Copy)]
pub struct LogPartition {
    pub log_z: f64,
    /// Relative weight discarded at the height cap, summed over steps.
    pub truncated_mass: f64,
}

/// Height cap for an N-step DP above strip top `a`.
pub fn height_cap(a: usize, n: usize) -> usize {
    a + n.min(8 * (n as f64).sqrt().ceil() as usize + 2)
}

fn transfer(
    p: f64,
    a: usize,
    beta: f64,
    n: usize,
    boundary: Boundary,
    start: usize,
    forbidden: Option<&RangeInclusive<usize>>,
) -> Result<LogPartition> {
    check_p(p)?;
    if start > a {
        return Err(invalid(format!("start {start} lies outside the strip [0, {a}]")));
    }
    if !beta.is_finite() {
        return Err(invalid("beta must be finite"));
    }
    let q = 1.0 - 2.0 * p;
    let cap = height_cap(a, n);
    let reward = beta.exp();
    let mut cur = vec![0.0; cap + 1];
    let mut next = vec![0.0; cap + 1];
    cur[start] = 1.0;
    let mut log_z = 0.0;
    let mut lost = 0.0;
    for k in 1..=n {
        next.iter_mut().for_each(|v| *v = 0.0);
        for h in 0..=cap {
            let m = cur[h];
            if m == 0.0 {
                continue;
            }
            if h > 0 {
                next[h - 1] += p * m;
            }
            next[h] += q * m;
            if h < cap {
                next[h + 1] += p * m;
            } else {
                lost += p * m;
            }
        }
        let blocked = forbidden.is_some_and(|r| r.contains(&k));
        for v in next.iter_mut().take(a + 1) {
            *v = if blocked { 0.0 } else { *v * reward };
        }
        let total: f64 = next.iter().sum();
        if total == 0.0 {
            return Ok(LogPartition { log_z: f64::NEG_INFINITY, truncated_mass: lost });
        }
        log_z += total.ln();
        lost /= total;
        for v in next.iter_mut() {
            *v /= total;
        }
        std::mem::swap(&mut cur, &mut next);
    }
    if boundary == Boundary::Constrained {
        let inside: f64 = cur[..=a].iter().sum();
        log_z += inside.ln();
    }
    Ok(LogPartition { log_z, truncated_mass: lost })
}

/// Exact log Z^{c/f}_{N,a,β} from height `start` by height-indexed DP.
pub fn transfer_matrix_z(p: f64, a: usize, beta: f64, n: usize, boundary: Boundary, start: usize) -> Result<LogPartition> {
    transfer(p, a, beta, n, boundary, start, None)
}

/// Exact probability, under the polymer measure from 0, that some time in
/// `window` is a contact.
pub fn contact_in_window_probability(
    p: f64,
    a: usize,
    beta: f64,
    n: usize,
    boundary: Boundary,
    window: RangeInclusive<usize>,
) -> Result<f64> {
    let all = transfer(p, a, beta, n, boundary, 0, None)?;
    let without = transfer(p, a, beta, n, boundary, 0, Some(&window))?;
    Ok(-(without.log_z - all.log_z).exp_m1())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_at_p_03() {
        let c = constants(0.3).unwrap();
        assert!((c.beta_c_1 - 0.121_704_24).abs() < 1e-8);
        assert!((c.beta_c_2 - 0.061_257).abs() < 1e-6);
        assert!((c.beta_c_0 - 0.356_675).abs() < 1e-6);
        // r is the largest root of x³ − 21x + 7
        let (mut lo, mut hi) = (4.0f64, 5.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid.powi(3) - 21.0 * mid + 7.0 < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((c.r - lo).abs() < 1e-12);
        assert!((c.r - 4.405_812).abs() < 1.3e-6);
        assert!((c.sum_k - 0.7).abs() < 1e-15);
        assert!((c.c_k - 0.109_255).abs() < 1e-6);
        assert!((c.c_1 - 5.0 * (3.0 + 5f64.sqrt()) / 0.3).abs() < 1e-9);
        assert!((c.c_1 - 87.2678).abs() < 1e-4);
        assert!(c.beta_c_0 > c.beta_c_1 && c.beta_c_1 > c.beta_c_2 && c.beta_c_2 > 0.0);
        assert!(constants(0.5).is_err() && constants(0.0).is_err());
    }

    #[test]
    fn discriminant_identity() {
        for p in [0.05, 0.2, 0.3, 0.45] {
            let c = constants(p).unwrap();
            assert!((c.delta_q.sqrt() - 5f64.sqrt() * p).abs() < 1e-14);
        }
    }

    #[test]
    fn cardan_examples() {
        let r = cardan_roots(0.0, 0.0, -1.0);
        assert!((r[0] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!(r[1].im.abs() > 0.5 && r[2].im.abs() > 0.5);
        let r = cardan_roots(-6.0, 11.0, -6.0);
        for (root, want) in r.iter().zip([3.0, 2.0, 1.0]) {
            assert!((root.re - want).abs() < 1e-12 && root.im == 0.0);
        }
        for c in [[-6.0, 11.0, -6.0], [0.0, 0.0, -1.0], [1.0, 1.0, 1.0], [-0.3, -2.0, 0.7]] {
            for root in cardan_roots(c[0], c[1], c[2]) {
                assert!(eval_cubic(c, root).0.norm() < 1e-10);
            }
        }
    }

    #[test]
    fn largest_cubic_root_is_critical_weight() {
        let c = constants(0.3).unwrap();
        let roots = cardan_roots(c.cubic[0], c.cubic[1], c.cubic[2]);
        assert!((roots[0].re - (-c.beta_c_2).exp()).abs() < 1e-12);
        assert!((roots[0].re - 0.940_581).abs() < 1e-6);
    }

    #[test]
    fn characteristic_polynomial_of_m2() {
        for k in 1..20 {
            let p = 0.025 * k as f64 - 0.0124;
            let q = 1.0 - 2.0 * p;
            let d = TridiagonalMa::new(p, 2).unwrap().diagonal;
            // det(X I − M) for symmetric tridiagonal, expanded by hand
            let (a0, a1, a2) = (d[0], d[1], d[2]);
            let c2 = -(a0 + a1 + a2);
            let c1 = a0 * a1 + a0 * a2 + a1 * a2 - 2.0 * p * p;
            let c0 = -(a0 * a1 * a2) + p * p * (a0 + a2);
            let want = cubic_coefficients(q);
            assert!((c2 - want[0]).abs() < 1e-12);
            assert!((c1 - want[1]).abs() < 1e-12);
            assert!((c0 - want[2]).abs() < 1e-12);
        }
    }

    #[test]
    fn ma_radius_matches_closed_forms() {
        let c = constants(0.3).unwrap();
        assert!((spectral_radius_ma(0.3, 1).unwrap() - 0.885_410_2).abs() < 1e-7);
        assert!((spectral_radius_ma(0.3, 1).unwrap() - (-c.beta_c_1).exp()).abs() < 1e-12);
        assert!((spectral_radius_ma(0.3, 2).unwrap() - (-c.beta_c_2).exp()).abs() < 1e-12);
        assert!(spectral_radius_ma(0.3, 0).is_err());
    }

    #[test]
    fn small_partition_functions() {
        let beta = 0.37;
        let z1 = transfer_matrix_z(0.3, 1, beta, 1, Boundary::Constrained, 0).unwrap();
        assert!((z1.log_z - (0.7f64.ln() + beta)).abs() < 1e-14);
        let z2 = transfer_matrix_z(0.3, 1, beta, 2, Boundary::Constrained, 0).unwrap();
        assert!((z2.log_z - (0.49f64.ln() + 2.0 * beta)).abs() < 1e-14);
    }

    #[test]
    fn beta_zero_free_is_survival_probability() {
        // ballot-style survival DP on the plain walk
        let p = 0.3;
        let n = 40;
        let mut v = vec![0.0; n + 2];
        v[0] = 1.0;
        for _ in 0..n {
            let mut w = vec![0.0; n + 2];
            for h in 0..=n {
                if h > 0 {
                    w[h - 1] += p * v[h];
                }
                w[h] += (1.0 - 2.0 * p) * v[h];
                w[h + 1] += p * v[h];
            }
            v = w;
        }
        let surv: f64 = v.iter().sum();
        let z = transfer_matrix_z(p, 1, 0.0, n, Boundary::Free, 0).unwrap();
        assert!((z.log_z - surv.ln()).abs() < 1e-12);
    }

    #[test]
    fn window_probability_bounds() {
        let pr = contact_in_window_probability(0.3, 1, -0.5, 200, Boundary::Free, 50..=200).unwrap();
        assert!(pr > 0.0 && pr < 1.0);
        let one = contact_in_window_probability(0.3, 1, -0.5, 200, Boundary::Constrained, 150..=200).unwrap();
        assert!((one - 1.0).abs() < 1e-12);
    }
}
