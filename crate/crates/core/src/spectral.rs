//! The operator B^λ, its Perron root δ(λ), the critical point, the free
//! energy and the tilted Markov renewal kernel.

use crate::error::{Error, Result};
use crate::kernel::ReturnKernel;
use crate::numerics::power_tail_sum;
use crate::renewal::{EntryRow, PowerTail, RenewalKernel};

/// Relative residual at which power iteration stops.
pub const POWER_TOL: f64 = 1e-12;
/// Iteration cap for power iteration.
pub const POWER_MAX_ITER: usize = 200_000;
/// Smallest λ the free-energy bisection resolves.
pub const LAMBDA_FLOOR: f64 = 1e-14;

/// Dominant eigenpair of a nonnegative matrix.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub value: f64,
    /// Normalized to unit maximum.
    pub vector: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Power iteration on a row-major `dim × dim` matrix.
///
/// Stops when ‖Av − ρv‖∞ ≤ 10⁻¹² ρ‖v‖∞ with ρ the Rayleigh quotient.
pub fn power_iteration(matrix: &[f64], dim: usize) -> Result<Eigen> {
    assert_eq!(matrix.len(), dim * dim, "matrix shape mismatch");
    let mut v = vec![1.0; dim];
    let mut y = vec![0.0; dim];
    let mut residual = f64::INFINITY;
    for it in 1..=POWER_MAX_ITER {
        for (i, out) in y.iter_mut().enumerate() {
            *out = matrix[i * dim..(i + 1) * dim].iter().zip(&v).map(|(a, b)| a * b).sum();
        }
        let norm = y.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if norm == 0.0 {
            return Ok(Eigen { value: 0.0, vector: v, residual: 0.0, iterations: it });
        }
        let vv: f64 = v.iter().map(|x| x * x).sum();
        let rho = v.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / vv;
        let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        residual = y.iter().zip(&v).fold(0.0f64, |m, (a, b)| m.max((a - rho * b).abs())) / (rho.abs() * vmax);
        if residual <= POWER_TOL {
            let vector = v.iter().map(|x| x / vmax).collect();
            return Ok(Eigen { value: rho, vector, residual, iterations: it });
        }
        for (a, b) in v.iter_mut().zip(&y) {
            *a = b / norm;
        }
    }
    Err(Error::NoConvergence { iterations: POWER_MAX_ITER, residual })
}

fn transpose(matrix: &[f64], dim: usize) -> Vec<f64> {
    let mut t = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            t[j * dim + i] = matrix[i * dim + j];
        }
    }
    t
}

/// Nyström matrix of B^λ: entry (i, j) is b_λ(x_i, x_j) w_j.
#[derive(Debug, Clone)]
pub struct OperatorB {
    pub lambda: f64,
    pub dim: usize,
    pub matrix: Vec<f64>,
}

fn exp_weights(lambda: f64, n_max: usize) -> Vec<f64> {
    (1..=n_max).map(|n| (-lambda * n as f64).exp()).collect()
}

/// Σ_n e^{-λn} f(n) over the table plus the analytic tail.
fn laplace(series: &[f64], coef: f64, weights: &[f64], tail: f64) -> f64 {
    series.iter().zip(weights).map(|(f, e)| f * e).sum::<f64>() + coef * tail
}

pub fn assemble_b(kernel: &ReturnKernel, lambda: f64) -> OperatorB {
    assert!(lambda >= 0.0, "lambda must be nonnegative");
    let m = kernel.dim();
    let weights = exp_weights(lambda, kernel.n_max);
    let tail = power_tail_sum(lambda, kernel.n_max, 1.5);
    let mut matrix = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            matrix[i * m + j] = laplace(kernel.series(i, j), kernel.tail_coef(i, j), &weights, tail) * kernel.weights[j];
        }
    }
    OperatorB { lambda, dim: m, matrix }
}

/// Perron data of B^λ.
#[derive(Debug, Clone)]
pub struct SpectralSolution {
    pub delta: f64,
    /// Right eigenfunction at the nodes, unit maximum.
    pub v: Vec<f64>,
    /// Left eigenfunction at the nodes, scaled so that Σ_j v_j w_j ω_j = 1
    /// with ω the quadrature weights.
    pub w: Vec<f64>,
    pub residual: f64,
    pub left_residual: f64,
}

pub fn spectral_radius(op: &OperatorB, node_weights: &[f64]) -> Result<SpectralSolution> {
    let right = power_iteration(&op.matrix, op.dim)?;
    let left = power_iteration(&transpose(&op.matrix, op.dim), op.dim)?;
    // the left vector is a measure; divide by the weights to get a function
    let pairing: f64 = right.vector.iter().zip(&left.vector).map(|(a, b)| a * b).sum();
    let w = left.vector.iter().zip(node_weights).map(|(l, omega)| l / (omega * pairing)).collect();
    Ok(SpectralSolution {
        delta: right.value,
        v: right.vector,
        w,
        residual: right.residual,
        left_residual: left.residual,
    })
}

/// δ(λ), the Perron root of B^λ.
pub fn delta(kernel: &ReturnKernel, lambda: f64) -> Result<f64> {
    Ok(power_iteration(&assemble_b(kernel, lambda).matrix, kernel.dim())?.value)
}

/// β_c = −log δ(0).
pub fn critical_beta(kernel: &ReturnKernel) -> Result<f64> {
    Ok(-delta(kernel, 0.0)?.ln())
}

/// Free energy together with the root-finding residual δ(F) − e^{-β}.
#[derive(Debug, Clone, Copy)]
pub struct FreeEnergy {
    pub beta: f64,
    pub value: f64,
    pub residual: f64,
}

/// F(β) = δ^{-1}(e^{-β}) above the critical point, zero below.
pub fn free_energy(kernel: &ReturnKernel, beta: f64) -> Result<f64> {
    Ok(free_energy_detail(kernel, beta, critical_beta(kernel)?)?.value)
}

/// As [`free_energy`], reusing a precomputed critical point.
pub fn free_energy_detail(kernel: &ReturnKernel, beta: f64, beta_c: f64) -> Result<FreeEnergy> {
    let target = (-beta).exp();
    if beta <= beta_c {
        let residual = delta(kernel, 0.0)? - target;
        return Ok(FreeEnergy { beta, value: 0.0, residual });
    }
    let g = |lambda: f64| -> Result<f64> { Ok(delta(kernel, lambda)? - target) };
    let mut hi = 1.0;
    let mut expansions = 0;
    while g(hi)? > 0.0 {
        hi *= 2.0;
        expansions += 1;
        if expansions > 64 {
            return Err(Error::Bracket(format!("δ(λ) stays above e^-β = {target} up to λ = {hi}")));
        }
    }
    let mut lo = 0.0;
    while hi > LAMBDA_FLOOR {
        let half = 0.5 * hi;
        if g(half)? >= 0.0 {
            lo = half;
            break;
        }
        hi = half;
    }
    let tol = 1e-10 * hi.min(1.0);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if g(mid)? >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let value = 0.5 * (lo + hi);
    Ok(FreeEnergy { beta, value, residual: g(value)? })
}

/// Mean inter-arrival time of the tilted renewal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeanReturn {
    Finite(f64),
    Infinite,
}

impl MeanReturn {
    pub fn value(&self) -> Result<f64> {
        match *self {
            Self::Finite(c) => Ok(c),
            Self::Infinite => Err(Error::InfiniteMean),
        }
    }
}

/// K_{ij}(n) = e^β f_{ij}(n) e^{-Fn} v_j / v_i ω_j with its invariant law and mean.
#[derive(Debug, Clone)]
pub struct TiltedKernel {
    pub beta: f64,
    pub beta_c: f64,
    pub free_energy: f64,
    pub delta: f64,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    /// Invariant probability of the modulating chain, as node masses.
    pub mu: Vec<f64>,
    pub mean_return: MeanReturn,
    /// Right eigenfunction extended to the origin.
    pub v_origin: f64,
    pub kernel: RenewalKernel,
    /// Transitions out of the origin (the walk's starting point).
    pub entry: EntryRow,
}

pub fn build_tilted(kernel: &ReturnKernel, beta: f64) -> Result<TiltedKernel> {
    if !beta.is_finite() {
        return Err(crate::error::invalid("beta must be finite"));
    }
    let beta_c = critical_beta(kernel)?;
    let f = free_energy_detail(kernel, beta, beta_c)?.value;
    let op = assemble_b(kernel, f);
    let sol = spectral_radius(&op, &kernel.weights)?;
    let m = kernel.dim();
    let n_max = kernel.n_max;
    let reward = beta.exp();
    let exps = exp_weights(f, n_max);
    let tail = power_tail_sum(f, n_max, 1.5);

    let mut table = vec![0.0; m * m * n_max];
    let mut coef = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            let factor = reward * sol.v[j] / sol.v[i] * kernel.weights[j];
            let row = &mut table[(i * m + j) * n_max..(i * m + j + 1) * n_max];
            for ((out, val), e) in row.iter_mut().zip(kernel.series(i, j)).zip(&exps) {
                *out = factor * val * e;
            }
            coef[i * m + j] = factor * kernel.tail_coef(i, j);
        }
    }
    let v_origin = (0..m)
        .map(|j| laplace(kernel.origin_series(j), kernel.origin_tail_coef(j), &exps, tail) * kernel.weights[j] * sol.v[j])
        .sum::<f64>()
        / sol.delta;
    let mut entry_table = vec![0.0; m * n_max];
    let mut entry_coef = vec![0.0; m];
    for j in 0..m {
        let factor = reward * sol.v[j] / v_origin * kernel.weights[j];
        for ((out, val), e) in entry_table[j * n_max..(j + 1) * n_max].iter_mut().zip(kernel.origin_series(j)).zip(&exps) {
            *out = factor * val * e;
        }
        entry_coef[j] = factor * kernel.origin_tail_coef(j);
    }
    let renewal = RenewalKernel::new(m, n_max, table, Some(PowerTail { coef, decay: f }))?;
    let entry = EntryRow::new(m, n_max, entry_table, Some(PowerTail { coef: entry_coef, decay: f }))?;

    let mu: Vec<f64> = (0..m).map(|j| sol.v[j] * sol.w[j] * kernel.weights[j]).collect();
    let has_tail = (0..m * m).any(|k| renewal.tail().is_some_and(|t| t.coef[k] > 0.0));
    let mean_return = if f == 0.0 && has_tail {
        MeanReturn::Infinite
    } else {
        MeanReturn::Finite((0..m).map(|i| mu[i] * renewal.mean_time(i)).sum())
    };
    Ok(TiltedKernel {
        beta,
        beta_c,
        free_energy: f,
        delta: sol.delta,
        v: sol.v,
        w: sol.w,
        mu,
        mean_return,
        v_origin,
        kernel: renewal,
        entry,
    })
}

impl TiltedKernel {
    /// ‖μK − μ‖₁ with K summed over times.
    pub fn invariance_residual(&self) -> f64 {
        let m = self.mu.len();
        (0..m)
            .map(|j| {
                let pushed: f64 = (0..m).map(|i| self.mu[i] * self.kernel.pair_mass(i, j)).sum();
                (pushed - self.mu[j]).abs()
            })
            .sum()
    }
}
