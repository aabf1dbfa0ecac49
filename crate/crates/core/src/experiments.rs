//! Drivers for the verification experiments, shared by the CLI and the test suite.

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::kernel::ReturnKernel;
use crate::numerics::{linear_fit, quantile};
use crate::paths::{contact_stats, scaling_test, ContactTailRow, KsRow, LatticeSampler, ReferenceKind};
use crate::renewal::{green_function, total_variation, Initial, MarkovRenewalProcess};
use crate::spectral::{build_tilted, critical_beta, free_energy_detail, FreeEnergy};
use crate::Boundary;

/// F on a grid of β, evaluated in parallel.
pub fn free_energy_grid(kernel: &ReturnKernel, betas: &[f64]) -> Result<Vec<FreeEnergy>> {
    let beta_c = critical_beta(kernel)?;
    betas.par_iter().map(|b| free_energy_detail(kernel, *b, beta_c)).collect()
}

#[derive(Debug, Clone)]
pub struct CriticalFit {
    pub beta_c: f64,
    pub exponent: f64,
    pub amplitude: f64,
    /// (β − β_c, F(β)) pairs used by the fit.
    pub points: Vec<(f64, f64)>,
}

/// Least-squares fit of log F against log(β − β_c) on a log grid of `n` points in [lo, hi].
pub fn critical_fit(kernel: &ReturnKernel, lo: f64, hi: f64, n: usize) -> Result<CriticalFit> {
    if !(0.0 < lo && lo < hi) || n < 2 {
        return Err(invalid("critical fit needs 0 < lo < hi and at least two points"));
    }
    let beta_c = critical_beta(kernel)?;
    let gaps: Vec<f64> = (0..n).map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64)).collect();
    let betas: Vec<f64> = gaps.iter().map(|g| beta_c + g).collect();
    let fe = betas.par_iter().map(|b| free_energy_detail(kernel, *b, beta_c)).collect::<Result<Vec<_>>>()?;
    let points: Vec<(f64, f64)> = gaps.iter().zip(&fe).map(|(g, f)| (*g, f.value)).collect();
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let (intercept, slope) = linear_fit(&lx, &ly);
    Ok(CriticalFit { beta_c, exponent: slope, amplitude: intercept.exp(), points })
}

/// TV between the tilted Green function at N and its limit μ/C_β.
pub fn green_tv(kernel: &ReturnKernel, beta: f64, n_list: &[usize]) -> Result<Vec<(usize, f64)>> {
    let tilted = build_tilted(kernel, beta)?;
    let c = tilted.mean_return.value()?;
    let target: Vec<f64> = tilted.mu.iter().map(|m| m / c).collect();
    let mrp = MarkovRenewalProcess::new(tilted.kernel, Initial::Entry(tilted.entry))?;
    let top = n_list.iter().copied().max().unwrap_or(0);
    let green = green_function(&mrp, top);
    Ok(n_list.iter().map(|&n| (n, total_variation(green.at(n), &target))).collect())
}

/// Contact-statistic tails from exactly sampled (p,q) paths.
#[allow(clippy::too_many_arguments)]
pub fn contact_tails(
    p: f64,
    a: usize,
    beta: f64,
    n: usize,
    boundary: Boundary,
    n_paths: usize,
    seed: u64,
    l_grid: &[usize],
) -> Result<Vec<ContactTailRow>> {
    let sampler = LatticeSampler::pq(p, a, beta, n, boundary)?;
    Ok(contact_stats(&sampler.summaries(n_paths, seed), l_grid))
}

/// KS of rescaled (p,q) marginals against the meander (free) or excursion (constrained) reference.
#[allow(clippy::too_many_arguments)]
pub fn scaling_experiment(
    p: f64,
    a: usize,
    beta: f64,
    n: usize,
    boundary: Boundary,
    n_ref: usize,
    n_paths: usize,
    seed: u64,
    t_grid: &[f64],
) -> Result<Vec<KsRow>> {
    let sampler = LatticeSampler::pq(p, a, beta, n, boundary)?;
    let kind = match boundary {
        Boundary::Free => ReferenceKind::Meander,
        Boundary::Constrained => ReferenceKind::Excursion,
    };
    let reference = LatticeSampler::reference(kind, n_ref)?;
    let sample = sampler.marginals(n_paths, seed, t_grid)?;
    let refm = reference.marginals(n_paths, seed.wrapping_add(1), t_grid)?;
    scaling_test(&sample, &refm, seed.wrapping_add(2))
}

/// Median of sup_t S^N_t for each N.
pub fn sup_medians(p: f64, a: usize, beta: f64, n_list: &[usize], n_paths: usize, seed: u64) -> Result<Vec<(usize, f64)>> {
    n_list
        .iter()
        .map(|&n| {
            let sampler = LatticeSampler::pq(p, a, beta, n, Boundary::Free)?;
            Ok((n, quantile(&sampler.sups(n_paths, seed), 0.5)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::build_pq;

    #[test]
    fn fit_recovers_square_law_on_pq() {
        let k = build_pq(0.3, 1, 8192).unwrap();
        let fit = critical_fit(&k, 1e-3, 1e-2, 6).unwrap();
        assert!((fit.exponent - 2.0).abs() < 0.15, "{}", fit.exponent);
        assert!(fit.points.iter().all(|p| p.1 > 0.0));
    }

    #[test]
    fn green_tv_shrinks() {
        let k = build_pq(0.3, 1, 2048).unwrap();
        let beta = critical_beta(&k).unwrap() + 0.5;
        let tv = green_tv(&k, beta, &[1, 2, 4, 8, 16, 2000]).unwrap();
        assert!(tv[..5].windows(2).all(|w| w[1].1 < w[0].1), "{tv:?}");
        assert!(tv[5].1 < 1e-6);
    }
}
