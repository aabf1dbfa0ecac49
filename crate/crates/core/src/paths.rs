//! Exact path samplers, the diffusive rescaling and the statistics built on them.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::increments::IncrementLaw;
use crate::kernel::ReturnKernel;
use crate::numerics::{ks_two_sample, quantile};
use crate::renewal::{green_function, Initial, MarkovRenewalProcess};
use crate::rng::stream;
use crate::spectral::build_tilted;
use crate::Boundary;

/// A trajectory S_1..S_N started from S_0 = 0 with its contact statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub heights: Vec<f64>,
    /// Sorted times i in 1..=N with S_i in [0, a].
    pub contact_set: Vec<usize>,
    /// Last contact at or before N/2 (0 if none).
    pub l_a: usize,
    /// First contact at or after N/2, or N if none.
    pub r_a: usize,
    pub boundary: Boundary,
}

impl PathSample {
    pub fn new(heights: Vec<f64>, a: f64, boundary: Boundary) -> Self {
        let n = heights.len();
        let contact_set: Vec<usize> =
            (1..=n).filter(|i| (0.0..=a).contains(&heights[i - 1])).collect();
        let (l_a, r_a) = contact_extremes(&contact_set, n);
        Self { heights, contact_set, l_a, r_a, boundary }
    }

    pub fn len(&self) -> usize {
        self.heights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heights.is_empty()
    }

    pub fn summary(&self) -> PathSummary {
        PathSummary {
            n: self.len(),
            contacts: self.contact_set.len(),
            max_contact: self.contact_set.last().copied().unwrap_or(0),
            l_a: self.l_a,
            r_a: self.r_a,
            final_height: self.heights.last().copied().unwrap_or(0.0),
            max_height: self.heights.iter().copied().fold(0.0, f64::max),
        }
    }
}

/// L(A) = max(A ∩ [0, N/2]) and R(A) = min((A ∩ [N/2, N]) ∪ {N}).
fn contact_extremes(contacts: &[usize], n: usize) -> (usize, usize) {
    let l = contacts.iter().rev().find(|&&i| 2 * i <= n).copied().unwrap_or(0);
    let r = contacts.iter().find(|&&i| 2 * i >= n).copied().unwrap_or(n);
    (l, r)
}

/// Per-path statistics, cheap enough to keep for 10⁵ paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSummary {
    pub n: usize,
    pub contacts: usize,
    pub max_contact: usize,
    pub l_a: usize,
    pub r_a: usize,
    pub final_height: f64,
    pub max_height: f64,
}

/// Terminal condition of a lattice sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Terminal {
    Free,
    /// S_N in [0, a].
    Strip,
    Height(usize),
}

/// Exact Boltzmann sampler for nearest-neighbour walks on {0, 1, ...} rewarding
/// each visit to {0..a} by e^β, via a backward table of suffix weights.
#[derive(Debug, Clone)]
pub struct LatticeSampler {
    probs: [f64; 3],
    a: usize,
    reward: f64,
    n: usize,
    cap: usize,
    table: Vec<f64>,
    /// Lattice spacing of S after rescaling by σ√N.
    pub sigma: f64,
}

impl LatticeSampler {
    fn build(probs: [f64; 3], a: usize, beta: f64, n: usize, terminal: Terminal) -> Result<Self> {
        if n == 0 {
            return Err(invalid("paths need at least one step"));
        }
        if !beta.is_finite() {
            return Err(invalid("beta must be finite"));
        }
        let sigma = (probs[0] + probs[2]).sqrt();
        let top = match terminal {
            Terminal::Height(h) => h.max(a),
            _ => a,
        };
        let cap = top + n.min((10.0 * sigma * (n as f64).sqrt()).ceil() as usize + 2);
        let reward = beta.exp();
        let width = cap + 1;
        let mut table = vec![0.0; (n + 1) * width];
        for h in 0..=cap {
            table[n * width + h] = match terminal {
                Terminal::Free => 1.0,
                Terminal::Strip => f64::from(h <= a),
                Terminal::Height(t) => f64::from(h == t),
            };
        }
        for t in (0..n).rev() {
            let (head, tail) = table.split_at_mut((t + 1) * width);
            let next = &tail[..width];
            let row = &mut head[t * width..];
            let mut max: f64 = 0.0;
            for h in 0..=cap {
                let mut w = 0.0;
                for (d, p) in probs.iter().enumerate() {
                    let Some(h2) = (h + d).checked_sub(1) else { continue };
                    if h2 > cap {
                        continue;
                    }
                    let r = if h2 <= a { reward } else { 1.0 };
                    w += p * r * next[h2];
                }
                row[h] = w;
                max = max.max(w);
            }
            if max > 0.0 {
                row[..width].iter_mut().for_each(|v| *v /= max);
            }
        }
        if table[0] == 0.0 {
            return Err(Error::ZeroWeight(format!("no admissible path of length {n} for terminal {terminal:?}")));
        }
        Ok(Self { probs, a, reward, n, cap, table, sigma })
    }

    /// Polymer measure of the (p,q) walk from 0.
    pub fn pq(p: f64, a: usize, beta: f64, n: usize, boundary: Boundary) -> Result<Self> {
        IncrementLaw::pq(p)?;
        let terminal = match boundary {
            Boundary::Free => Terminal::Free,
            Boundary::Constrained => Terminal::Strip,
        };
        Self::build([p, 1.0 - 2.0 * p, p], a, beta, n, terminal)
    }

    /// Simple ±1 walk conditioned to stay nonnegative (meander) and to end at 0 (excursion).
    pub fn reference(kind: ReferenceKind, n: usize) -> Result<Self> {
        let terminal = match kind {
            ReferenceKind::Meander => Terminal::Free,
            ReferenceKind::Excursion => Terminal::Height(0),
        };
        Self::build([0.5, 0.0, 0.5], 0, 0.0, n, terminal)
    }

    pub fn steps(&self) -> usize {
        self.n
    }

    /// Draws one path as integer heights S_1..S_N.
    pub fn sample_heights<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<u32> {
        let width = self.cap + 1;
        let mut out = Vec::with_capacity(self.n);
        let mut h = 0usize;
        for t in 0..self.n {
            let next = &self.table[(t + 1) * width..(t + 2) * width];
            let mut w = [0.0; 3];
            let mut total = 0.0;
            for d in 0..3 {
                let Some(h2) = (h + d).checked_sub(1) else { continue };
                if h2 > self.cap {
                    continue;
                }
                let r = if h2 <= self.a { self.reward } else { 1.0 };
                w[d] = self.probs[d] * r * next[h2];
                total += w[d];
            }
            let u = rng.random::<f64>() * total;
            let d = if u < w[0] {
                0
            } else if u < w[0] + w[1] || w[2] == 0.0 {
                1
            } else {
                2
            };
            let d = if w[d] == 0.0 { (0..3).rev().find(|k| w[*k] > 0.0).expect("admissible step") } else { d };
            h = h + d - 1;
            out.push(h as u32);
        }
        out
    }

    pub fn sample<R: Rng + ?Sized>(&self, boundary: Boundary, rng: &mut R) -> PathSample {
        let heights = self.sample_heights(rng).into_iter().map(f64::from).collect();
        PathSample::new(heights, self.a as f64, boundary)
    }

    fn summary_of(&self, heights: &[u32]) -> PathSummary {
        let mut contacts = 0;
        let mut max_contact = 0;
        let mut l_a = 0;
        let mut r_a = self.n;
        let mut max_height = 0;
        for (k, h) in heights.iter().enumerate() {
            let i = k + 1;
            max_height = max_height.max(*h);
            if (*h as usize) <= self.a {
                contacts += 1;
                max_contact = i;
                if 2 * i <= self.n {
                    l_a = i;
                }
                if 2 * i >= self.n && r_a == self.n {
                    r_a = i;
                }
            }
        }
        PathSummary {
            n: self.n,
            contacts,
            max_contact,
            l_a,
            r_a,
            final_height: f64::from(*heights.last().expect("nonempty path")),
            max_height: f64::from(max_height),
        }
    }

    /// Runs `f` on `n_paths` paths, path k using stream (seed, k); output order is path order.
    pub fn map_paths<T: Send>(&self, n_paths: usize, seed: u64, f: impl Fn(&[u32]) -> T + Sync) -> Vec<T> {
        (0..n_paths)
            .into_par_iter()
            .map(|k| {
                let mut rng = stream(seed, k as u64);
                f(&self.sample_heights(&mut rng))
            })
            .collect()
    }

    pub fn summaries(&self, n_paths: usize, seed: u64) -> Vec<PathSummary> {
        self.map_paths(n_paths, seed, |h| self.summary_of(h))
    }

    /// Rescaled marginals S_{tN}/(σ√N) at each t in `t_grid` (tN must be an integer time).
    pub fn marginals(&self, n_paths: usize, seed: u64, t_grid: &[f64]) -> Result<Marginals> {
        let times = lattice_times(t_grid, self.n)?;
        let scale = 1.0 / (self.sigma * (self.n as f64).sqrt());
        let rows = self.map_paths(n_paths, seed, |h| {
            times.iter().map(|&k| if k == 0 { 0.0 } else { f64::from(h[k - 1]) * scale }).collect::<Vec<_>>()
        });
        let mut values = vec![Vec::with_capacity(n_paths); t_grid.len()];
        for row in rows {
            for (col, v) in values.iter_mut().zip(row) {
                col.push(v);
            }
        }
        // the (p,q) walk fills the integers; the ±1 walk only one parity class
        let step = if self.probs[1] == 0.0 { 2.0 } else { 1.0 };
        Ok(Marginals { t_grid: t_grid.to_vec(), values, spacing: step * scale })
    }

    /// sup_t of the rescaled path, one value per path.
    pub fn sups(&self, n_paths: usize, seed: u64) -> Vec<f64> {
        let scale = 1.0 / (self.sigma * (self.n as f64).sqrt());
        self.map_paths(n_paths, seed, |h| f64::from(*h.iter().max().expect("nonempty")) * scale)
    }

    /// Boltzmann weight of a height sequence (for enumeration checks).
    pub fn path_weight(&self, heights: &[u32]) -> f64 {
        let mut w = 1.0;
        let mut prev = 0i64;
        for h in heights {
            let d = *h as i64 - prev;
            if !(-1..=1).contains(&d) {
                return 0.0;
            }
            w *= self.probs[(d + 1) as usize] * if (*h as usize) <= self.a { self.reward } else { 1.0 };
            prev = *h as i64;
        }
        w
    }
}

fn lattice_times(t_grid: &[f64], n: usize) -> Result<Vec<usize>> {
    t_grid
        .iter()
        .map(|t| {
            let x = t * n as f64;
            if !(0.0..=1.0).contains(t) || (x - x.round()).abs() > 1e-9 {
                Err(invalid(format!("t = {t} is not a lattice time for N = {n}")))
            } else {
                Ok(x.round() as usize)
            }
        })
        .collect()
}

/// Exact samples of the (p,q) polymer measure.
pub fn sample_pq(p: f64, a: usize, beta: f64, n: usize, boundary: Boundary, n_paths: usize, seed: u64) -> Result<Vec<PathSample>> {
    if n > 1 << 15 {
        return Err(invalid("N is limited to 2^15"));
    }
    let sampler = LatticeSampler::pq(p, a, beta, n, boundary)?;
    Ok(sampler.map_paths(n_paths, seed, |h| {
        PathSample::new(h.iter().map(|x| f64::from(*x)).collect(), a as f64, boundary)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceKind {
    Meander,
    Excursion,
}

/// Exact samples of the simple walk conditioned positive (and to return to 0).
pub fn reference_sampler(kind: ReferenceKind, n_ref: usize, n_paths: usize, seed: u64) -> Result<Vec<PathSample>> {
    let sampler = LatticeSampler::reference(kind, n_ref)?;
    let boundary = match kind {
        ReferenceKind::Meander => Boundary::Free,
        ReferenceKind::Excursion => Boundary::Constrained,
    };
    Ok(sampler.map_paths(n_paths, seed, |h| PathSample::new(h.iter().map(|x| f64::from(*x)).collect(), 0.0, boundary)))
}

/// Two-stage sampler for continuous laws: contacts from the tilted Markov
/// renewal, then independent excursions above the strip.
#[derive(Debug, Clone)]
pub struct ContinuousSampler {
    law: IncrementLaw,
    a: f64,
    n: usize,
    boundary: Boundary,
    nodes: Vec<f64>,
    free_energy: f64,
    v: Vec<f64>,
    v_origin: f64,
    green: Vec<Vec<f64>>,
    kernel: crate::renewal::RenewalKernel,
    entry: crate::renewal::EntryRow,
    survival: Vec<Vec<f64>>,
    /// Rejection attempts allowed before an excursion is declared stalled.
    pub max_attempts: usize,
}

/// One contact (time, node); node `None` is the origin at time 0.
type Contact = (usize, Option<usize>);

impl ContinuousSampler {
    pub fn new(kernel: &ReturnKernel, beta: f64, n: usize, boundary: Boundary) -> Result<Self> {
        if kernel.law.is_lattice() {
            return Err(invalid("use the lattice sampler for the (p,q) walk"));
        }
        if n == 0 {
            return Err(invalid("paths need at least one step"));
        }
        if boundary == Boundary::Free && n > kernel.survival_horizon() {
            return Err(invalid(format!("free paths need N <= {} for this kernel", kernel.survival_horizon())));
        }
        let tilted = build_tilted(kernel, beta)?;
        let mrp = MarkovRenewalProcess::new(tilted.kernel.clone(), Initial::Entry(tilted.entry.clone()))?;
        let green = green_function(&mrp, n).z;
        let m = kernel.dim();
        let survival = if boundary == Boundary::Free {
            (0..=m).map(|i| (0..=n).map(|t| kernel.survival(i, t)).collect()).collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            law: kernel.law,
            a: kernel.a,
            n,
            boundary,
            nodes: kernel.nodes.clone(),
            free_energy: tilted.free_energy,
            v: tilted.v,
            v_origin: tilted.v_origin,
            green,
            kernel: tilted.kernel,
            entry: tilted.entry,
            survival,
            max_attempts: 2_000_000,
        })
    }

    fn pick<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<usize> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::ZeroWeight("no admissible contact configuration".into()));
        }
        let mut u = rng.random::<f64>() * total;
        for (k, w) in weights.iter().enumerate() {
            if u < *w {
                return Ok(k);
            }
            u -= w;
        }
        Ok(weights.iter().rposition(|w| *w > 0.0).expect("positive weight"))
    }

    /// Contact times and nodes, origin first.
    pub fn sample_contacts<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<Contact>> {
        let m = self.nodes.len();
        let n = self.n;
        let mut last: Contact = match self.boundary {
            Boundary::Constrained => {
                // terminal law ∝ G_j(N)/v_j undoes the eigenfunction tilt
                let w: Vec<f64> = (0..m).map(|j| self.green[n][j] / self.v[j]).collect();
                (n, Some(Self::pick(&w, rng)?))
            }
            Boundary::Free => {
                let mut w = Vec::with_capacity(n * m + 1);
                w.push((-self.free_energy * n as f64).exp() * self.survival[m][n] / self.v_origin);
                for t in 1..=n {
                    let damp = (-self.free_energy * (n - t) as f64).exp();
                    for j in 0..m {
                        w.push(damp * self.green[t][j] / self.v[j] * self.survival[j][n - t]);
                    }
                }
                let k = Self::pick(&w, rng)?;
                if k == 0 {
                    (0, None)
                } else {
                    (1 + (k - 1) / m, Some((k - 1) % m))
                }
            }
        };
        let mut contacts = vec![last];
        while let (t, Some(j)) = last {
            // previous contact (s, i) with probability G_i(s) K_ij(t−s) / G_j(t), or the origin
            let mut w = Vec::with_capacity(t * m);
            w.push(self.entry.mass(j, t));
            for s in 1..t {
                for i in 0..m {
                    w.push(self.green[s][i] * self.kernel.mass(i, j, t - s));
                }
            }
            let k = Self::pick(&w, rng)?;
            last = if k == 0 { (0, None) } else { (1 + (k - 1) / m, Some((k - 1) % m)) };
            contacts.push(last);
        }
        contacts.reverse();
        Ok(contacts)
    }

    fn height(&self, c: Option<usize>) -> f64 {
        c.map_or(0.0, |j| self.nodes[j])
    }

    /// Walk of `len` steps from `x` staying above a, ending anywhere (free) or at `y` (bridge).
    fn excursion<R: Rng + ?Sized>(&self, x: f64, y: Option<f64>, len: usize, rng: &mut R) -> Result<Vec<f64>> {
        let sigma = self.law.sigma();
        let h_max = self.law.density(0.0);
        for _ in 0..self.max_attempts {
            let mut path = Vec::with_capacity(len);
            let mut s = x;
            let mut ok = true;
            let inner = if y.is_some() { len - 1 } else { len };
            for k in 0..inner {
                s = match (y, self.law) {
                    (Some(target), IncrementLaw::Gaussian { .. }) => {
                        // exact Gaussian bridge step towards `target`
                        let remaining = (len - k) as f64;
                        let z: f64 = rng.sample(StandardNormal);
                        s + (target - s) / remaining + sigma * ((remaining - 1.0) / remaining).sqrt() * z
                    }
                    _ => s + self.law.draw(rng),
                };
                if s <= self.a {
                    ok = false;
                    break;
                }
                path.push(s);
            }
            if !ok {
                continue;
            }
            if let Some(target) = y {
                if !matches!(self.law, IncrementLaw::Gaussian { .. })
                    && rng.random::<f64>() * h_max >= self.law.density(target - s)
                {
                    continue;
                }
                path.push(target);
            }
            return Ok(path);
        }
        Err(Error::RejectionStall(format!(
            "no excursion of length {len} from {x} above {} after {} attempts",
            self.a, self.max_attempts
        )))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<PathSample> {
        let contacts = self.sample_contacts(rng)?;
        let mut heights = Vec::with_capacity(self.n);
        for pair in contacts.windows(2) {
            let ((s, from), (t, to)) = (pair[0], pair[1]);
            let (x, y) = (self.height(from), self.height(to));
            if t - s == 1 {
                heights.push(y);
            } else {
                heights.extend(self.excursion(x, Some(y), t - s, rng)?);
            }
        }
        let (t_last, at) = *contacts.last().expect("origin present");
        if t_last < self.n {
            heights.extend(self.excursion(self.height(at), None, self.n - t_last, rng)?);
        }
        Ok(PathSample::new(heights, self.a, self.boundary))
    }
}

/// Exact samples of the polymer measure for a continuous law, contacts on the kernel's nodes.
pub fn sample_continuous(kernel: &ReturnKernel, beta: f64, n: usize, boundary: Boundary, n_paths: usize, seed: u64) -> Result<Vec<PathSample>> {
    let sampler = ContinuousSampler::new(kernel, beta, n, boundary)?;
    (0..n_paths)
        .into_par_iter()
        .map(|k| sampler.sample(&mut stream(seed, k as u64)))
        .collect()
}

/// t ↦ S_{⌊Nt⌋}/(σ√N), linearly interpolated, with S_0 = 0.
#[derive(Debug, Clone)]
pub struct RescaledPath {
    values: Vec<f64>,
}

pub fn rescale(heights: &[f64], sigma: f64) -> RescaledPath {
    let n = heights.len();
    let scale = 1.0 / (sigma * (n as f64).sqrt());
    let values = std::iter::once(0.0).chain(heights.iter().map(|h| h * scale)).collect();
    RescaledPath { values }
}

impl RescaledPath {
    pub fn steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.steps();
        if n == 0 {
            return 0.0;
        }
        let x = t.clamp(0.0, 1.0) * n as f64;
        let k = (x.floor() as usize).min(n - 1);
        let frac = x - k as f64;
        self.values[k] + frac * (self.values[k + 1] - self.values[k])
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Empirical tails of the contact statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactTailRow {
    pub l: usize,
    /// P̂[max A >= l].
    pub p_max_contact: f64,
    /// P̂[L(A) >= l].
    pub p_left: f64,
    /// P̂[N − R(A) >= l].
    pub p_right: f64,
}

pub fn contact_stats(samples: &[PathSummary], l_grid: &[usize]) -> Vec<ContactTailRow> {
    let total = samples.len().max(1) as f64;
    l_grid
        .iter()
        .map(|&l| {
            let count = |pred: &dyn Fn(&PathSummary) -> bool| samples.iter().filter(|s| pred(s)).count() as f64 / total;
            ContactTailRow {
                l,
                p_max_contact: count(&|s| s.max_contact >= l),
                p_left: count(&|s| s.l_a >= l),
                p_right: count(&|s| s.n - s.r_a >= l),
            }
        })
        .collect()
}

/// Rescaled one-time marginals: `values[k]` holds one value per path at `t_grid[k]`.
#[derive(Debug, Clone)]
pub struct Marginals {
    pub t_grid: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    /// Width of the lattice cells the values live on (0 for continuous laws).
    pub spacing: f64,
}

impl Marginals {
    pub fn from_paths(paths: &[PathSample], sigma: f64, t_grid: &[f64]) -> Self {
        let values = t_grid
            .iter()
            .map(|t| paths.iter().map(|p| rescale(&p.heights, sigma).eval(*t)).collect())
            .collect();
        Self { t_grid: t_grid.to_vec(), values, spacing: 0.0 }
    }

    /// Spreads every value uniformly over its lattice cell.
    fn smoothed(&self, column: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream(seed, column as u64);
        self.values[column].iter().map(|v| v + (rng.random::<f64>() - 0.5) * self.spacing).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Subcritical,
    Supercritical,
}

#[derive(Debug, Clone, Copy)]
pub struct KsRow {
    pub t: f64,
    /// KS after spreading both samples over their lattice cells.
    pub ks: f64,
    /// KS between the raw lattice-valued samples.
    pub ks_raw: f64,
}

/// Per-t two-sample KS statistics of rescaled marginals against a reference.
pub fn scaling_test(sample: &Marginals, reference: &Marginals, seed: u64) -> Result<Vec<KsRow>> {
    if sample.t_grid != reference.t_grid {
        return Err(invalid("sample and reference marginals use different time grids"));
    }
    Ok(sample
        .t_grid
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let ks_raw = ks_two_sample(&sample.values[k], &reference.values[k]);
            let ks = ks_two_sample(&sample.smoothed(k, seed), &reference.smoothed(k, seed ^ 0x5eed));
            KsRow { t, ks, ks_raw }
        })
        .collect())
}

/// Quantiles of sup_t S^N_t for the supercritical check.
pub fn sup_quantiles(sups: &[f64], probs: &[f64]) -> Vec<f64> {
    probs.iter().map(|p| quantile(sups, *p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{build_continuous, KernelOptions};
    use crate::numerics::ks_one_sample;
    use std::collections::HashMap;

    #[test]
    fn contact_extremes_definition() {
        let p = PathSample::new(vec![0.0, 3.0, 1.0, 4.0, 5.0, 2.0, 6.0, 7.0], 1.0, Boundary::Free);
        assert_eq!(p.contact_set, vec![1, 3]);
        assert_eq!(p.l_a, 3);
        assert_eq!(p.r_a, 8);
        let q = PathSample::new(vec![3.0, 0.0, 3.0, 1.0], 1.0, Boundary::Constrained);
        assert_eq!((q.l_a, q.r_a), (2, 2));
    }

    #[test]
    fn one_step_constrained_probabilities() {
        let s = LatticeSampler::pq(0.3, 1, 0.8, 1, Boundary::Constrained).unwrap();
        let mut rng = stream(1, 0);
        let n = 200_000;
        let zeros = (0..n).filter(|_| s.sample_heights(&mut rng)[0] == 0).count() as f64 / n as f64;
        let want = 4.0 / 7.0;
        assert!((zeros - want).abs() < 4.0 * (want * (1.0 - want) / n as f64).sqrt());
    }

    #[test]
    fn two_step_constrained_frequencies() {
        let beta = 0.3;
        let s = LatticeSampler::pq(0.3, 1, beta, 2, Boundary::Constrained).unwrap();
        let paths: [[u32; 2]; 4] = [[0, 0], [0, 1], [1, 0], [1, 1]];
        let z: f64 = paths.iter().map(|p| s.path_weight(p)).sum();
        assert!((z - 0.49 * (2.0 * beta).exp()).abs() < 1e-14);
        let mut rng = stream(2, 0);
        let n = 100_000;
        let mut counts = HashMap::new();
        for _ in 0..n {
            *counts.entry(s.sample_heights(&mut rng)).or_insert(0usize) += 1;
        }
        for p in paths {
            let want = s.path_weight(&p) / z;
            let got = *counts.get(p.as_slice()).unwrap_or(&0) as f64 / n as f64;
            assert!((got - want).abs() < 3.0 * (want * (1.0 - want) / n as f64).sqrt() + 1e-4);
        }
    }

    #[test]
    fn strongly_repulsive_strip_still_samples() {
        for boundary in [Boundary::Free, Boundary::Constrained] {
            let s = LatticeSampler::pq(0.3, 1, -30.0, 200, boundary).unwrap();
            let mut rng = stream(3, 0);
            for _ in 0..50 {
                let path = s.sample(boundary, &mut rng);
                let minimum = if boundary == Boundary::Free { 2 } else { 3 };
                assert!(path.contact_set.len() <= minimum, "{:?}", path.contact_set);
            }
        }
    }

    #[test]
    fn odd_excursion_is_impossible() {
        assert!(matches!(LatticeSampler::reference(ReferenceKind::Excursion, 11), Err(Error::ZeroWeight(_))));
    }

    #[test]
    fn reference_paths_are_positive_and_excursions_return() {
        let ex = reference_sampler(ReferenceKind::Excursion, 64, 200, 4).unwrap();
        assert!(ex.iter().all(|p| p.heights.iter().all(|h| *h >= 0.0) && p.heights[63] == 0.0));
        let me = reference_sampler(ReferenceKind::Meander, 64, 200, 4).unwrap();
        assert!(me.iter().all(|p| p.heights.iter().all(|h| *h >= 0.0)));
    }

    #[test]
    fn meander_endpoint_is_rayleigh() {
        let s = LatticeSampler::reference(ReferenceKind::Meander, 4096).unwrap();
        let m = s.marginals(100_000, 5, &[1.0]).unwrap();
        let smooth = m.smoothed(0, 1);
        let ks = ks_one_sample(&smooth, |x| if x <= 0.0 { 0.0 } else { 1.0 - (-0.5 * x * x).exp() });
        assert!(ks < 0.02, "{ks}");
    }

    #[test]
    fn rescale_examples() {
        let zero = rescale(&[0.0; 10], 1.0);
        assert!((0..=20).all(|k| zero.eval(k as f64 / 20.0) == 0.0));
        let n = 16;
        let ramp: Vec<f64> = (1..=n).map(|k| k as f64).collect();
        let r = rescale(&ramp, 1.0);
        assert!((r.eval(1.0) - 4.0).abs() < 1e-15);
        assert!((r.eval(1.0 / 16.0) - 0.25).abs() < 1e-15);
        let mid = r.eval(3.5 / 16.0);
        assert!((mid - 0.5 * (r.eval(3.0 / 16.0) + r.eval(4.0 / 16.0))).abs() < 1e-15);
    }

    #[test]
    fn contact_fraction_increases_with_beta() {
        let mut prev = 0.0;
        for beta in [-0.5, 0.0, 0.2, 0.4, 0.8] {
            let s = LatticeSampler::pq(0.3, 1, beta, 200, Boundary::Free).unwrap();
            let f = s.summaries(4000, 6).iter().map(|x| x.contacts as f64).sum::<f64>() / (4000.0 * 200.0);
            assert!(f > prev);
            prev = f;
        }
    }

    #[test]
    fn summaries_match_path_samples() {
        let s = LatticeSampler::pq(0.3, 1, 0.1, 101, Boundary::Constrained).unwrap();
        let sums = s.summaries(50, 8);
        let paths = sample_pq(0.3, 1, 0.1, 101, Boundary::Constrained, 50, 8).unwrap();
        for (a, b) in sums.iter().zip(&paths) {
            assert_eq!(*a, b.summary());
        }
    }

    #[test]
    fn output_independent_of_thread_count() {
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| sample_pq(0.3, 1, 0.0, 64, Boundary::Free, 64, 77).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    fn small_gauss_kernel() -> ReturnKernel {
        let law = IncrementLaw::gaussian(1.0).unwrap();
        build_continuous(&law, 1.0, &KernelOptions { n_max: Some(128), n_nodes: 8, ..Default::default() }).unwrap()
    }

    #[test]
    fn continuous_paths_respect_constraints() {
        let k = small_gauss_kernel();
        for boundary in [Boundary::Free, Boundary::Constrained] {
            let paths = sample_continuous(&k, 0.3, 48, boundary, 100, 9).unwrap();
            for p in &paths {
                assert_eq!(p.len(), 48);
                assert!(p.heights.iter().all(|h| *h >= 0.0));
                if boundary == Boundary::Constrained {
                    assert!(*p.heights.last().unwrap() <= 1.0);
                }
            }
        }
    }

    #[test]
    fn one_step_excursion_is_a_jump_between_nodes() {
        let k = small_gauss_kernel();
        let p = sample_continuous(&k, 2.0, 5, Boundary::Constrained, 200, 10).unwrap();
        for path in p {
            for w in path.heights.windows(2) {
                if w[0] <= 1.0 && w[1] <= 1.0 {
                    assert!(k.nodes.iter().any(|x| *x == w[1]));
                }
            }
        }
    }

    #[test]
    fn continuous_last_contact_law_matches_green_function() {
        let k = small_gauss_kernel();
        let n = 24;
        let sampler = ContinuousSampler::new(&k, 0.1, n, Boundary::Constrained).unwrap();
        // P[last contact before N is at time s] from the Green function
        let m = k.dim();
        let tilted = build_tilted(&k, 0.1).unwrap();
        let mut exact = vec![0.0; n];
        for j in 0..m {
            let wj = sampler.green[n][j] / sampler.v[j];
            exact[0] += wj * tilted.entry.mass(j, n) / sampler.green[n][j];
            for s in 1..n {
                for i in 0..m {
                    exact[s] += wj * sampler.green[s][i] * tilted.kernel.mass(i, j, n - s) / sampler.green[n][j];
                }
            }
        }
        let norm: f64 = exact.iter().sum();
        let trials = 100_000;
        let mut counts = vec![0usize; n];
        let mut rng = stream(12, 0);
        for _ in 0..trials {
            let c = sampler.sample_contacts(&mut rng).unwrap();
            counts[c[c.len() - 2].0] += 1;
        }
        let mut chi2 = 0.0;
        let mut dof = 0;
        for s in 0..n {
            let e = exact[s] / norm * trials as f64;
            if e > 5.0 {
                chi2 += (counts[s] as f64 - e).powi(2) / e;
                dof += 1;
            }
        }
        // 99.9% quantile of χ² is below dof + 4√(2 dof) + 10 for these sizes
        assert!(chi2 < dof as f64 + 4.0 * (2.0 * dof as f64).sqrt() + 10.0, "{chi2} {dof}");
    }

    #[test]
    fn excursion_maxima_uncorrelated_given_contacts() {
        let k = small_gauss_kernel();
        let sampler = ContinuousSampler::new(&k, -0.5, 40, Boundary::Constrained).unwrap();
        let mut rng = stream(13, 0);
        let (x, y) = (k.nodes[3], k.nodes[5]);
        let pairs: Vec<(f64, f64)> = (0..20_000)
            .map(|_| {
                let m1 = sampler.excursion(x, Some(y), 12, &mut rng).unwrap();
                let m2 = sampler.excursion(y, Some(x), 12, &mut rng).unwrap();
                (m1.iter().copied().fold(0.0, f64::max), m2.iter().copied().fold(0.0, f64::max))
            })
            .collect();
        let n = pairs.len() as f64;
        let (ma, mb) = (pairs.iter().map(|p| p.0).sum::<f64>() / n, pairs.iter().map(|p| p.1).sum::<f64>() / n);
        let cov = pairs.iter().map(|p| (p.0 - ma) * (p.1 - mb)).sum::<f64>() / n;
        let va = pairs.iter().map(|p| (p.0 - ma).powi(2)).sum::<f64>() / n;
        let vb = pairs.iter().map(|p| (p.1 - mb).powi(2)).sum::<f64>() / n;
        let corr = cov / (va * vb).sqrt();
        assert!(corr.abs() < 4.0 / n.sqrt(), "{corr}");
    }
}
