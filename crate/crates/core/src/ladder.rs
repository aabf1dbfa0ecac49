//! Ladder heights, renewal functions and the tail constant Θ_a.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::increments::IncrementLaw;
use crate::rng::stream;

/// Steps simulated before a ladder excursion is declared censored.
pub const LADDER_STEP_CAP: usize = 1 << 20;
const BLOCK: usize = 4096;
const GRID_POINTS: usize = 401;

#[derive(Debug, Clone)]
enum Source {
    ExactPq,
    Sampled { asc: LadderSample, desc: LadderSample },
}

/// One ladder direction estimated by simulation.
#[derive(Debug, Clone)]
struct LadderSample {
    /// Sorted ladder heights.
    heights: Vec<f64>,
    /// Sorted renewal epochs H_1 + ... + H_k <= x_max pooled over chains.
    epochs: Vec<f64>,
    chains: usize,
    mean: f64,
}

impl LadderSample {
    fn tail(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 1.0;
        }
        let below = self.heights.partition_point(|h| *h < u);
        (self.heights.len() - below) as f64 / self.heights.len() as f64
    }

    fn renewal(&self, x: f64, x_max: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        let at = |y: f64| 1.0 + self.epochs.partition_point(|e| *e <= y) as f64 / self.chains as f64;
        if x <= x_max {
            at(x)
        } else {
            at(x_max) + (x - x_max) / self.mean
        }
    }
}

/// Tabulated ladder quantities on a grid of [0, x_max].
#[derive(Debug, Clone)]
pub struct LadderTables {
    pub law: IncrementLaw,
    pub x_max: f64,
    pub grid: Vec<f64>,
    pub u_values: Vec<f64>,
    pub v_values: Vec<f64>,
    pub asc_tail_values: Vec<f64>,
    pub desc_tail_values: Vec<f64>,
    pub u_stderr: Vec<f64>,
    pub v_stderr: Vec<f64>,
    pub asc_stderr: Vec<f64>,
    pub desc_stderr: Vec<f64>,
    /// Ladder heights simulated per direction (0 when exact).
    pub sample_count: usize,
    /// Excursions that hit the step cap and were completed by a stationary overshoot.
    pub censored: usize,
    source: Source,
}

impl LadderTables {
    /// P[H_1 >= u].
    pub fn asc_tail(&self, u: f64) -> f64 {
        match &self.source {
            Source::ExactPq => {
                if u <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Source::Sampled { asc, .. } => asc.tail(u),
        }
    }

    /// P[H_1^- >= u].
    pub fn desc_tail(&self, u: f64) -> f64 {
        match &self.source {
            Source::ExactPq => self.asc_tail(u),
            Source::Sampled { desc, .. } => desc.tail(u),
        }
    }

    /// Renewal function of the ascending ladder heights.
    pub fn renewal_u(&self, x: f64) -> f64 {
        match &self.source {
            Source::ExactPq => exact_renewal(x),
            Source::Sampled { asc, .. } => asc.renewal(x, self.x_max),
        }
    }

    /// Renewal function of the descending ladder heights.
    pub fn renewal_v(&self, x: f64) -> f64 {
        match &self.source {
            Source::ExactPq => exact_renewal(x),
            Source::Sampled { desc, .. } => desc.renewal(x, self.x_max),
        }
    }

    /// Writes `x,U,V,asc_tail,desc_tail,U_se,V_se,asc_se,desc_se`.
    pub fn write_csv<W: Write>(&self, out: &mut W, fmt: impl Fn(f64) -> String) -> std::io::Result<()> {
        writeln!(out, "x,U,V,asc_tail,desc_tail,U_se,V_se,asc_se,desc_se")?;
        for k in 0..self.grid.len() {
            let row = [
                self.grid[k],
                self.u_values[k],
                self.v_values[k],
                self.asc_tail_values[k],
                self.desc_tail_values[k],
                self.u_stderr[k],
                self.v_stderr[k],
                self.asc_stderr[k],
                self.desc_stderr[k],
            ];
            let cells: Vec<String> = row.iter().map(|v| fmt(*v)).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

fn exact_renewal(x: f64) -> f64 {
    if x < 0.0 {
        0.0
    } else {
        1.0 + x.floor()
    }
}

/// One strict ladder height; `None` when the step cap is hit.
fn ladder_height<R: Rng>(law: &IncrementLaw, descending: bool, rng: &mut R) -> Option<f64> {
    let mut s = 0.0;
    for _ in 0..LADDER_STEP_CAP {
        s += law.draw(rng);
        if descending && s < 0.0 {
            return Some(-s);
        }
        if !descending && s > 0.0 {
            return Some(s);
        }
    }
    None
}

fn sample_direction(law: &IncrementLaw, n: usize, x_max: f64, seed: u64, descending: bool, grid: &[f64]) -> (LadderSample, usize, Vec<f64>) {
    let tag = if descending { 1u64 << 40 } else { 0 };
    let blocks = n.div_ceil(BLOCK);
    let raw: Vec<Option<f64>> = (0..blocks)
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut rng = stream(seed, tag + b as u64);
            let len = BLOCK.min(n - b * BLOCK);
            (0..len).map(move |_| ladder_height(law, descending, &mut rng)).collect::<Vec<_>>()
        })
        .collect();
    let complete: Vec<f64> = raw.iter().flatten().copied().collect();
    let censored = raw.len() - complete.len();
    let mut heights = raw.clone();
    if censored > 0 {
        // a walk far below its maximum overshoots with the stationary law:
        // a uniform fraction of a size-biased ladder height
        let total: f64 = complete.iter().sum();
        let mut cumulative = Vec::with_capacity(complete.len());
        let mut acc = 0.0;
        for h in &complete {
            acc += h;
            cumulative.push(acc);
        }
        let mut rng = stream(seed, tag + (1 << 39));
        for h in heights.iter_mut().filter(|h| h.is_none()) {
            let target = rng.random::<f64>() * total;
            let k = cumulative.partition_point(|c| *c < target).min(complete.len() - 1);
            *h = Some(rng.random::<f64>() * complete[k]);
        }
    }
    let heights: Vec<f64> = heights.into_iter().map(|h| h.expect("filled")).collect();

    // consecutive heights form renewal chains, each run until it passes x_max
    let mut epochs = Vec::new();
    let mut chains = 0usize;
    let mut sum_counts = vec![0.0; grid.len()];
    let mut sum_sq = vec![0.0; grid.len()];
    let mut chain_epochs: Vec<f64> = Vec::new();
    let mut position = 0.0;
    for h in &heights {
        position += h;
        if position <= x_max {
            chain_epochs.push(position);
            continue;
        }
        chains += 1;
        let mut count = 0usize;
        for (g, x) in grid.iter().enumerate() {
            while count < chain_epochs.len() && chain_epochs[count] <= *x {
                count += 1;
            }
            sum_counts[g] += count as f64;
            sum_sq[g] += (count * count) as f64;
        }
        epochs.append(&mut chain_epochs);
        position = 0.0;
    }
    epochs.sort_by(f64::total_cmp);
    let chains_f = chains.max(1) as f64;
    let u_se = sum_counts
        .iter()
        .zip(&sum_sq)
        .map(|(s, q)| {
            let mean = s / chains_f;
            ((q / chains_f - mean * mean).max(0.0) / chains_f).sqrt()
        })
        .collect();
    let mut sorted = heights;
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
    (LadderSample { heights: sorted, epochs, chains: chains.max(1), mean }, censored, u_se)
}

/// Ladder tables. Exact for the (p,q) walk; otherwise `n_samples` ladder
/// heights per direction are simulated, with the master seed drawn from `rng`.
pub fn estimate_ladder<R: Rng + ?Sized>(law: &IncrementLaw, n_samples: usize, x_max: f64, rng: &mut R) -> LadderTables {
    let x_max = x_max.max(f64::MIN_POSITIVE);
    let grid: Vec<f64> = (0..GRID_POINTS).map(|k| x_max * k as f64 / (GRID_POINTS - 1) as f64).collect();
    let zeros = vec![0.0; grid.len()];
    if law.is_lattice() {
        let mut tables = LadderTables {
            law: *law,
            x_max,
            u_values: grid.iter().map(|x| exact_renewal(*x)).collect(),
            v_values: grid.iter().map(|x| exact_renewal(*x)).collect(),
            asc_tail_values: vec![],
            desc_tail_values: vec![],
            grid,
            u_stderr: zeros.clone(),
            v_stderr: zeros.clone(),
            asc_stderr: zeros.clone(),
            desc_stderr: zeros,
            sample_count: 0,
            censored: 0,
            source: Source::ExactPq,
        };
        tables.asc_tail_values = tables.grid.iter().map(|u| tables.asc_tail(*u)).collect();
        tables.desc_tail_values = tables.asc_tail_values.clone();
        return tables;
    }
    let n = n_samples.max(1);
    let seed: u64 = rng.random();
    let (asc, c1, u_se) = sample_direction(law, n, x_max, seed, false, &grid);
    let (desc, c2, v_se) = sample_direction(law, n, x_max, seed, true, &grid);
    let band = |s: &LadderSample| -> (Vec<f64>, Vec<f64>) {
        let t: Vec<f64> = grid.iter().map(|u| s.tail(*u)).collect();
        let se = t.iter().map(|p| (p * (1.0 - p) / n as f64).sqrt()).collect();
        (t, se)
    };
    let (asc_tail_values, asc_stderr) = band(&asc);
    let (desc_tail_values, desc_stderr) = band(&desc);
    LadderTables {
        law: *law,
        x_max,
        u_values: grid.iter().map(|x| asc.renewal(*x, x_max)).collect(),
        v_values: grid.iter().map(|x| desc.renewal(*x, x_max)).collect(),
        grid,
        asc_tail_values,
        desc_tail_values,
        u_stderr: u_se,
        v_stderr: v_se,
        asc_stderr,
        desc_stderr,
        sample_count: n,
        censored: c1 + c2,
        source: Source::Sampled { asc, desc },
    }
}

/// Default tabulation range a + 10σ.
pub fn default_x_max(law: &IncrementLaw, a: f64) -> f64 {
    a + 10.0 * law.sigma()
}

/// Θ_a(x, y) = P[H^-_1 >= a - y] P[H_1 >= a - x] / (σ√(2π)); zero off the strip.
pub fn theta_a(tables: &LadderTables, sigma: f64, a: f64, x: f64, y: f64) -> f64 {
    if !(0.0..=a).contains(&x) || !(0.0..=a).contains(&y) {
        return 0.0;
    }
    tables.desc_tail(a - y) * tables.asc_tail(a - x) / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Like [`theta_a`] but rejects points off the strip.
pub fn theta_a_strict(tables: &LadderTables, sigma: f64, a: f64, x: f64, y: f64) -> Result<f64> {
    if !(0.0..=a).contains(&x) || !(0.0..=a).contains(&y) {
        return Err(invalid(format!("({x}, {y}) lies outside [0, {a}]^2")));
    }
    Ok(theta_a(tables, sigma, a, x, y))
}

#[derive(Debug, Clone, Copy)]
pub struct StayAboveRow {
    pub n: usize,
    /// √n · P_x[S_1 > a, ..., S_n > a].
    pub scaled_prob: f64,
    pub stderr: f64,
    /// P[H_1 >= a - x] / (σ√(2π)).
    pub limit: f64,
    pub ratio: Option<f64>,
}

/// Exact P_x[S_1 > level, ..., S_t > level] for t = 0..=n on the lattice,
/// `inclusive` switching the event to S_k >= level.
pub(crate) fn lattice_survival(p: f64, x: i64, level: i64, inclusive: bool, n: usize) -> Vec<f64> {
    let q = 1.0 - 2.0 * p;
    // index 0 is the first forbidden height
    let base = if inclusive { level - 1 } else { level };
    let mut out = vec![1.0; n + 1];
    if x < base {
        out.iter_mut().skip(1).for_each(|v| *v = 0.0);
        return out;
    }
    let top = (x - base) as usize + n + 1;
    let mut cur = vec![0.0; top + 1];
    let mut next = vec![0.0; top + 1];
    cur[(x - base) as usize] = 1.0;
    for t in 1..=n {
        next.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..top {
            let v = cur[k];
            if v == 0.0 {
                continue;
            }
            if k > 0 {
                next[k - 1] += p * v;
            }
            next[k] += q * v;
            next[k + 1] += p * v;
        }
        next[0] = 0.0;
        std::mem::swap(&mut cur, &mut next);
        out[t] = cur.iter().sum();
    }
    out
}

/// Monte Carlo survival counts of walks from `x` that must stay in the open
/// (or closed) half-line above `level`; entry k counts walks alive after `checkpoints[k]` steps.
fn mc_survival(law: &IncrementLaw, x: f64, level: f64, inclusive: bool, checkpoints: &[usize], n_samples: usize, seed: u64) -> Vec<usize> {
    let horizon = checkpoints.iter().copied().max().unwrap_or(0);
    let blocks = n_samples.div_ceil(BLOCK);
    (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(seed, b as u64);
            let mut counts = vec![0usize; checkpoints.len()];
            for _ in 0..BLOCK.min(n_samples - b * BLOCK) {
                let mut s = x;
                let mut lived = horizon;
                for t in 1..=horizon {
                    s += law.draw(&mut rng);
                    if (inclusive && s < level) || (!inclusive && s <= level) {
                        lived = t - 1;
                        break;
                    }
                }
                for (c, n) in counts.iter_mut().zip(checkpoints) {
                    if lived >= *n {
                        *c += 1;
                    }
                }
            }
            counts
        })
        .reduce(|| vec![0; checkpoints.len()], |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect())
}

/// Compares √n P_x[S_1 > a, ..., S_n > a] with its ladder-height limit.
///
/// Exact for the (p,q) walk; Monte Carlo with `n_samples` walks otherwise.
pub fn stayabove_check<R: Rng + ?Sized>(
    law: &IncrementLaw,
    a: f64,
    x: f64,
    n_list: &[usize],
    n_samples: usize,
    rng: &mut R,
) -> Result<Vec<StayAboveRow>> {
    if !(0.0..=a).contains(&x) {
        return Err(invalid(format!("start {x} lies outside [0, {a}]")));
    }
    let sigma = law.sigma();
    let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * sigma);
    if law.tail(a - x) == 0.0 {
        // the first step cannot leave the strip upwards: the event is empty
        return Ok(n_list
            .iter()
            .map(|&n| StayAboveRow { n, scaled_prob: 0.0, stderr: 0.0, limit: 0.0, ratio: None })
            .collect());
    }
    let seed: u64 = rng.random();
    let (probs, errs, asc) = match *law {
        IncrementLaw::DiscretePQ { p } => {
            if a.fract() != 0.0 || x.fract() != 0.0 {
                return Err(invalid("lattice checks need integer a and x"));
            }
            let horizon = n_list.iter().copied().max().unwrap_or(0);
            let surv = lattice_survival(p, x as i64, a as i64, false, horizon);
            let tables = estimate_ladder(law, 0, 1.0, rng);
            (n_list.iter().map(|n| surv[*n]).collect::<Vec<_>>(), vec![0.0; n_list.len()], tables.asc_tail(a - x))
        }
        _ => {
            let counts = mc_survival(law, x, a, false, n_list, n_samples, seed);
            let probs: Vec<f64> = counts.iter().map(|c| *c as f64 / n_samples as f64).collect();
            let errs = probs.iter().map(|p| (p * (1.0 - p) / n_samples as f64).sqrt()).collect();
            let asc = if x == a {
                1.0
            } else {
                estimate_ladder(law, n_samples, default_x_max(law, a), rng).asc_tail(a - x)
            };
            (probs, errs, asc)
        }
    };
    let limit = asc * norm;
    Ok(n_list
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let scale = (n as f64).sqrt();
            let scaled = scale * probs[k];
            StayAboveRow { n, scaled_prob: scaled, stderr: scale * errs[k], limit, ratio: (limit > 0.0).then(|| scaled / limit) }
        })
        .collect())
}

#[derive(Debug, Clone, Copy)]
pub struct FluctuReport {
    pub n: usize,
    /// P_x[S_1 >= 0, ..., S_n >= 0].
    pub prob: f64,
    pub stderr: f64,
    /// V(x) / (σ√(2π)√n).
    pub reference: f64,
    pub ratio: Option<f64>,
}

/// Compares P_x[S_1 >= 0, ..., S_n >= 0] with V(x)/(σ√(2π n)) for x <= n^{1/4}.
pub fn fluctu_check<R: Rng + ?Sized>(law: &IncrementLaw, x: f64, n: usize, n_samples: usize, rng: &mut R) -> Result<FluctuReport> {
    if x < 0.0 || x > (n as f64).powf(0.25) {
        return Err(invalid(format!("start {x} must satisfy 0 <= x <= n^(1/4)")));
    }
    if n == 0 {
        return Ok(FluctuReport { n, prob: 1.0, stderr: 0.0, reference: f64::INFINITY, ratio: None });
    }
    let sigma = law.sigma();
    let seed: u64 = rng.random();
    let (prob, stderr, v) = match *law {
        IncrementLaw::DiscretePQ { p } => {
            if x.fract() != 0.0 {
                return Err(invalid("lattice checks need an integer start"));
            }
            (lattice_survival(p, x as i64, 0, true, n)[n], 0.0, exact_renewal(x))
        }
        _ => {
            let c = mc_survival(law, x, 0.0, true, &[n], n_samples, seed)[0];
            let p = c as f64 / n_samples as f64;
            let v = if x == 0.0 { 1.0 } else { estimate_ladder(law, n_samples, x, rng).renewal_v(x) };
            (p, (p * (1.0 - p) / n_samples as f64).sqrt(), v)
        }
    };
    let reference = v / ((2.0 * std::f64::consts::PI).sqrt() * sigma * (n as f64).sqrt());
    Ok(FluctuReport { n, prob, stderr, reference, ratio: Some(prob / reference) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::build_pq;
    use std::f64::consts::PI;

    #[test]
    fn exact_pq_tables() {
        let law = IncrementLaw::pq(0.3).unwrap();
        let t = estimate_ladder(&law, 0, 5.0, &mut stream(0, 0));
        assert_eq!(t.renewal_u(0.0), 1.0);
        assert_eq!(t.renewal_u(1.5), 2.0);
        assert_eq!(t.renewal_u(3.0), 4.0);
        assert_eq!(t.renewal_v(0.0), 1.0);
        assert_eq!(t.asc_tail(1.0), 1.0);
        assert_eq!(t.asc_tail(1.0 + 1e-12), 0.0);
        assert_eq!(t.sample_count, 0);
    }

    #[test]
    fn pq_theta_value() {
        let law = IncrementLaw::pq(0.3).unwrap();
        let t = estimate_ladder(&law, 0, 5.0, &mut stream(0, 0));
        let want = 1.0 / (2.0 * (0.3 * PI).sqrt());
        for (x, y) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] {
            assert!((theta_a(&t, law.sigma(), 1.0, x, y) - want).abs() < 1e-15);
        }
        assert!((want - 0.515_033).abs() < 1e-6);
        assert_eq!(theta_a(&t, law.sigma(), 1.0, 2.0, 0.0), 0.0);
        assert!(theta_a_strict(&t, law.sigma(), 1.0, 2.0, 0.0).is_err());
    }

    #[test]
    fn gaussian_tables_shape() {
        let law = IncrementLaw::gaussian(1.0).unwrap();
        let t = estimate_ladder(&law, 40_000, 13.0, &mut stream(5, 0));
        assert_eq!(t.asc_tail(0.0), 1.0);
        assert_eq!(t.renewal_u(0.0), 1.0);
        assert_eq!(t.renewal_v(0.0), 1.0);
        for k in 1..t.grid.len() {
            assert!(t.u_values[k] >= t.u_values[k - 1]);
            assert!(t.v_values[k] >= t.v_values[k - 1]);
            assert!(t.asc_tail_values[k] <= t.asc_tail_values[k - 1]);
        }
        for k in 0..t.grid.len() {
            let band = 4.0 * (t.asc_stderr[k].powi(2) + t.desc_stderr[k].powi(2)).sqrt() + 1e-12;
            assert!((t.asc_tail_values[k] - t.desc_tail_values[k]).abs() <= band);
        }
        // E[H_1] = σ/√2 for symmetric continuous laws, so U(x) ~ √2 x / σ
        let slope = (t.renewal_u(12.0) - t.renewal_u(6.0)) / 6.0;
        assert!((slope - 2f64.sqrt()).abs() < 0.05, "{slope}");
        // subadditivity within the bands
        for (x, y) in [(1.0, 2.0), (3.0, 4.0), (0.5, 0.5)] {
            assert!(t.renewal_u(x + y) <= t.renewal_u(x) + t.renewal_u(y) + 0.05);
        }
    }

    #[test]
    fn gaussian_theta_cross_checked_by_direct_simulation() {
        let law = IncrementLaw::gaussian(1.0).unwrap();
        let t = estimate_ladder(&law, 50_000, 13.0, &mut stream(6, 0));
        let theta = theta_a(&t, 1.0, 3.0, 0.0, 0.0);
        // direct: fraction of first strict ascents above 3
        let mut rng = stream(6, 1);
        let trials = 50_000;
        let mut hits = 0;
        for _ in 0..trials {
            if ladder_height(&law, false, &mut rng).is_some_and(|h| h >= 3.0) {
                hits += 1;
            }
        }
        let p = hits as f64 / trials as f64;
        let direct = p * p / (2.0 * PI).sqrt();
        assert!((theta - direct).abs() < 0.2 * direct + 1e-4, "{theta} vs {direct}");
    }

    #[test]
    fn pq_stayabove_empty_event() {
        let law = IncrementLaw::pq(0.3).unwrap();
        let rows = stayabove_check(&law, 1.0, 0.0, &[1, 10, 100], 10, &mut stream(0, 0)).unwrap();
        for r in rows {
            assert_eq!(r.scaled_prob, 0.0);
            assert!(r.ratio.is_none());
        }
    }

    #[test]
    fn pq_stayabove_converges_to_lattice_limit() {
        // the lattice survival from the strip top behaves like p/√(pπ n),
        // i.e. 2p times the ladder-height constant
        let law = IncrementLaw::pq(0.3).unwrap();
        let rows = stayabove_check(&law, 1.0, 1.0, &[1024, 4096], 0, &mut stream(0, 0)).unwrap();
        let r = rows[1].ratio.unwrap();
        assert!((r - 0.6).abs() < 0.01, "{r}");
        // same probability from the kernel module's survival table
        let k = build_pq(0.3, 1, 4096).unwrap();
        assert!((k.survival(1, 4096) * 64.0 - rows[1].scaled_prob).abs() < 1e-10);
    }

    #[test]
    fn gaussian_stayabove_stabilizes() {
        let law = IncrementLaw::gaussian(1.0).unwrap();
        let rows = stayabove_check(&law, 1.0, 1.0, &[64, 256], 200_000, &mut stream(8, 0)).unwrap();
        let drift = (rows[1].scaled_prob / rows[0].scaled_prob - 1.0).abs();
        assert!(drift < 0.1, "{drift}");
        // Sparre Andersen: P_0[S_1 > 0, ..., S_n > 0] √(πn) → 1
        assert!((rows[1].scaled_prob * PI.sqrt() - 1.0).abs() < 0.05);
    }

    #[test]
    fn pq_fluctu_lattice_limit() {
        // √n P_0[S_1 >= 0, ..., S_n >= 0] → 1/√(pπ), twice the reference for the (p,q) walk
        let law = IncrementLaw::pq(0.3).unwrap();
        let rep = fluctu_check(&law, 0.0, 4096, 0, &mut stream(0, 0)).unwrap();
        let r = rep.ratio.unwrap();
        assert!((r - 2.0).abs() < 0.02, "{r}");
        assert!(fluctu_check(&law, 3.0, 16, 0, &mut stream(0, 0)).is_err());
    }

    #[test]
    fn fluctu_empty_conjunction() {
        let law = IncrementLaw::gaussian(1.0).unwrap();
        let rep = fluctu_check(&law, 0.0, 0, 10, &mut stream(0, 0)).unwrap();
        assert_eq!(rep.prob, 1.0);
    }

    #[test]
    fn gaussian_fluctu_ratio() {
        // universal 1/√(πn) survival gives ratio √2 at σ = 1
        let law = IncrementLaw::gaussian(1.0).unwrap();
        let rep = fluctu_check(&law, 0.0, 256, 200_000, &mut stream(9, 0)).unwrap();
        let r = rep.ratio.unwrap();
        assert!((r - 2f64.sqrt()).abs() < 0.05, "{r}");
    }
}
