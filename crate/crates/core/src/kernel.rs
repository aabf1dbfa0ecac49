//! Return kernel: law of the first re-entry into the strip after an excursion above it.
//!
//! `f(i, j, n)` is the probability (lattice) or density in y (continuous) of
//! starting at node `i`, staying strictly above `a` at times 1..n-1 and landing
//! at node `j` at time n. Beyond `n_max` the kernel is represented by a
//! power-law tail `tail_coef(i, j) · n^{-3/2}`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::increments::IncrementLaw;
use crate::ladder::{theta_a, LadderTables};
use crate::numerics::{gauss_legendre_on, gauss_legendre_panels, power_tail_sum};

const CACHE_MAGIC: &[u8; 8] = b"SWKERNEL";
const CACHE_VERSION: u32 = 1;

/// Per-step truncation loss above which a warning is logged.
pub const LOSS_WARNING: f64 = 1e-6;

/// Construction knobs. `None` fields fall back to law-dependent defaults.
#[derive(Debug, Clone)]
pub struct KernelOptions {
    pub n_max: Option<usize>,
    /// Strip quadrature nodes (continuous laws only).
    pub n_nodes: usize,
    /// Top of the excursion grid; defaults to a + 8σ√n_max.
    pub truncation_height: Option<f64>,
    /// Panel width of the excursion grid; defaults to σ.
    pub panel_width: Option<f64>,
    /// Gauss–Legendre points per panel.
    pub panel_order: usize,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self { n_max: None, n_nodes: 32, truncation_height: None, panel_width: None, panel_order: 8 }
    }
}

impl KernelOptions {
    pub fn n_max_for(&self, law: &IncrementLaw) -> usize {
        self.n_max.unwrap_or(if law.is_lattice() { 8192 } else { 512 })
    }
}

#[derive(Debug, Clone)]
pub struct ReturnKernel {
    pub law: IncrementLaw,
    pub a: f64,
    pub nodes: Vec<f64>,
    /// Quadrature weights of the strip nodes (all 1 on the lattice).
    pub weights: Vec<f64>,
    pub n_max: usize,
    values: Vec<f64>,
    origin: Vec<f64>,
    tail_coef: Vec<f64>,
    origin_tail_coef: Vec<f64>,
    tail_theta: Option<Vec<f64>>,
    survival: Vec<f64>,
    survival_horizon: usize,
    pub truncation_height: Option<f64>,
    /// Largest relative mass lost at the truncation height in one step.
    pub max_step_loss: f64,
}

/// Builds the kernel for any supported law. Lattice laws need an integer `a`.
pub fn build(law: &IncrementLaw, a: f64, opts: &KernelOptions) -> Result<ReturnKernel> {
    match *law {
        IncrementLaw::DiscretePQ { p } => {
            if a.fract() != 0.0 || a < 1.0 {
                return Err(invalid(format!("lattice strip width must be a positive integer, got {a}")));
            }
            build_pq(p, a as usize, opts.n_max_for(law))
        }
        _ => build_continuous(law, a, opts),
    }
}

/// Exact kernel of the (p,q) walk on the strip {0, ..., a}.
pub fn build_pq(p: f64, a: usize, n_max: usize) -> Result<ReturnKernel> {
    let law = IncrementLaw::pq(p)?;
    if a == 0 {
        return Err(invalid("strip width must be at least 1"));
    }
    if n_max < 2 {
        return Err(invalid("n_max must be at least 2"));
    }
    let q = 1.0 - 2.0 * p;
    let m = a + 1;
    let mut values = vec![0.0; m * m * n_max];
    let idx = |i: usize, j: usize, n: usize| (i * m + j) * n_max + n - 1;
    for i in 0..m {
        values[idx(i, i, 1)] = q;
        if i > 0 {
            values[idx(i, i - 1, 1)] = p;
        }
        if i + 1 < m {
            values[idx(i, i + 1, 1)] = p;
        }
    }
    // excursion above a from the top node; alive[k] is the mass at height a+1+k
    let levels = (12.0 * (2.0 * p * n_max as f64).sqrt()).ceil() as usize + 2;
    let levels = levels.min(n_max);
    let mut alive = vec![0.0; levels];
    let mut next = vec![0.0; levels];
    alive[0] = p;
    let horizon = n_max;
    let mut survival = vec![0.0; (m + 1) * (horizon + 1)];
    for i in 0..=m {
        survival[i * (horizon + 1)] = 1.0;
    }
    survival[a * (horizon + 1) + 1] = p;
    let mut lost = 0.0;
    let mut max_step_loss: f64 = 0.0;
    for n in 2..=n_max {
        next.iter_mut().for_each(|v| *v = 0.0);
        let mut returned = 0.0;
        for k in 0..levels {
            let v = alive[k];
            if v == 0.0 {
                continue;
            }
            if k == 0 {
                returned += p * v;
            } else {
                next[k - 1] += p * v;
            }
            next[k] += q * v;
            if k + 1 < levels {
                next[k + 1] += p * v;
            } else {
                lost += p * v;
                max_step_loss = max_step_loss.max(p);
            }
        }
        values[idx(a, a, n)] = returned;
        std::mem::swap(&mut alive, &mut next);
        survival[a * (horizon + 1) + n] = alive.iter().sum::<f64>() + lost;
    }
    // every walk still above a comes back, and it can only come back at a
    let residual = alive.iter().sum::<f64>() + lost;
    let mut tail_coef = vec![0.0; m * m];
    tail_coef[a * m + a] = residual / power_tail_sum(0.0, n_max, 1.5);
    let origin = values[..m * n_max].to_vec();
    let origin_tail_coef = tail_coef[..m].to_vec();
    // the origin is node 0: duplicate its survival row
    let (head, tail) = survival.split_at_mut(m * (horizon + 1));
    tail.copy_from_slice(&head[..horizon + 1]);
    Ok(ReturnKernel {
        law,
        a: a as f64,
        nodes: (0..m).map(|i| i as f64).collect(),
        weights: vec![1.0; m],
        n_max,
        values,
        origin,
        tail_coef,
        origin_tail_coef,
        tail_theta: None,
        survival,
        survival_horizon: horizon,
        truncation_height: None,
        max_step_loss,
    })
}

/// Banded discretisation of the sub-Markov step operator on (a, T].
struct ExcursionGrid {
    points: Vec<f64>,
    weights: Vec<f64>,
    band_lo: Vec<usize>,
    band_offset: Vec<usize>,
    band: Vec<f64>,
    escape: Vec<f64>,
}

impl ExcursionGrid {
    fn new(law: &IncrementLaw, a: f64, top: f64, width: f64, order: usize) -> Self {
        let panels = ((top - a) / width).ceil().max(1.0) as usize;
        let (points, weights) = gauss_legendre_panels(a, a + panels as f64 * width, order, panels);
        let end = a + panels as f64 * width;
        let radius = law.effective_radius(1e-18);
        let g = points.len();
        let mut band_lo = Vec::with_capacity(g);
        let mut band_offset = Vec::with_capacity(g + 1);
        let mut band = Vec::new();
        band_offset.push(0);
        let mut lo = 0;
        for v in 0..g {
            while points[lo] < points[v] - radius {
                lo += 1;
            }
            band_lo.push(lo);
            let mut u = lo;
            while u < g && points[u] <= points[v] + radius {
                band.push(weights[u] * law.density(points[v] - points[u]));
                u += 1;
            }
            band_offset.push(band.len());
        }
        let escape = points.iter().map(|u| law.tail(end - u)).collect();
        Self { points, weights, band_lo, band_offset, band, escape }
    }

    /// One step of the killed walk; returns the mass escaping above the grid.
    fn step(&self, src: &[f64], dst: &mut [f64]) -> f64 {
        for (v, out) in dst.iter_mut().enumerate() {
            let lo = self.band_lo[v];
            let row = &self.band[self.band_offset[v]..self.band_offset[v + 1]];
            *out = row.iter().zip(&src[lo..lo + row.len()]).map(|(k, s)| k * s).sum();
        }
        src.iter().zip(&self.weights).zip(&self.escape).map(|((s, w), e)| s * w * e).sum()
    }

    fn mass(&self, psi: &[f64]) -> f64 {
        psi.iter().zip(&self.weights).map(|(a, b)| a * b).sum()
    }

    fn inner(&self, x: &[f64], y: &[f64]) -> f64 {
        x.iter().zip(y).zip(&self.weights).map(|((a, b), w)| a * b * w).sum()
    }
}

/// Kernel of a continuous law by Nyström quadrature on the strip and a
/// panel Gauss–Legendre grid on the excursion range.
pub fn build_continuous(law: &IncrementLaw, a: f64, opts: &KernelOptions) -> Result<ReturnKernel> {
    if law.is_lattice() {
        return Err(invalid("build_continuous needs a continuous law"));
    }
    if !(a > 0.0 && a.is_finite()) {
        return Err(invalid(format!("strip width must be positive, got {a}")));
    }
    let n_max = opts.n_max_for(law);
    if n_max < 2 || opts.n_nodes < 1 || opts.panel_order < 1 {
        return Err(invalid("need n_max >= 2, at least one node and one point per panel"));
    }
    let sigma = law.sigma();
    let top = opts.truncation_height.unwrap_or(a + 8.0 * sigma * (n_max as f64).sqrt());
    if !(top > a) {
        return Err(invalid("truncation height must exceed a"));
    }
    let width = opts.panel_width.unwrap_or(sigma);
    let m = opts.n_nodes;
    let (nodes, weights) = gauss_legendre_on(0.0, a, m);
    let grid = ExcursionGrid::new(law, a, top, width, opts.panel_order);
    let g = grid.points.len();

    // starting points: the strip nodes, then the origin
    let starts: Vec<f64> = nodes.iter().copied().chain(std::iter::once(0.0)).collect();
    let s_count = starts.len();
    let half = n_max / 2;
    let horizon = half + 1;
    let mut psi: Vec<Vec<f64>> =
        starts.iter().map(|&x| grid.points.iter().map(|u| law.density(u - x)).collect()).collect();
    let mut scratch = vec![vec![0.0; g]; s_count];
    let mut escaped = vec![0.0; s_count];
    let mut survival = vec![0.0; s_count * (horizon + 1)];
    for s in 0..s_count {
        survival[s * (horizon + 1)] = 1.0;
        survival[s * (horizon + 1) + 1] = law.tail(a - starts[s]);
    }

    // rows 0..m are strip nodes, row m is the origin; columns are strip nodes
    let mut all = vec![0.0; s_count * m * n_max];
    let at = |s: usize, j: usize, n: usize| (s * m + j) * n_max + n - 1;
    for s in 0..s_count {
        for j in 0..m {
            all[at(s, j, 1)] = law.density(nodes[j] - starts[s]);
        }
    }
    let mut max_step_loss: f64 = 0.0;
    for gen in 1..=half {
        // psi holds generation `gen`; compute generation gen + 1
        let losses: Vec<f64> = psi
            .par_iter()
            .zip(scratch.par_iter_mut())
            .map(|(src, dst)| {
                let mass = grid.mass(src);
                let out = grid.step(src, dst);
                if mass > 0.0 { out / mass } else { 0.0 }
            })
            .collect();
        for (s, l) in losses.iter().enumerate() {
            escaped[s] += l * grid.mass(&psi[s]);
            max_step_loss = max_step_loss.max(*l);
        }
        let even = 2 * gen;
        let odd = 2 * gen + 1;
        let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..s_count)
            .into_par_iter()
            .map(|s| {
                let mut e = vec![0.0; m];
                let mut o = vec![0.0; m];
                for j in 0..m {
                    e[j] = grid.inner(&psi[s], &psi[j]);
                    if odd <= n_max {
                        o[j] = 0.5 * (grid.inner(&psi[s], &scratch[j]) + grid.inner(&scratch[s], &psi[j]));
                    }
                }
                (e, o)
            })
            .collect();
        for (s, (e, o)) in rows.into_iter().enumerate() {
            for j in 0..m {
                all[at(s, j, even)] = e[j];
                if odd <= n_max {
                    all[at(s, j, odd)] = o[j];
                }
            }
        }
        std::mem::swap(&mut psi, &mut scratch);
        for s in 0..s_count {
            survival[s * (horizon + 1) + gen + 1] = grid.mass(&psi[s]) + escaped[s];
        }
    }
    if max_step_loss > LOSS_WARNING {
        log::warn!(
            "return kernel: up to {max_step_loss:.3e} of the excursion mass per step escapes above the truncation height {top}"
        );
    }
    let values = all[..m * m * n_max].to_vec();
    let origin = all[m * m * n_max..].to_vec();
    let scale = (n_max as f64).powf(1.5);
    let tail_coef = (0..m * m).map(|k| scale * values[k * n_max + n_max - 1]).collect();
    let origin_tail_coef = (0..m).map(|j| scale * origin[j * n_max + n_max - 1]).collect();
    Ok(ReturnKernel {
        law: *law,
        a,
        nodes,
        weights,
        n_max,
        values,
        origin,
        tail_coef,
        origin_tail_coef,
        tail_theta: None,
        survival,
        survival_horizon: horizon,
        truncation_height: Some(top),
        max_step_loss,
    })
}

impl ReturnKernel {
    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    /// f_{x_i, x_j}(n) for 1 <= n <= n_max; the analytic tail beyond.
    pub fn f(&self, i: usize, j: usize, n: usize) -> f64 {
        assert!(n >= 1, "return times start at 1");
        if n <= self.n_max {
            self.values[(i * self.dim() + j) * self.n_max + n - 1]
        } else {
            self.tail_coef[i * self.dim() + j] * (n as f64).powf(-1.5)
        }
    }

    /// Tabulated row `f(i, j, 1..=n_max)`.
    pub fn series(&self, i: usize, j: usize) -> &[f64] {
        let start = (i * self.dim() + j) * self.n_max;
        &self.values[start..start + self.n_max]
    }

    /// First return from height 0, which is a strip node only on the lattice.
    pub fn origin_series(&self, j: usize) -> &[f64] {
        &self.origin[j * self.n_max..(j + 1) * self.n_max]
    }

    pub fn tail_coef(&self, i: usize, j: usize) -> f64 {
        self.tail_coef[i * self.dim() + j]
    }

    pub fn origin_tail_coef(&self, j: usize) -> f64 {
        self.origin_tail_coef[j]
    }

    /// Θ_a(x_i, x_j) when ladder tables have been attached.
    pub fn tail_theta(&self, i: usize, j: usize) -> Option<f64> {
        self.tail_theta.as_ref().map(|t| t[i * self.dim() + j])
    }

    /// Attaches Θ_a evaluated at the strip nodes.
    pub fn attach_theta(&mut self, tables: &LadderTables) {
        let m = self.dim();
        let sigma = self.law.sigma();
        let mut theta = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                theta[i * m + j] = theta_a(tables, sigma, self.a, self.nodes[i], self.nodes[j]);
            }
        }
        self.tail_theta = Some(theta);
    }

    /// Largest t for which [`Self::survival`] is tabulated.
    pub fn survival_horizon(&self) -> usize {
        self.survival_horizon
    }

    /// P_x[S_1 > a, ..., S_t > a] from node `i`, or from the origin when `i == dim()`.
    pub fn survival(&self, i: usize, t: usize) -> f64 {
        assert!(t <= self.survival_horizon, "survival tabulated up to {}", self.survival_horizon);
        self.survival[i * (self.survival_horizon + 1) + t]
    }

    /// Σ_n ∫ F_{x_i, dy}(n), tail included.
    pub fn total_return_mass(&self, i: usize) -> f64 {
        let tail = power_tail_sum(0.0, self.n_max, 1.5);
        (0..self.dim())
            .map(|j| self.weights[j] * (self.series(i, j).iter().sum::<f64>() + self.tail_coef(i, j) * tail))
            .sum()
    }

    /// n_max^{3/2} f(n_max) / Θ_a on every node pair; `None` where Θ_a = 0
    /// or where the kernel vanishes identically beyond one step.
    pub fn tail_ratio(&self) -> Result<Vec<Option<f64>>> {
        let theta = self
            .tail_theta
            .as_ref()
            .ok_or_else(|| invalid("tail ratios need ladder tables attached to the kernel"))?;
        let m = self.dim();
        let scale = (self.n_max as f64).powf(1.5);
        Ok((0..m * m)
            .map(|k| {
                let (i, j) = (k / m, k % m);
                let series = self.series(i, j);
                let excursions = series[1..].iter().any(|v| *v > 0.0);
                (theta[k] > 0.0 && excursions).then(|| scale * series[self.n_max - 1] / theta[k])
            })
            .collect())
    }

    /// Writes the versioned little-endian cache file.
    pub fn write_cache(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(CACHE_MAGIC)?;
        w.write_u32::<LittleEndian>(CACHE_VERSION)?;
        let (kind, param) = match self.law {
            IncrementLaw::DiscretePQ { p } => (0u32, p),
            IncrementLaw::Gaussian { sigma } => (1, sigma),
            IncrementLaw::UniformSym { halfwidth } => (2, halfwidth),
        };
        w.write_u32::<LittleEndian>(kind)?;
        w.write_f64::<LittleEndian>(param)?;
        w.write_f64::<LittleEndian>(self.a)?;
        w.write_u64::<LittleEndian>(self.dim() as u64)?;
        w.write_u64::<LittleEndian>(self.n_max as u64)?;
        w.write_u64::<LittleEndian>(self.survival_horizon as u64)?;
        w.write_f64::<LittleEndian>(self.truncation_height.unwrap_or(f64::NAN))?;
        w.write_f64::<LittleEndian>(self.max_step_loss)?;
        for block in [
            &self.nodes,
            &self.weights,
            &self.values,
            &self.origin,
            &self.tail_coef,
            &self.origin_tail_coef,
            &self.survival,
        ] {
            for v in block.iter() {
                w.write_f64::<LittleEndian>(*v)?;
            }
        }
        match &self.tail_theta {
            Some(t) => {
                w.write_u8(1)?;
                for v in t {
                    w.write_f64::<LittleEndian>(*v)?;
                }
            }
            None => w.write_u8(0)?,
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_cache(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(Error::Cache("not a return-kernel cache".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != CACHE_VERSION {
            return Err(Error::Cache(format!("unsupported version {version}")));
        }
        let kind = r.read_u32::<LittleEndian>()?;
        let param = r.read_f64::<LittleEndian>()?;
        let law = match kind {
            0 => IncrementLaw::pq(param)?,
            1 => IncrementLaw::gaussian(param)?,
            2 => IncrementLaw::uniform(param)?,
            k => return Err(Error::Cache(format!("unknown law tag {k}"))),
        };
        let a = r.read_f64::<LittleEndian>()?;
        let m = r.read_u64::<LittleEndian>()? as usize;
        let n_max = r.read_u64::<LittleEndian>()? as usize;
        let horizon = r.read_u64::<LittleEndian>()? as usize;
        let top = r.read_f64::<LittleEndian>()?;
        let max_step_loss = r.read_f64::<LittleEndian>()?;
        fn read_vec<R: Read>(r: &mut R, len: usize) -> Result<Vec<f64>> {
            let mut v = vec![0.0; len];
            r.read_f64_into::<LittleEndian>(&mut v)?;
            Ok(v)
        }
        let nodes = read_vec(&mut r, m)?;
        let weights = read_vec(&mut r, m)?;
        let values = read_vec(&mut r, m * m * n_max)?;
        let origin = read_vec(&mut r, m * n_max)?;
        let tail_coef = read_vec(&mut r, m * m)?;
        let origin_tail_coef = read_vec(&mut r, m)?;
        let survival = read_vec(&mut r, (m + 1) * (horizon + 1))?;
        let tail_theta = match r.read_u8()? {
            0 => None,
            1 => Some(read_vec(&mut r, m * m)?),
            t => return Err(Error::Cache(format!("bad theta flag {t}"))),
        };
        Ok(Self {
            law,
            a,
            nodes,
            weights,
            n_max,
            values,
            origin,
            tail_coef,
            origin_tail_coef,
            tail_theta,
            survival,
            survival_horizon: horizon,
            truncation_height: (!top.is_nan()).then_some(top),
            max_step_loss,
        })
    }
}
