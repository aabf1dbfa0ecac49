use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use serde_json::json;
use stripwet::experiments::{critical_fit, free_energy_grid, green_tv};
use stripwet::kernel::build;
use stripwet::ladder::{default_x_max, estimate_ladder};
use stripwet::paths::{scaling_test, Marginals, PathSummary};
use stripwet::pq::transfer_matrix_z;
use stripwet::renewal::{forward_chain_tv, partition_asymptotics, AsymptoticKind, Initial, MarkovRenewalProcess, RenewalKernel};
use stripwet::rng::stream;
use stripwet::{
    build_tilted, constants, contact_stats, critical_beta, sample_continuous, sup_quantiles, Boundary, IncrementLaw,
    KernelOptions, LatticeSampler, ReferenceKind, ReturnKernel,
};

use crate::format::{num, round_json};
use crate::{Command, KernelArgs, KindArg, LawArgs, RegimeArg};

/// Parameter problems the library rejects before doing any work.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(Usage(msg.into()))
}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    match e.downcast_ref::<stripwet::Error>() {
        Some(stripwet::Error::InvalidParameter(_) | stripwet::Error::LawSpec(_) | stripwet::Error::NoWindow { .. }) => 2,
        _ => 1,
    }
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

/// One-line summary: stdout when the data went to a file, stderr otherwise.
fn summary(out: &Option<PathBuf>, line: String) {
    if out.is_some() {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
}

fn write_json(out: &Option<PathBuf>, value: serde_json::Value) -> Result<()> {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, &round_json(value))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn options(k: &KernelArgs) -> KernelOptions {
    KernelOptions { n_max: k.nmax, n_nodes: k.nodes, panel_width: k.panel_width, ..Default::default() }
}

fn cache_name(law: &IncrementLaw, a: f64, opts: &KernelOptions) -> String {
    let tag: String = law.to_string().chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '_' }).collect();
    let width = opts.panel_width.map_or("default".to_string(), |w| w.to_string());
    format!("{tag}_a{a}_n{}_m{}_w{width}.swk", opts.n_max_for(law), opts.n_nodes)
}

/// Builds the kernel, going through STRIPWET_CACHE_DIR when it is set.
fn kernel(law: &LawArgs, k: &KernelArgs) -> Result<ReturnKernel> {
    let opts = options(k);
    let Some(dir) = std::env::var_os("STRIPWET_CACHE_DIR") else {
        return Ok(build(&law.law, law.a, &opts)?);
    };
    let path = Path::new(&dir).join(cache_name(&law.law, law.a, &opts));
    if path.exists() {
        match ReturnKernel::read_cache(&path) {
            Ok(kernel) => return Ok(kernel),
            Err(e) => log::warn!("ignoring unreadable cache {}: {e}", path.display()),
        }
    }
    let kernel = build(&law.law, law.a, &opts)?;
    std::fs::create_dir_all(&dir)?;
    kernel.write_cache(&path)?;
    Ok(kernel)
}

fn resolve_beta(kernel: &ReturnKernel, beta: f64, relative: bool) -> Result<f64> {
    Ok(if relative { critical_beta(kernel)? + beta } else { beta })
}

fn parse_grid(spec: &str) -> Result<(f64, f64, usize)> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || usage(format!("beta grid must be lo:hi:n, got `{spec}`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    if n == 0 || !(lo <= hi) {
        return Err(bad());
    }
    Ok((lo, hi, n))
}

fn lattice_p(law: &IncrementLaw) -> Option<f64> {
    law.pq_p()
}

fn pq_strip(law: &LawArgs) -> Result<usize> {
    if law.a.fract() != 0.0 || law.a < 1.0 {
        return Err(usage(format!("the pq walk needs a positive integer strip width, got {}", law.a)));
    }
    Ok(law.a as usize)
}

fn summaries(
    kernel: &ReturnKernel,
    law: &LawArgs,
    beta: f64,
    n: usize,
    boundary: Boundary,
    paths: usize,
    seed: u64,
) -> Result<Vec<PathSummary>> {
    Ok(match lattice_p(&law.law) {
        Some(p) => LatticeSampler::pq(p, pq_strip(law)?, beta, n, boundary)?.summaries(paths, seed),
        None => sample_continuous(kernel, beta, n, boundary, paths, seed)?.iter().map(|s| s.summary()).collect(),
    })
}

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Kernel { law, kernel: k, out } => {
            let kernel = build(&law.law, law.a, &options(&k))?;
            kernel.write_cache(&out)?;
            let worst = (0..kernel.dim()).map(|i| kernel.total_return_mass(i)).fold(0.0, f64::max);
            println!(
                "kernel {} a={} nodes={} n_max={} max return mass={} -> {}",
                law.law,
                num(law.a),
                kernel.dim(),
                kernel.n_max,
                num(worst),
                out.display()
            );
        }

        Command::Ladder { law, samples, x_max, seed, out } => {
            let x_max = x_max.unwrap_or_else(|| default_x_max(&law.law, law.a));
            let tables = estimate_ladder(&law.law, samples, x_max, &mut stream(seed, 0));
            let mut w = sink(&out)?;
            tables.write_csv(&mut w, num)?;
            w.flush()?;
            summary(&out, format!("ladder {} x_max={} samples={} censored={}", law.law, num(x_max), tables.sample_count, tables.censored));
        }

        Command::FreeEnergy { law, kernel: k, beta_grid, relative, log, fit, out } => {
            let (lo, hi, n) = parse_grid(&beta_grid)?;
            if log && !(lo > 0.0) {
                return Err(usage("a geometric grid needs lo > 0"));
            }
            let kernel = kernel(&law, &k)?;
            let beta_c = critical_beta(&kernel)?;
            let offsets: Vec<f64> = (0..n)
                .map(|i| {
                    let s = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
                    if log {
                        lo * (hi / lo).powf(s)
                    } else {
                        lo + (hi - lo) * s
                    }
                })
                .collect();
            let betas: Vec<f64> = offsets.iter().map(|o| if relative { beta_c + o } else { *o }).collect();
            let rows = free_energy_grid(&kernel, &betas)?;
            let mut w = sink(&out)?;
            writeln!(w, "beta,F,delta_residual")?;
            for r in &rows {
                writeln!(w, "{},{},{}", num(r.beta), num(r.value), num(r.residual))?;
            }
            w.flush()?;
            summary(&out, format!("free-energy {} a={} beta_c={} rows={}", law.law, num(law.a), num(beta_c), rows.len()));
            if fit {
                let lo_gap = betas[0] - beta_c;
                let hi_gap = betas[n - 1] - beta_c;
                if !(lo_gap > 0.0) || n < 2 {
                    return Err(usage("--fit needs at least two points with beta > beta_c"));
                }
                let f = critical_fit(&kernel, lo_gap, hi_gap, n)?;
                println!("fit exponent={} amplitude={}", num(f.exponent), num(f.amplitude));
            }
        }

        Command::CriticalPoint { law, kernel: k, out } => {
            let kern = kernel(&law, &k)?;
            let beta_c = critical_beta(&kern)?;
            let refinement_delta = if law.law.is_lattice() {
                0.0
            } else {
                let fine = KernelArgs { nmax: k.nmax, nodes: 2 * k.nodes, panel_width: k.panel_width };
                (critical_beta(&kernel(&law, &fine)?)? - beta_c).abs()
            };
            write_json(
                &out,
                json!({
                    "law": law.law.to_string(),
                    "a": law.a,
                    "beta_c": beta_c,
                    "nodes": kern.dim(),
                    "refinement_delta": refinement_delta,
                }),
            )?;
            summary(&out, format!("critical-point {} a={} beta_c={}", law.law, num(law.a), num(beta_c)));
        }

        Command::Simulate { law, kernel: k, beta, n, paths, boundary, seed, out, dump } => {
            let kern = kernel(&law, &k)?;
            let b = resolve_beta(&kern, beta.beta, beta.relative)?;
            let boundary: Boundary = boundary.into();
            let samples: Vec<Vec<f64>> = match lattice_p(&law.law) {
                Some(p) => LatticeSampler::pq(p, pq_strip(&law)?, b, n, boundary)?
                    .map_paths(paths, seed, |h| h.iter().map(|x| f64::from(*x)).collect()),
                None => sample_continuous(&kern, b, n, boundary, paths, seed)?.into_iter().map(|s| s.heights).collect(),
            };
            let mut w = sink(&out)?;
            writeln!(w, "path,contacts,max_contact,L_A,R_A,final_height,max_height")?;
            let mut contacts = 0usize;
            for (k, h) in samples.iter().enumerate() {
                let s = stripwet::PathSample::new(h.clone(), law.a, boundary).summary();
                contacts += s.contacts;
                writeln!(
                    w,
                    "{k},{},{},{},{},{},{}",
                    s.contacts,
                    s.max_contact,
                    s.l_a,
                    s.r_a,
                    num(s.final_height),
                    num(s.max_height)
                )?;
            }
            w.flush()?;
            if let Some(path) = dump {
                write_dump(&path, n, &samples)?;
            }
            summary(
                &out,
                format!(
                    "simulate {} a={} beta={} N={n} {boundary} paths={paths} mean contact fraction={}",
                    law.law,
                    num(law.a),
                    num(b),
                    num(contacts as f64 / (paths.max(1) * n) as f64)
                ),
            );
        }

        Command::ScalingTest { law, kernel: k, beta, n, paths, boundary, seed, t, nref, regime, out } => {
            let kern = kernel(&law, &k)?;
            let b = resolve_beta(&kern, beta.beta, beta.relative)?;
            let boundary: Boundary = boundary.into();
            match regime {
                RegimeArg::Sub => {
                    let [n] = n[..] else { return Err(usage("the subcritical test takes a single N")) };
                    let sample = match lattice_p(&law.law) {
                        Some(p) => LatticeSampler::pq(p, pq_strip(&law)?, b, n, boundary)?.marginals(paths, seed, &t)?,
                        None => {
                            let s = sample_continuous(&kern, b, n, boundary, paths, seed)?;
                            Marginals::from_paths(&s, law.law.sigma(), &t)
                        }
                    };
                    let kind = match boundary {
                        Boundary::Free => ReferenceKind::Meander,
                        Boundary::Constrained => ReferenceKind::Excursion,
                    };
                    let reference = LatticeSampler::reference(kind, nref)?.marginals(paths, seed.wrapping_add(1), &t)?;
                    let rows = scaling_test(&sample, &reference, seed.wrapping_add(2))?;
                    let worst = rows.iter().map(|r| r.ks).fold(0.0, f64::max);
                    write_json(
                        &out,
                        json!({
                            "regime": "subcritical",
                            "boundary": boundary.to_string(),
                            "N": n,
                            "beta": b,
                            "n_paths": paths,
                            "t": rows.iter().map(|r| r.t).collect::<Vec<_>>(),
                            "ks": rows.iter().map(|r| r.ks).collect::<Vec<_>>(),
                            "ks_raw": rows.iter().map(|r| r.ks_raw).collect::<Vec<_>>(),
                        }),
                    )?;
                    summary(&out, format!("scaling-test subcritical N={n} max KS={}", num(worst)));
                }
                RegimeArg::Super => {
                    let p = lattice_p(&law.law).ok_or_else(|| usage("the supercritical test samples the pq walk"))?;
                    let a = pq_strip(&law)?;
                    let mut quant = Vec::new();
                    for &size in &n {
                        let sups = LatticeSampler::pq(p, a, b, size, Boundary::Free)?.sups(paths, seed);
                        quant.push(sup_quantiles(&sups, &[0.1, 0.5, 0.9]));
                    }
                    let ratio = quant.last().map(|q| q[1]).unwrap_or(f64::NAN) / quant[0][1];
                    write_json(
                        &out,
                        json!({
                            "regime": "supercritical",
                            "N": n,
                            "beta": b,
                            "n_paths": paths,
                            "q10": quant.iter().map(|q| q[0]).collect::<Vec<_>>(),
                            "median": quant.iter().map(|q| q[1]).collect::<Vec<_>>(),
                            "q90": quant.iter().map(|q| q[2]).collect::<Vec<_>>(),
                            "median_ratio": ratio,
                        }),
                    )?;
                    summary(&out, format!("scaling-test supercritical median ratio last/first={}", num(ratio)));
                }
            }
        }

        Command::ContactStats { law, kernel: k, beta, n, l, paths, boundary, seed, out } => {
            let kern = kernel(&law, &k)?;
            let b = resolve_beta(&kern, beta.beta, beta.relative)?;
            let boundary: Boundary = boundary.into();
            let mut w = sink(&out)?;
            writeln!(w, "N,L,p_max_contact,p_left,p_right")?;
            for &size in &n {
                let rows = contact_stats(&summaries(&kern, &law, b, size, boundary, paths, seed)?, &l);
                for r in rows {
                    writeln!(w, "{size},{},{},{},{}", r.l, num(r.p_max_contact), num(r.p_left), num(r.p_right))?;
                }
            }
            w.flush()?;
            summary(&out, format!("contact-stats {} a={} beta={} {boundary} paths={paths}", law.law, num(law.a), num(b)));
        }

        Command::RenewalCheck { law, kernel: k, beta, relative, two_state, j, chains, seed, out } => {
            let (mrp, mu, xi) = if two_state {
                two_state_process()?
            } else {
                let beta = beta.ok_or_else(|| usage("--beta is required unless --two-state is given"))?;
                let kern = kernel(&law, &k)?;
                let t = build_tilted(&kern, resolve_beta(&kern, beta, relative)?)?;
                let xi = t.mean_return.value()?;
                (MarkovRenewalProcess::new(t.kernel, Initial::Entry(t.entry))?, t.mu, xi)
            };
            let rows = forward_chain_tv(&mrp, &mu, xi, &j, chains, seed)?;
            let mut w = sink(&out)?;
            writeln!(w, "j,tv")?;
            for r in &rows {
                writeln!(w, "{},{}", r.j, num(r.tv))?;
            }
            w.flush()?;
            let worst = rows.iter().map(|r| r.tv).fold(0.0, f64::max);
            summary(&out, format!("renewal-check chains={chains} max TV={}", num(worst)));
        }

        Command::Asymptotics { law, kernel: k, beta, kind, n, out } => {
            let kern = kernel(&law, &k)?;
            let b = resolve_beta(&kern, beta.beta, beta.relative)?;
            let kind = match kind {
                KindArg::Localized => AsymptoticKind::Localized,
                KindArg::DelocConstrained => AsymptoticKind::DelocConstrained,
                KindArg::DelocFree => AsymptoticKind::DelocFree,
            };
            let rows = partition_asymptotics(kind, &kern, b, &n)?;
            let tv = if kind == AsymptoticKind::Localized { Some(green_tv(&kern, b, &n)?) } else { None };
            let mut w = sink(&out)?;
            writeln!(w, "N,log_z,normalized,tv")?;
            for (i, r) in rows.iter().enumerate() {
                let tv = tv.as_ref().map_or(String::new(), |t| num(t[i].1));
                writeln!(w, "{},{},{},{tv}", r.n, num(r.log_z), num(r.normalized))?;
            }
            w.flush()?;
            summary(&out, format!("asymptotics {:?} {} a={} beta={} rows={}", kind, law.law, num(law.a), num(b), rows.len()));
        }

        Command::PqExact { p, json: _ } => {
            let c = constants(p)?;
            write_json(&None, serde_json::to_value(c)?)?;
        }

        Command::PqZ { p, a, beta, n, boundary } => {
            let z = transfer_matrix_z(p, a, beta, n, boundary.into(), 0)?;
            println!("{}", num(z.log_z));
        }
    }
    Ok(())
}

/// Two states with gaps in {1, 2, 3}; stationary law and mean gap in closed form.
fn two_state_process() -> Result<(MarkovRenewalProcess, Vec<f64>, f64)> {
    let k2 = [[[0.2, 0.1, 0.1], [0.3, 0.2, 0.1]], [[0.1, 0.3, 0.2], [0.25, 0.05, 0.1]]];
    let kernel = RenewalKernel::from_fn(2, 3, |i, j, n| k2[i][j][n - 1])?;
    let p01: f64 = k2[0][1].iter().sum();
    let p10: f64 = k2[1][0].iter().sum();
    let mu = vec![p10 / (p01 + p10), p01 / (p01 + p10)];
    let xi = (0..2).map(|i| mu[i] * kernel.mean_time(i)).sum();
    Ok((MarkovRenewalProcess::new(kernel, Initial::State(0))?, mu, xi))
}

const DUMP_MAGIC: &[u8; 8] = b"SWPATHS\0";

/// Magic, version, path count and N, then heights row-major, all little-endian.
fn write_dump(path: &Path, n: usize, paths: &[Vec<f64>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    w.write_all(DUMP_MAGIC)?;
    w.write_all(&1u32.to_le_bytes())?;
    w.write_all(&(paths.len() as u64).to_le_bytes())?;
    w.write_all(&(n as u64).to_le_bytes())?;
    for p in paths {
        for h in p {
            w.write_all(&h.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}
