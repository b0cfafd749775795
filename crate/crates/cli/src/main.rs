use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use pwconvex::changepoints::Parity;
use pwconvex::constrained::{fit_constrained, ConstraintSpec, SignConstraint};
use pwconvex::design::{star_discrepancy, DesignDistribution};
use pwconvex::kernels::{estimation_grid, gm_estimate, make_kernel};
use pwconvex::pilot::{first_stage, pilot_fit, PilotConfig, WidthRule};
use pwconvex::sample::{difference_sigma, SampleSet};
use pwconvex::selection::{model_candidates, select_model, DEFAULT_GAMMA1, DEFAULT_GAMMA2};
use pwconvex::sim::{run_experiment, ExperimentConfig};
use pwconvex::spline::{default_lambda_grid, fit_spline, gcv_select, SplineConfig, SplineFit};

#[derive(Parser)]
#[command(name = "pwconvex", version, about = "Smoothing with detected sign changes of a derivative")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Star discrepancy and spacing extremes of a point set (column `t`).
    Discrepancy {
        #[arg(long)]
        input: PathBuf,
        /// `uniform` or `cosine:<a>`.
        #[arg(long, default_value = "uniform")]
        dist: String,
    },
    /// Kernel estimate of a derivative on an interior grid.
    Ksmooth {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        ell: usize,
        #[arg(long)]
        deriv: usize,
        #[arg(long)]
        h: f64,
        #[arg(long, default_value_t = 512)]
        grid: usize,
        #[arg(long, default_value = "uniform")]
        dist: String,
    },
    /// Sign changes of the kernel estimate of `f^(ell)`.
    Changepoints {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        ell: usize,
        #[arg(long)]
        h: f64,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Noise level; estimated from first differences when omitted.
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Unconstrained smoothing spline.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 2)]
        m: usize,
        /// A positive number or `auto` for GCV.
        #[arg(long, default_value = "auto")]
        lambda: String,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Smoothing spline under interval sign constraints (`deriv,lo,hi,sign`).
    Cfit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        constraints: PathBuf,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Two-stage pilot estimator.
    Pilot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        ell: usize,
        #[arg(long)]
        m: Option<usize>,
        /// `sigma:<c>`, `midpoint` or `fixed:<w>`.
        #[arg(long, default_value = "sigma:3")]
        width_rule: String,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// First-stage bandwidth; chosen from the data when omitted.
        #[arg(long)]
        h: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        /// Skip removing the degree-`ell` least-squares polynomial.
        #[arg(long)]
        no_center: bool,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        diag: Option<PathBuf>,
    },
    /// Picks the number of change points by PCIC.
    Select {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        ell: usize,
        #[arg(long, default_value_t = 4)]
        kmax: usize,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_GAMMA1)]
        gamma1: f64,
        #[arg(long, default_value_t = DEFAULT_GAMMA2)]
        gamma2: f64,
    },
    /// Monte Carlo experiment from a `key = value` configuration file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        emit_curves: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Discrepancy { input, dist } => discrepancy(&input, &dist),
        Command::Ksmooth { input, ell, deriv, h, grid, dist } => ksmooth(&input, ell, deriv, h, grid, &dist),
        Command::Changepoints { input, ell, h, alpha, sigma } => changepoints(&input, ell, h, alpha, sigma),
        Command::Fit { input, m, lambda, grid, sigma, output } => fit(&input, m, &lambda, grid, sigma, output),
        Command::Cfit { input, m, lambda, constraints, grid, sigma, output } => {
            cfit(&input, m, lambda, &constraints, grid, sigma, output)
        }
        Command::Pilot { input, ell, m, width_rule, alpha, h, sigma, no_center, output, diag } => {
            let mut cfg = PilotConfig::new(ell);
            if let Some(m) = m {
                cfg.m = m;
            }
            cfg.width_rule = width_rule.parse::<WidthRule>()?;
            cfg.alpha = alpha;
            cfg.first_stage_h = h;
            cfg.sigma = sigma;
            cfg.center = cfg.center && !no_center;
            pilot(&input, &cfg, output, diag)
        }
        Command::Select { input, ell, kmax, m, sigma, gamma1, gamma2 } => {
            let mut cfg = PilotConfig::new(ell);
            if let Some(m) = m {
                cfg.m = m;
            }
            cfg.sigma = sigma;
            select(&input, &cfg, kmax, gamma1, gamma2)
        }
        Command::Simulate { config, out, emit_curves } => simulate(&config, &out, emit_curves),
    }
}

fn parse_dist(s: &str) -> Result<DesignDistribution> {
    match s.split_once(':') {
        None if s == "uniform" => Ok(DesignDistribution::uniform()),
        Some(("cosine", a)) => Ok(DesignDistribution::cosine(a.parse().context("cosine amplitude")?)?),
        _ => bail!("unknown distribution `{s}`; use uniform or cosine:<a>"),
    }
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers.iter().position(|h| h.trim() == name).with_context(|| format!("{} has no `{name}` column", path.display()))
}

fn read_columns(path: &Path, names: &[&str]) -> Result<Vec<Vec<String>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let headers = rdr.headers()?.clone();
    let idx: Vec<usize> = names.iter().map(|n| column(&headers, n, path)).collect::<Result<_>>()?;
    let mut out = vec![Vec::new(); names.len()];
    for rec in rdr.records() {
        let rec = rec?;
        for (k, &i) in idx.iter().enumerate() {
            out[k].push(rec.get(i).unwrap_or("").to_string());
        }
    }
    Ok(out)
}

fn parse_f64(v: &[String], what: &str) -> Result<Vec<f64>> {
    v.iter()
        .enumerate()
        .map(|(i, s)| s.parse::<f64>().with_context(|| format!("row {}: bad {what} `{s}`", i + 1)))
        .collect()
}

fn read_samples(path: &Path, sigma: Option<f64>) -> Result<SampleSet> {
    let cols = read_columns(path, &["t", "y"])?;
    let t = parse_f64(&cols[0], "t")?;
    let y = parse_f64(&cols[1], "y")?;
    Ok(SampleSet::from_unsorted(t.into_iter().zip(y).collect(), sigma)?)
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            Box::new(io::BufWriter::new(File::create(p).with_context(|| format!("cannot create {}", p.display()))?))
        }
        None => Box::new(io::BufWriter::new(io::stdout())),
    })
}

fn discrepancy(input: &Path, dist: &str) -> Result<()> {
    let cols = read_columns(input, &["t"])?;
    let mut t = parse_f64(&cols[0], "t")?;
    t.sort_by(f64::total_cmp);
    let r = star_discrepancy(&t, &parse_dist(dist)?)?;
    println!("d_star,delta_bar,delta_min");
    println!("{},{},{}", r.d_star, r.max_spacing, r.min_spacing);
    Ok(())
}

fn ksmooth(input: &Path, ell: usize, deriv: usize, h: f64, points: usize, dist: &str) -> Result<()> {
    let samples = read_samples(input, None)?;
    let kernel = make_kernel(ell)?;
    let grid = estimation_grid(h, points);
    let est = gm_estimate(&samples, &parse_dist(dist)?, &kernel, h, deriv, &grid)?;
    let mut w = csv::Writer::from_writer(io::stdout());
    w.write_record(["t", "estimate"])?;
    for (t, e) in grid.iter().zip(est) {
        w.write_record([t.to_string(), e.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn changepoints(input: &Path, ell: usize, h: f64, alpha: f64, sigma: Option<f64>) -> Result<()> {
    let samples = read_samples(input, sigma)?;
    let sigma = sigma.unwrap_or_else(|| difference_sigma(samples.responses()));
    let mut cfg = PilotConfig::new(ell);
    cfg.alpha = alpha;
    let (_, report) = first_stage(&samples, &cfg, h, sigma)?;
    let mut w = csv::Writer::from_writer(io::stdout());
    w.write_record(["x_hat", "sign", "sigma_if", "lo", "hi", "cluster", "parity"])?;
    for p in &report.points {
        let (lo, hi) = p.uncertainty.map_or((String::new(), String::new()), |u| (u.lo.to_string(), u.hi.to_string()));
        let parity = report.clusters[p.cluster_id].parity.as_str();
        w.write_record([
            p.x_hat.to_string(),
            p.sign_flip.to_string(),
            p.sigma_if_hat.to_string(),
            lo,
            hi,
            p.cluster_id.to_string(),
            parity.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_fit(fit: &SplineFit, out: Option<&Path>) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink(out)?);
    let mut header = vec!["t".to_string(), "fhat".to_string()];
    header.extend((1..=fit.m).map(|j| format!("d{j}")));
    w.write_record(&header)?;
    let pts: Vec<Vec<f64>> = (1..=fit.m).map(|j| fit.deriv_points(j)).collect();
    for (&t, &v) in fit.grid.iter().zip(&fit.values) {
        let mut row = vec![t.to_string(), v.to_string()];
        for (j, p) in (1..=fit.m).zip(&pts) {
            row.push(pwconvex::numeric::interp_linear(p, fit.deriv(j), t).to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Summary lines go to standard output when the fit has its own file and to
/// standard error otherwise, so the fit CSV on standard output stays clean.
fn summary(out: &Option<PathBuf>, text: &str) {
    if out.is_some() {
        print!("{text}");
    } else {
        eprint!("{text}");
    }
}

fn spline_config(m: usize, grid: Option<usize>, sigma: Option<f64>) -> SplineConfig {
    let mut c = SplineConfig::new(m, 1.0);
    c.grid_size = grid;
    c.sigma = sigma;
    c
}

fn fit(
    input: &Path,
    m: usize,
    lambda: &str,
    grid: Option<usize>,
    sigma: Option<f64>,
    out: Option<PathBuf>,
) -> Result<()> {
    let samples = read_samples(input, sigma)?;
    let base = spline_config(m, grid, sigma);
    if lambda == "auto" {
        let sel = gcv_select(&samples, &base, &default_lambda_grid())?;
        let score = sel.score_curve.iter().find(|(l, _)| *l == sel.lambda_star).map_or(f64::NAN, |p| p.1);
        write_fit(&sel.fit, out.as_deref())?;
        summary(&out, &format!("lambda_star,p_eff,gcv_score\n{},{},{}\n", sel.lambda_star, sel.fit.p_eff, score));
    } else {
        let lam: f64 = lambda.parse().context("--lambda must be a number or `auto`")?;
        write_fit(&fit_spline(&samples, &base.with_lambda(lam))?, out.as_deref())?;
    }
    Ok(())
}

fn read_constraints(path: &Path) -> Result<ConstraintSpec> {
    let cols = read_columns(path, &["deriv", "lo", "hi", "sign"])?;
    let lo = parse_f64(&cols[1], "lo")?;
    let hi = parse_f64(&cols[2], "hi")?;
    let mut rows = Vec::with_capacity(lo.len());
    for i in 0..lo.len() {
        let deriv: usize = cols[0][i].parse().with_context(|| format!("row {}: bad deriv", i + 1))?;
        let sign = match cols[3][i].as_str() {
            "1" | "+1" | "+" => 1,
            "-1" | "-" => -1,
            s => bail!("row {}: sign must be +1 or -1, got `{s}`", i + 1),
        };
        rows.push(SignConstraint::new(deriv, lo[i], hi[i], sign));
    }
    Ok(ConstraintSpec::new(rows)?)
}

fn cfit(
    input: &Path,
    m: usize,
    lambda: f64,
    constraints: &Path,
    grid: Option<usize>,
    sigma: Option<f64>,
    out: Option<PathBuf>,
) -> Result<()> {
    let samples = read_samples(input, sigma)?;
    let spec = read_constraints(constraints)?;
    let (fit, qp) = fit_constrained(&samples, &spline_config(m, grid, sigma).with_lambda(lambda), &spec)?;
    write_fit(&fit, out.as_deref())?;
    summary(
        &out,
        &format!(
            "p_eff,active,iterations,kkt_residual\n{},{},{},{}\n",
            fit.p_eff,
            qp.active_set.len(),
            qp.iterations,
            qp.kkt_residual
        ),
    );
    Ok(())
}

fn pilot(input: &Path, cfg: &PilotConfig, out: Option<PathBuf>, diag: Option<PathBuf>) -> Result<()> {
    let samples = read_samples(input, cfg.sigma)?;
    let r = pilot_fit(&samples, cfg)?;
    write_fit(&r.second_stage, out.as_deref())?;
    if let Some(path) = diag {
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("cannot create {}", path.display()))?;
        w.write_record(["x_hat", "sigma_if", "lo", "hi", "sign", "parity"])?;
        for p in &r.diagnostics.plans {
            w.write_record([
                p.x_hat.to_string(),
                p.sigma_if.to_string(),
                p.lo.to_string(),
                p.hi.to_string(),
                p.sign.to_string(),
                p.parity.as_str().to_string(),
            ])?;
        }
        w.flush()?;
    }
    let d = &r.diagnostics;
    eprintln!(
        "h={} lambda={} sigma={} k_hat={} constrained={}",
        d.h_used,
        d.lambda_used,
        d.sigma_used,
        r.k_hat(),
        d.constrained
    );
    if let Some(reason) = &d.fallback_reason {
        eprintln!("fallback: {reason}");
    }
    for warning in &d.warnings {
        eprintln!("warning: {warning}");
    }
    let even = d.plans.iter().filter(|p| p.parity == Parity::Even).count();
    if even > 0 {
        eprintln!("{even} even cluster(s) constrained as spurious");
    }
    Ok(())
}

fn select(input: &Path, cfg: &PilotConfig, kmax: usize, gamma1: f64, gamma2: f64) -> Result<()> {
    let samples = read_samples(input, cfg.sigma)?;
    let cands = model_candidates(&samples, cfg, kmax)?;
    let sel = select_model(&samples, &cands, gamma1, gamma2)?;
    println!("K,p,sigma_hat2,pcic");
    for row in &sel.table {
        println!("{},{},{},{}", row.k, row.p, row.sigma_hat2, row.pcic);
    }
    let best = &cands[sel.best];
    let locs: Vec<String> = best.locations.iter().map(|x| format!("{x:.4}")).collect();
    println!("winner,K={},locations={}", best.k, locs.join(" "));
    Ok(())
}

fn simulate(config: &Path, out: &Path, curves: Option<PathBuf>) -> Result<()> {
    let text = std::fs::read_to_string(config).with_context(|| format!("cannot read {}", config.display()))?;
    let cfg = ExperimentConfig::from_kv(&text)?;
    let report = run_experiment(&cfg)?;
    std::fs::write(out, report.to_csv()).with_context(|| format!("cannot write {}", out.display()))?;
    if let Some(path) = curves {
        std::fs::write(&path, report.curves_csv()).with_context(|| format!("cannot write {}", path.display()))?;
    }
    for r in &report.records {
        eprintln!("N={} replicates={} failures={} runtime={:.2}s", r.n, r.replicates, r.failures, r.runtime_secs);
    }
    Ok(())
}
