//! `mrs`: simulate, fit, smooth and classify with independent-regime MRS
//! models, detrend price series, cross-check against brute force, and time
//! the filters.

mod io;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use mrs_core::backward::{backward_smooth, pairwise_smoothed};
use mrs_core::baselines::{hamilton_forward, kim_backward, DependentMrsModel};
use mrs_core::bench::{bench_grid, scaling_exponent};
use mrs_core::em::{multistart, Algorithm, FitReport, FixedStart, StartSampler, UniformStartSampler};
use mrs_core::forward::{forward_normalized, forward_simple};
use mrs_core::oracle::{brute_dependent, brute_likelihood};
use mrs_core::pipeline::{daily_average, fit_candidates, rfp_detrend, Candidate, MovingAverage, PriceSeries, RfpConfig};
use mrs_core::simulate::{simulate, simulate_dependent};
use mrs_core::{EmConfig, MrsError, MrsModel};

use crate::io::{create_dir, join, load_model, read_prices, read_series, write_csv, write_text};

const VERIFY_TOL: f64 = 1e-10;

#[derive(Parser)]
#[command(name = "mrs", version, about = "Markov regime-switching models with independent regimes")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a series from a model; writes `t,x,r`.
    Simulate(SimulateArgs),
    /// Fit a model by EM with restarts, or rank candidate price models by BIC.
    Fit(FitArgs),
    /// Smoothed regime probabilities and most likely regime per time.
    Smooth(SmoothArgs),
    /// Label each time as spike or not from the smoothed spike probability.
    Classify(ClassifyArgs),
    /// Daily averaging and robust weekly/long-term detrending of prices.
    Detrend(DetrendArgs),
    /// Compare the filters against brute-force enumeration on a short series.
    Verify(VerifyArgs),
    /// Time forward + backward passes over a grid of series lengths.
    Bench(BenchArgs),
}

/// `none` or a counter cap.
#[derive(Clone, Copy, Debug)]
struct Truncation(Option<usize>);

fn parse_truncation(s: &str) -> std::result::Result<Truncation, String> {
    if s.eq_ignore_ascii_case("none") {
        return Ok(Truncation(None));
    }
    s.parse()
        .map(|d| Truncation(Some(d)))
        .map_err(|_| format!("expected `none` or an integer, got `{s}`"))
}

#[derive(Args)]
struct SimulateArgs {
    /// Model file (`.kv` or `.json`) or `preset:<name>`.
    #[arg(long)]
    model: String,
    /// Last time index; `T + 1` observations are written.
    #[arg(long = "T", alias = "horizon")]
    horizon: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Simulate the dependent-regime model instead.
    #[arg(long)]
    dependent: bool,
    /// Also write the latent AR(1) paths.
    #[arg(long)]
    latents: bool,
    /// Output CSV; stdout if omitted.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Em,
    Emlike,
    DependentEm,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Em => Algorithm::Em,
            AlgorithmArg::Emlike => Algorithm::Emlike,
            AlgorithmArg::DependentEm => Algorithm::DependentEm,
        }
    }
}

#[derive(Args)]
struct EmArgs {
    /// Key-value EM configuration file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    /// Counter cap `D`, or `none` for the exact algorithm.
    #[arg(long, value_parser = parse_truncation)]
    truncation: Option<Truncation>,
    #[arg(long)]
    sigma2_floor: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Keep the initial distribution fixed.
    #[arg(long)]
    freeze_initial: bool,
    /// Disable the variance floor and transition bounds.
    #[arg(long)]
    no_guards: bool,
}

impl EmArgs {
    fn resolve(&self) -> Result<EmConfig> {
        let mut c = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("cannot read config file {}", p.display()))?;
                EmConfig::from_kv(&text).with_context(|| format!("invalid config file {}", p.display()))?
            }
            None => EmConfig::default(),
        };
        if let Some(v) = self.tol {
            c.tol = v;
        }
        if let Some(v) = self.max_iters {
            c.max_iters = v;
        }
        if let Some(v) = self.restarts {
            c.restarts = v;
        }
        if let Some(Truncation(v)) = self.truncation {
            c.truncation = v;
        }
        if let Some(v) = self.sigma2_floor {
            c.sigma2_floor = Some(v);
        }
        if let Some(v) = self.delta {
            c.delta = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        c.freeze_initial |= self.freeze_initial;
        if self.no_guards {
            c.guards = false;
        }
        Ok(c)
    }
}

fn describe_config(c: &EmConfig) -> String {
    format!(
        "tol={} max-iters={} restarts={} truncation={} sigma2-floor={} delta={} seed={} freeze-initial={} guards={}",
        c.tol,
        c.max_iters,
        c.restarts,
        c.truncation.map_or("none".into(), |d| d.to_string()),
        c.sigma2_floor.map_or("auto".into(), |f| f.to_string()),
        c.delta,
        c.seed,
        c.freeze_initial,
        c.guards
    )
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("start").required(true).args(["model", "candidates"])))]
struct FitArgs {
    /// Data CSV with an `x` column.
    #[arg(long)]
    data: PathBuf,
    /// Starting model; with several restarts it also fixes the regime
    /// families, shifts and initial distribution of the random starts.
    #[arg(long)]
    model: Option<String>,
    /// Comma-separated candidate price models (M1-LN, M1-Gamma, M2-LN,
    /// M2-Gamma) or `all`; ranks them by BIC.
    #[arg(long, value_delimiter = ',')]
    candidates: Option<Vec<String>>,
    #[arg(long, value_enum, default_value = "em")]
    algorithm: AlgorithmArg,
    #[command(flatten)]
    em: EmArgs,
    /// Report the sup-norm distance between the fitted parameters and this model.
    #[arg(long)]
    compare: Option<String>,
    /// Directory for params.kv, report.json, trajectory.csv and restarts.csv.
    #[arg(long, short)]
    output_dir: PathBuf,
}

#[derive(Args)]
struct SmoothArgs {
    #[arg(long)]
    model: String,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_parser = parse_truncation, default_value = "none")]
    truncation: Truncation,
    /// Smooth under the dependent-regime model.
    #[arg(long)]
    dependent: bool,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    model: String,
    #[arg(long)]
    data: PathBuf,
    /// 1-based index of the spike regime.
    #[arg(long, default_value_t = 2)]
    spike_regime: usize,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, value_parser = parse_truncation, default_value = "none")]
    truncation: Truncation,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct DetrendArgs {
    /// CSV of `timestamp,price` rows.
    #[arg(long)]
    prices: PathBuf,
    /// Moving-average window in days.
    #[arg(long, default_value_t = 64)]
    window: usize,
    /// Outlier threshold in residual standard deviations.
    #[arg(long, default_value_t = 3.0)]
    threshold: f64,
    /// Repeat outlier replacement until it settles.
    #[arg(long)]
    fixpoint: bool,
    /// Directory for trend.csv and detrended.csv.
    #[arg(long, short)]
    output_dir: PathBuf,
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["data", "horizon"])))]
struct VerifyArgs {
    #[arg(long)]
    model: String,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Simulate `T + 1` observations instead of reading data.
    #[arg(long = "T", alias = "horizon")]
    horizon: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_parser = parse_truncation, default_value = "none")]
    truncation: Truncation,
    /// Check the dependent-regime filter and smoother instead.
    #[arg(long)]
    dependent: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value = "preset:model1")]
    model: String,
    /// Comma-separated last time indices.
    #[arg(long, value_delimiter = ',', default_value = "100,200,400,800")]
    grid: Vec<usize>,
    /// Comma-separated counter caps; `none` is exact.
    #[arg(long, value_delimiter = ',', value_parser = parse_truncation, default_value = "none")]
    truncation: Vec<Truncation>,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

fn fmt_d(d: Option<usize>) -> String {
    d.map_or("none".into(), |d| d.to_string())
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let sim = if a.dependent {
        simulate_dependent(&DependentMrsModel(model), a.horizon, a.seed)?
    } else {
        simulate(&model, a.horizon, a.seed)?
    };
    let mut columns: Vec<String> = vec!["t".into(), "x".into(), "r".into()];
    if a.latents {
        columns.extend((1..=sim.latents.len()).map(|i| format!("b_{i}")));
    }
    let rows: Vec<Vec<String>> = (0..sim.x.len())
        .map(|t| {
            let mut row = vec![t.to_string(), sim.x[t].to_string(), (sim.r[t] + 1).to_string()];
            if a.latents {
                row.extend(sim.latents.iter().map(|l| l[t].to_string()));
            }
            row
        })
        .collect();
    let header = format!(
        "mrs simulate model={} T={} seed={} dependent={}",
        a.model, a.horizon, a.seed, a.dependent
    );
    write_csv(a.output.as_deref(), &header, &columns, &rows)
}

fn write_fit_outputs(dir: &Path, header: &str, report: &FitReport) -> Result<()> {
    let mut params = format!("# {header}\n# loglik = {}\n", report.loglik);
    params.push_str(&format!(
        "# iterations = {}\n# termination = {}\n# approximate = {}\n",
        report.iterations, report.termination_reason, report.approximate
    ));
    params.push_str(&report.theta_hat.to_kv());
    write_text(&join(dir, "params.kv"), &params)?;
    write_text(&join(dir, "report.json"), &serde_json::to_string_pretty(report)?)?;

    let traj: Vec<Vec<String>> = report
        .loglik_trajectory
        .iter()
        .enumerate()
        .map(|(i, ll)| vec![i.to_string(), ll.to_string()])
        .collect();
    write_csv(
        Some(&join(dir, "trajectory.csv")),
        header,
        &["iteration".into(), "loglik".into()],
        &traj,
    )?;

    let restarts: Vec<Vec<String>> = report
        .per_restart
        .iter()
        .enumerate()
        .map(|(i, r)| {
            vec![
                i.to_string(),
                r.seed.to_string(),
                r.loglik.map_or(String::new(), |v| v.to_string()),
                r.iterations.to_string(),
                r.termination_reason.map_or(String::new(), |v| v.to_string()),
                (i == report.best_restart).to_string(),
                r.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    let cols = ["restart", "seed", "loglik", "iterations", "termination", "best", "error"];
    write_csv(
        Some(&join(dir, "restarts.csv")),
        header,
        &cols.map(String::from),
        &restarts,
    )
}

fn cmd_fit(a: &FitArgs) -> Result<()> {
    let config = a.em.resolve()?;
    let data = read_series(&a.data)?;
    create_dir(&a.output_dir)?;
    let algorithm: Algorithm = a.algorithm.into();
    let mut header = format!(
        "mrs fit data={} algorithm={} {}",
        a.data.display(),
        serde_json::to_value(algorithm)?.as_str().unwrap_or_default(),
        describe_config(&config)
    );

    let report = if let Some(names) = &a.candidates {
        let list: Vec<Candidate> = if names.iter().any(|n| n.eq_ignore_ascii_case("all")) {
            Candidate::ALL.to_vec()
        } else {
            names.iter().map(|n| n.parse()).collect::<mrs_core::Result<_>>()?
        };
        header.push_str(&format!(
            " candidates={}",
            list.iter().map(|c| c.name()).collect::<Vec<_>>().join(",")
        ));
        let reports = fit_candidates(&data.x, &list, &config);
        let rows: Vec<Vec<String>> = reports
            .iter()
            .map(|r| {
                vec![
                    r.candidate.to_string(),
                    r.n_params.to_string(),
                    r.fit.as_ref().map_or(String::new(), |f| f.loglik.to_string()),
                    r.bic.map_or(String::new(), |b| b.to_string()),
                    r.error.clone().unwrap_or_default(),
                ]
            })
            .collect();
        let cols = ["model", "n_params", "loglik", "bic", "error"];
        write_csv(
            Some(&join(&a.output_dir, "candidates.csv")),
            &header,
            &cols.map(String::from),
            &rows,
        )?;
        for r in &reports {
            match (&r.bic, &r.error) {
                (Some(b), _) => println!("{}: BIC {b:.3}", r.candidate),
                (None, Some(e)) => println!("{}: failed ({e})", r.candidate),
                _ => {}
            }
        }
        let best = reports
            .into_iter()
            .find_map(|r| r.fit.map(|f| (r.candidate, f)))
            .ok_or(MrsError::AllRestartsFailed(list.len()))?;
        println!("selected {}", best.0);
        best.1
    } else {
        let spec = a.model.as_deref().expect("clap requires --model or --candidates");
        let start = load_model(spec)?;
        header.push_str(&format!(" model={spec}"));
        let sampler: Box<dyn StartSampler> = if config.restarts == 1 {
            Box::new(FixedStart(start))
        } else {
            Box::new(UniformStartSampler {
                template: start,
                template_first: true,
            })
        };
        multistart(&data.x, sampler.as_ref(), &config, algorithm)?
    };

    write_fit_outputs(&a.output_dir, &header, &report)?;
    println!(
        "loglik {} after {} iterations ({}){}",
        report.loglik,
        report.iterations,
        report.termination_reason,
        if report.approximate { ", approximate objective" } else { "" }
    );
    for w in &report.warnings {
        warn!("{w}");
    }
    if let Some(spec) = &a.compare {
        let other = load_model(spec)?;
        if other.num_regimes() != report.theta_hat.num_regimes() || other.num_ar() != report.theta_hat.num_ar() {
            bail!(MrsError::InvalidInput(format!("{spec} has a different regime layout")));
        }
        println!("sup-distance to {spec}: {:e}", report.theta_hat.sup_distance(&other));
    }
    Ok(())
}

/// Smoothed `P(R_t = i | x)` under the chosen model class.
fn smoothed_marginals(model: &MrsModel, x: &[f64], truncation: Option<usize>, dependent: bool) -> Result<Vec<Vec<f64>>> {
    if dependent {
        let d = DependentMrsModel(model.clone());
        let h = hamilton_forward(&d, x)?;
        Ok(kim_backward(model, &h)?.smoothed)
    } else {
        let fwd = forward_normalized(model, x, truncation)?;
        Ok(backward_smooth(model, &fwd)?.regime_marginal)
    }
}

fn check_labels(model: &MrsModel, r: Option<&Vec<usize>>) -> Result<()> {
    if let Some(&top) = r.and_then(|r| r.iter().max()) {
        if top > model.num_regimes() {
            bail!(MrsError::InvalidInput(format!(
                "data has regime label {top} but the model has {} regimes",
                model.num_regimes()
            )));
        }
    }
    Ok(())
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

fn cmd_smooth(a: &SmoothArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let data = read_series(&a.data)?;
    check_labels(&model, data.r.as_ref())?;
    let p = smoothed_marginals(&model, &data.x, a.truncation.0, a.dependent)?;
    let m = model.num_regimes();
    let mut columns = vec![data.label_name.clone()];
    columns.extend((1..=m).map(|i| format!("p_{i}")));
    columns.push("label".into());
    let rows: Vec<Vec<String>> = p
        .iter()
        .enumerate()
        .map(|(t, row)| {
            let mut out = vec![data.labels[t].clone()];
            out.extend(row.iter().map(f64::to_string));
            out.push((argmax(row) + 1).to_string());
            out
        })
        .collect();
    let header = format!(
        "mrs smooth model={} data={} truncation={} dependent={}",
        a.model,
        a.data.display(),
        fmt_d(a.truncation.0),
        a.dependent
    );
    write_csv(a.output.as_deref(), &header, &columns, &rows)
}

fn cmd_classify(a: &ClassifyArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let data = read_series(&a.data)?;
    check_labels(&model, data.r.as_ref())?;
    if a.spike_regime == 0 || a.spike_regime > model.num_regimes() {
        bail!(MrsError::InvalidConfig(format!(
            "--spike-regime must lie in 1..={}",
            model.num_regimes()
        )));
    }
    let p = smoothed_marginals(&model, &data.x, a.truncation.0, false)?;
    let spike: Vec<f64> = p.iter().map(|row| row[a.spike_regime - 1]).collect();
    let labels = mrs_core::pipeline::classify(&spike, a.threshold);
    let rows: Vec<Vec<String>> = (0..spike.len())
        .map(|t| {
            vec![
                data.labels[t].clone(),
                data.x[t].to_string(),
                spike[t].to_string(),
                if labels[t] { "spike" } else { "normal" }.to_string(),
            ]
        })
        .collect();
    let header = format!(
        "mrs classify model={} data={} spike-regime={} threshold={} truncation={}",
        a.model,
        a.data.display(),
        a.spike_regime,
        a.threshold,
        fmt_d(a.truncation.0)
    );
    let cols = [data.label_name.as_str(), "x", "p_spike", "label"];
    write_csv(a.output.as_deref(), &header, &cols.map(String::from), &rows)?;
    info!("{} of {} days classified as spikes", labels.iter().filter(|&&l| l).count(), labels.len());
    Ok(())
}

fn cmd_detrend(a: &DetrendArgs) -> Result<()> {
    let (stamps, prices) = read_prices(&a.prices)?;
    let (series, warnings): (PriceSeries, Vec<String>) = daily_average(&stamps, &prices)?;
    for w in &warnings {
        warn!("{w}");
    }
    let config = RfpConfig {
        smoother: MovingAverage { window: a.window },
        threshold: a.threshold,
        fixpoint: a.fixpoint,
        ..RfpConfig::default()
    };
    let r = rfp_detrend(&series, &config)?;
    create_dir(&a.output_dir)?;
    let header = format!(
        "mrs detrend prices={} window={} threshold={} fixpoint={}",
        a.prices.display(),
        a.window,
        a.threshold,
        a.fixpoint
    );
    let dates: Vec<String> = series.dates.iter().map(|d| d.to_string()).collect();
    let trend: Vec<Vec<String>> = (0..dates.len())
        .map(|t| vec![dates[t].clone(), r.short_term[t].to_string(), r.long_term[t].to_string()])
        .collect();
    write_csv(
        Some(&join(&a.output_dir, "trend.csv")),
        &header,
        &["date", "g", "h"].map(String::from),
        &trend,
    )?;
    let detrended: Vec<Vec<String>> = (0..dates.len())
        .map(|t| vec![dates[t].clone(), r.detrended[t].to_string()])
        .collect();
    write_csv(
        Some(&join(&a.output_dir, "detrended.csv")),
        &header,
        &["date", "x"].map(String::from),
        &detrended,
    )?;
    println!(
        "{} days, {} replaced in the first pass, {} rounds",
        dates.len(),
        r.replaced_first.len(),
        r.rounds
    );
    Ok(())
}

fn max_diff2(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn max_diff3(a: &[Vec<Vec<f64>>], b: &[Vec<Vec<f64>>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| max_diff2(x, y)).fold(0.0, f64::max)
}

fn cmd_verify(a: &VerifyArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let x = match (&a.data, a.horizon) {
        (Some(p), _) => read_series(p)?.x,
        (None, Some(t)) if a.dependent => simulate_dependent(&DependentMrsModel(model.clone()), t, a.seed)?.x,
        (None, Some(t)) => simulate(&model, t, a.seed)?.x,
        (None, None) => unreachable!("clap requires --data or --T"),
    };
    let mut checks: Vec<(&str, f64)> = Vec::new();
    if a.dependent {
        let d = DependentMrsModel(model.clone());
        let brute = brute_dependent(&d, &x)?;
        let h = hamilton_forward(&d, &x)?;
        let k = kim_backward(&model, &h)?;
        checks.push(("loglik", (h.loglik - brute.loglik).abs()));
        checks.push(("smoothed regimes", max_diff2(&k.smoothed, &brute.regime_posterior)));
        checks.push(("pairwise", max_diff3(&k.pairwise, &brute.pairwise)));
    } else {
        let brute = brute_likelihood(&model, &x, a.truncation.0)?;
        let fwd = forward_normalized(&model, &x, a.truncation.0)?;
        let sm = backward_smooth(&model, &fwd)?;
        let pw = pairwise_smoothed(&model, &fwd, &sm)?;
        checks.push(("loglik", (fwd.loglik - brute.loglik).abs()));
        checks.push(("smoothed regimes", max_diff2(&sm.regime_marginal, &brute.regime_posterior)));
        checks.push(("pairwise", max_diff3(&pw, &brute.pairwise)));
        if a.truncation.0.is_none() {
            let simple = forward_simple(&model, &x)?;
            checks.push(("simple forward loglik", (simple.likelihood.ln() - fwd.loglik).abs()));
        }
    }
    let mut failed = Vec::new();
    for (name, err) in &checks {
        let ok = *err <= VERIFY_TOL;
        println!("{name}: max abs error {err:e} {}", if ok { "ok" } else { "MISMATCH" });
        if !ok {
            failed.push(*name);
        }
    }
    if !failed.is_empty() {
        bail!(MrsError::Inconsistent(format!(
            "{} exceed tolerance {VERIFY_TOL:e}",
            failed.join(", ")
        )));
    }
    Ok(())
}

fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let mut rows = Vec::new();
    for &Truncation(d) in &a.truncation {
        let r = bench_grid(&model, &a.grid, d, a.repeats, a.seed)?;
        if r.len() >= 2 {
            eprintln!("D={}: scaling exponent {:.3}", fmt_d(d), scaling_exponent(&r));
        }
        rows.extend(r);
    }
    let header = format!(
        "mrs bench model={} repeats={} seed={} (wall_time is the median in seconds)",
        a.model, a.repeats, a.seed
    );
    let out: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.t.to_string(),
                r.k.to_string(),
                r.m.to_string(),
                fmt_d(r.d),
                r.seconds.to_string(),
                r.peak_states.to_string(),
            ]
        })
        .collect();
    let cols = ["T", "k", "M", "D", "wall_time", "peak_states"];
    write_csv(a.output.as_deref(), &header, &cols.map(String::from), &out)
}

/// 3 for numerical failures, 2 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err
        .chain()
        .filter_map(|e| e.downcast_ref::<MrsError>())
        .any(MrsError::is_numerical);
    if numerical {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Smooth(a) => cmd_smooth(a),
        Command::Classify(a) => cmd_classify(a),
        Command::Detrend(a) => cmd_detrend(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
