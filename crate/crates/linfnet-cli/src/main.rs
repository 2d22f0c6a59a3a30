//! `linfnet` — train, ensemble, attack, certify, and bound 1-Lipschitz
//! l-infinity-distance networks from the command line.
//!
//! Exit codes: 0 success, 1 failed check, 2 config/parameter error,
//! 3 data error, 4 training divergence / numeric failure, 5 checksum
//! mismatch, 6 certification refused. Errors print a single
//! `error[<kind>]: <message>` line to stderr; success paths never write
//! to the error stream.

mod config;
mod data;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use linfnet::data::class_gap;
use linfnet::ensemble::{load_ensemble, save_ensemble, train_ensemble, CombinationMode};
use linfnet::layers::{load_model, AffineHead, Network, NeuronMode};
use linfnet::numcore::{grad_check, Rng, Tensor};
use linfnet::robustness::{
    certified_radius, robust_error_empirical, theorem2_margin_bound, theorem3_bound, AttackConfig,
    Model,
};
use linfnet::training::{train, Loss};
use linfnet::{Error, Result};

use crate::data::DataArgs;

#[derive(Parser)]
#[command(
    name = "linfnet",
    version,
    about = "Certified l-infinity robustness: training, ensembles, attacks, sound bounds"
)]
struct Cli {
    /// Cap worker threads for sample-parallel work (falls back to
    /// LINF_THREADS, then all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network from a key=value config; writes model + metrics.
    Train(TrainArgs),
    /// Full robustness report: clean, PGD-robust, and certified accuracy.
    Eval(EvalArgs),
    /// PGD attack only; reports empirical robust accuracy.
    Attack(AttackArgs),
    /// Sound certification only; reports certified accuracy and radii.
    Certify(CertifyArgs),
    /// Train m bases and save a weighted ensemble manifest.
    Ensemble(EnsembleArgs),
    /// Evaluate a certified-error bound (--theorem 2 or 3).
    Bound(BoundArgs),
    /// Minimum cross-class l-infinity distance of a dataset.
    Gap(GapArgs),
    /// Finite-difference audit of analytic gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Training config file (key = value lines; see --print-defaults).
    #[arg(long, required_unless_present = "print_defaults")]
    config: Option<PathBuf>,
    /// Override a config key, e.g. --set epochs=5 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Print the default config and exit.
    #[arg(long)]
    print_defaults: bool,
}

impl ConfigArgs {
    fn overrides(&self) -> Result<Vec<(String, String)>> {
        let mut pairs = Vec::new();
        for set in &self.sets {
            let (k, v) = set.split_once('=').ok_or_else(|| {
                Error::Config(format!("--set wants KEY=VALUE, got {set:?}"))
            })?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        if let Some(seed) = self.seed {
            pairs.push(("seed".into(), seed.to_string()));
        }
        Ok(pairs)
    }

    fn run_spec(&self) -> Result<config::RunSpec> {
        let path = self.config.as_ref().unwrap();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        config::parse_run_spec(&text, &self.overrides()?)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output model file.
    #[arg(long, default_value = "model.lnfc")]
    out: PathBuf,
    /// Metrics JSONL file (default: <out>.metrics.jsonl).
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Model file (.lnfc) or ensemble manifest.
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Perturbation budget.
    #[arg(long)]
    epsilon: f64,
    #[command(flatten)]
    attack: AttackFlags,
    /// Write the full JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct AttackFlags {
    /// PGD iterations.
    #[arg(long, default_value_t = 20)]
    steps: usize,
    /// PGD step size (default: epsilon / 4).
    #[arg(long)]
    step_size: Option<f64>,
    /// Random restarts per sample.
    #[arg(long, default_value_t = 1)]
    restarts: usize,
    /// Base seed for attack randomness.
    #[arg(long, default_value_t = 0)]
    attack_seed: u64,
}

impl AttackFlags {
    fn config(&self, epsilon: f64) -> AttackConfig {
        let mut cfg = AttackConfig::eval_default(epsilon);
        cfg.steps = self.steps;
        if let Some(s) = self.step_size {
            cfg.step_size = s;
        }
        cfg.restarts = self.restarts;
        cfg.seed = self.attack_seed;
        cfg
    }
}

#[derive(Args)]
struct AttackArgs {
    /// Model file (.lnfc) or ensemble manifest.
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Perturbation budget.
    #[arg(long)]
    epsilon: f64,
    #[command(flatten)]
    attack: AttackFlags,
    /// Write a JSON summary here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct CertifyArgs {
    /// Model file (.lnfc) or ensemble manifest.
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Perturbation budget to certify against.
    #[arg(long)]
    epsilon: f64,
    /// Write a JSON report (including per-sample radii) here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct EnsembleArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Number of base models (seeds config.seed, config.seed+1, ...).
    #[arg(long, default_value_t = 5)]
    members: usize,
    /// Logit averaging (fusion) or softmax averaging (voting).
    #[arg(long, default_value = "fusion")]
    mode: String,
    /// Output manifest path; bases land next to it.
    #[arg(long, default_value = "ensemble.lnfe")]
    out: PathBuf,
}

#[derive(Args)]
struct BoundArgs {
    /// Which bound to evaluate: 2 (margin) or 3 (ensemble radii).
    #[arg(long)]
    theorem: u8,
    /// Perturbation radius r.
    #[arg(long)]
    r: f64,
    /// Confidence parameter t.
    #[arg(long, default_value_t = 0.1)]
    t: f64,
    /// Theorem 2: JSON array of per-sample margins ((logit_y - best other)/2).
    #[arg(long)]
    margins: Option<PathBuf>,
    /// Theorem 2: single model whose margins to compute on the dataset.
    #[arg(long, conflicts_with = "margins")]
    model: Option<PathBuf>,
    /// Theorem 2: delta grid as LO:HI:COUNT.
    #[arg(long, default_value = "0.05:1.0:20")]
    delta_grid: String,
    /// Theorem 2: width W (default: derived from --model).
    #[arg(long)]
    width: Option<usize>,
    /// Theorem 2: depth L (default: derived from --model).
    #[arg(long)]
    depth: Option<usize>,
    /// Theorem 2: capacity constant C.
    #[arg(long, default_value_t = 1e-3)]
    c: f64,
    /// Theorem 3: JSON n x m matrix of base radii in [0,1].
    #[arg(long)]
    rho: Option<PathBuf>,
    /// Theorem 3: ensemble manifest whose radii matrix to compute.
    #[arg(long, conflicts_with = "rho")]
    ensemble: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    /// Write the JSON report here (default: stdout).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct GapArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Scan only the first N samples.
    #[arg(long)]
    limit: Option<usize>,
    /// Write the JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Number of random configurations to audit.
    #[arg(long, default_value_t = 50)]
    count: usize,
    /// Maximum tolerated relative error.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads(cli.threads);
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error[{}]: {e}", error_kind(&e));
            ExitCode::from(error_code(&e))
        }
    }
}

fn init_threads(flag: Option<usize>) {
    let n = flag.or_else(|| {
        std::env::var("LINF_THREADS").ok().and_then(|v| v.parse().ok())
    });
    if let Some(n) = n {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn error_code(e: &Error) -> u8 {
    match e {
        Error::Param(_)
        | Error::Config(_)
        | Error::Shape { .. }
        | Error::Label { .. }
        | Error::UnsupportedMode(_) => 2,
        Error::Io(_)
        | Error::Format(_)
        | Error::Truncated { .. }
        | Error::DataConsistency(_)
        | Error::UndefinedGap => 3,
        Error::Numeric(_) | Error::Training { .. } => 4,
        Error::Checksum { .. } => 5,
        Error::CertificationRefused(_) => 6,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match error_code(e) {
        2 => "config",
        3 => "data",
        4 => "divergence",
        5 => "checksum",
        6 => "certification-refused",
        _ => "error",
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Attack(args) => cmd_attack(args),
        Command::Certify(args) => cmd_certify(args),
        Command::Ensemble(args) => cmd_ensemble(args),
        Command::Bound(args) => cmd_bound(args),
        Command::Gap(args) => cmd_gap(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
    }?;
    Ok(ExitCode::SUCCESS)
}

/// The model argument accepts single networks and ensemble manifests;
/// binary files carry the LNFC magic, manifests are key=value text.
fn load_any_model(path: &Path) -> Result<Model> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(b"LNFC") {
        Ok(Model::from(load_model(path)?))
    } else {
        Ok(Model::from(load_ensemble(path)?))
    }
}

fn write_json(path: &Option<PathBuf>, value: &serde_json::Value) -> Result<()> {
    let text = format!("{:#}\n", value);
    match path {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn pct(v: f64) -> String {
    format!("{:.2}%", 100.0 * v)
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    if args.config.print_defaults {
        print!("{}", config::DEFAULTS);
        return Ok(());
    }
    let spec = args.config.run_spec()?;
    let train_set = spec.train.load()?;
    let val_set = spec.val.load()?;
    println!(
        "training on {} ({} samples, {} features) for {} epochs",
        train_set.name(),
        train_set.len(),
        train_set.dim(),
        spec.cfg.epochs
    );

    let out = train(&spec.cfg, &train_set, &val_set)?;

    let metrics_path = args
        .metrics
        .clone()
        .unwrap_or_else(|| args.out.with_extension("metrics.jsonl"));
    let mut lines = String::new();
    for m in &out.metrics {
        lines.push_str(&serde_json::to_string(m).expect("metrics serialize"));
        lines.push('\n');
    }
    fs::write(&metrics_path, lines)?;

    linfnet::layers::save_model(&out.network, &args.out)?;
    println!("model written to {}", args.out.display());
    if out.ema.is_some() {
        let ema_path = args.out.with_extension("ema.lnfc");
        linfnet::layers::save_model(&out.eval_network()?, &ema_path)?;
        println!("ema shadow model written to {}", ema_path.display());
    }
    println!("metrics written to {}", metrics_path.display());

    if let Some(m) = out.metrics.last() {
        println!(
            "final epoch {}: loss {:.5}, clean {}, certified {} at eps={}",
            m.epoch,
            m.loss,
            pct(m.clean),
            pct(m.certified),
            spec.cfg.epsilon
        );
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let model = load_any_model(&args.model)?;
    let ds = args.data.load()?;
    let attack = args.attack.config(args.epsilon);
    let report = linfnet::robustness::eval_suite(&model, &ds, args.epsilon, &attack)?;

    println!(
        "model: {} ({}ema)  decision rule: {}",
        args.model.display(),
        if report.ema { "" } else { "no " },
        report.decision_rule
    );
    println!("dataset: {}  n={}  epsilon={}", ds.name(), report.n, report.epsilon);
    println!("Standard accuracy   {}", pct(report.clean));
    println!("Robust accuracy     {}", pct(report.robust));
    println!("Certified accuracy  {}", pct(report.certified));
    if let Some(p) = report.clean_prob_avg {
        println!("Prob-avg accuracy   {}  (softmax-averaged inference; never certified)", pct(p));
    }

    if args.report.is_some() {
        let value = serde_json::to_value(&report)
            .map_err(|e| Error::Format(format!("report serialization: {e}")))?;
        write_json(&args.report, &value)?;
        println!("report written to {}", args.report.unwrap().display());
    }
    Ok(())
}

fn cmd_attack(args: AttackArgs) -> Result<()> {
    let model = load_any_model(&args.model)?;
    let ds = args.data.load()?;
    let attack = args.attack.config(args.epsilon);
    let robust_err = robust_error_empirical(&model, &ds, args.epsilon, &attack)?;

    println!(
        "PGD: steps={} step_size={} restarts={} seed={}",
        attack.steps, attack.step_size, attack.restarts, attack.seed
    );
    println!("dataset: {}  n={}  epsilon={}", ds.name(), ds.len(), args.epsilon);
    println!("Robust accuracy     {}", pct(1.0 - robust_err));
    println!("Attack success rate {}", pct(robust_err));

    let value = serde_json::json!({
        "n": ds.len(),
        "epsilon": args.epsilon,
        "steps": attack.steps,
        "step_size": attack.step_size,
        "restarts": attack.restarts,
        "seed": attack.seed,
        "robust_accuracy": 1.0 - robust_err,
        "attack_success_rate": robust_err,
        "caveats": ["attack-based estimate: an upper bound on true robust accuracy"],
    });
    if args.report.is_some() {
        write_json(&args.report, &value)?;
    }
    Ok(())
}

fn cmd_certify(args: CertifyArgs) -> Result<()> {
    let model = load_any_model(&args.model)?;
    let ds = args.data.load()?;
    if args.epsilon < 0.0 || !args.epsilon.is_finite() {
        return Err(Error::Param(format!(
            "epsilon must be finite and non-negative, got {}",
            args.epsilon
        )));
    }

    let mut clean = 0usize;
    let mut certified = 0usize;
    let mut flags = Vec::with_capacity(ds.len());
    // Radius queries are unsupported for voting ensembles; certify_at
    // still applies through the majority rule.
    let want_radii = model.certified_radius(ds.feature_row(0), ds.label(0)).is_ok();
    let mut radii = Vec::new();
    for i in 0..ds.len() {
        let x = ds.feature_row(i);
        let y = ds.label(i);
        if model.predict(x)? == y {
            clean += 1;
        }
        let ok = model.certify_at(x, y, args.epsilon)?;
        flags.push(ok);
        if ok {
            certified += 1;
        }
        if want_radii {
            radii.push(model.certified_radius(x, y)?);
        }
    }

    println!("model: {}  decision rule: {}", args.model.display(), model.decision_rule());
    println!("dataset: {}  n={}  epsilon={}", ds.name(), ds.len(), args.epsilon);
    println!("Standard accuracy   {}", pct(clean as f64 / ds.len() as f64));
    println!("Certified accuracy  {}", pct(certified as f64 / ds.len() as f64));
    if want_radii {
        let mean = radii.iter().sum::<f64>() / radii.len() as f64;
        println!("Mean certified radius {mean:.4}");
    }

    let value = serde_json::json!({
        "n": ds.len(),
        "epsilon": args.epsilon,
        "decision_rule": model.decision_rule(),
        "ema": model.is_ema(),
        "clean": clean as f64 / ds.len() as f64,
        "certified": certified as f64 / ds.len() as f64,
        "certified_at_r": flags,
        "radii": if want_radii { Some(&radii) } else { None },
        "caveats": ["certification is sound but not complete: a failed certificate is not an attack"],
    });
    if args.report.is_some() {
        write_json(&args.report, &value)?;
    }
    Ok(())
}

fn cmd_ensemble(args: EnsembleArgs) -> Result<()> {
    if args.config.print_defaults {
        print!("{}", config::DEFAULTS);
        return Ok(());
    }
    let mode = CombinationMode::parse(&args.mode)?;
    let spec = args.config.run_spec()?;
    let train_set = spec.train.load()?;
    let val_set = spec.val.load()?;
    println!(
        "training {} bases on {} ({} samples) in {} mode",
        args.members,
        train_set.name(),
        train_set.len(),
        mode.describe()
    );

    let out = train_ensemble(&spec.cfg, args.members, spec.cfg.seed, mode, &train_set, &val_set)?;
    for (i, run) in out.runs.iter().enumerate() {
        if let Some(m) = run.metrics.last() {
            println!(
                "base {i}: clean {}, certified {} at eps={}",
                pct(m.clean),
                pct(m.certified),
                spec.cfg.epsilon
            );
        }
    }
    save_ensemble(&out.model, &args.out)?;
    println!("ensemble manifest written to {}", args.out.display());

    // Quick fused sanity numbers on the validation set.
    let model = Model::Ensemble(out.model);
    let mut clean = 0usize;
    for i in 0..val_set.len() {
        if model.predict(val_set.feature_row(i))? == val_set.label(i) {
            clean += 1;
        }
    }
    println!("ensemble clean accuracy {}", pct(clean as f64 / val_set.len() as f64));
    Ok(())
}

fn parse_delta_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::Param(format!(
            "delta grid wants LO:HI:COUNT, got {text:?}"
        )));
    }
    let lo: f64 = parts[0]
        .parse()
        .map_err(|_| Error::Param(format!("delta grid: bad number {:?}", parts[0])))?;
    let hi: f64 = parts[1]
        .parse()
        .map_err(|_| Error::Param(format!("delta grid: bad number {:?}", parts[1])))?;
    let count: usize = parts[2]
        .parse()
        .map_err(|_| Error::Param(format!("delta grid: bad count {:?}", parts[2])))?;
    if count == 0 {
        return Err(Error::Param("delta grid count must be positive".into()));
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..count)
        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
        .collect())
}

fn read_json_file<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{what} {}: {e}", path.display())))
}

fn cmd_bound(args: BoundArgs) -> Result<()> {
    match args.theorem {
        2 => cmd_bound_margin(args),
        3 => cmd_bound_ensemble(args),
        other => Err(Error::Param(format!("theorem must be 2 or 3, got {other}"))),
    }
}

fn cmd_bound_margin(args: BoundArgs) -> Result<()> {
    let grid = parse_delta_grid(&args.delta_grid)?;
    let (margins, width, depth) = match (&args.margins, &args.model) {
        (Some(path), None) => {
            let margins: Vec<f64> = read_json_file(path, "margins file")?;
            let (w, l) = match (args.width, args.depth) {
                (Some(w), Some(l)) => (w, l),
                _ => {
                    return Err(Error::Param(
                        "--margins needs explicit --width and --depth".into(),
                    ))
                }
            };
            (margins, w, l)
        }
        (None, Some(path)) => {
            let net = load_model(path)?;
            let ds = args.data.load()?;
            let model = Model::from(net.clone());
            let mut margins = Vec::with_capacity(ds.len());
            for i in 0..ds.len() {
                // Halved logit gap: the l-infinity budget that provably
                // cannot close the gap (negative when misclassified).
                margins.push(model.margin(ds.feature_row(i), ds.label(i))? / 2.0);
            }
            (
                margins,
                args.width.unwrap_or_else(|| net.width()),
                args.depth.unwrap_or_else(|| net.depth()),
            )
        }
        _ => {
            return Err(Error::Param(
                "theorem 2 needs exactly one margin source: --margins or --model".into(),
            ))
        }
    };

    let report = theorem2_margin_bound(&margins, args.r, &grid, width, depth, args.t, args.c)?;
    println!(
        "margin bound: n={} r={} t={} W={} L={} C={}",
        report.n, report.r, report.t, report.width, report.depth, report.c
    );
    println!("{:>8} {:>10} {:>12} {:>10} {:>10}", "delta", "margin", "complexity", "grid", "total");
    for term in &report.terms {
        println!(
            "{:>8.4} {:>10.4} {:>12.4} {:>10.4} {:>10.4}",
            term.delta, term.margin_term, term.complexity_term, term.grid_term, term.total
        );
    }
    println!(
        "chosen delta {}  (+ t/sqrt(n) = {:.6})  bound {:.6}",
        report.chosen_delta, report.t_term, report.bound
    );
    for caveat in &report.caveats {
        println!("note: {caveat}");
    }

    let value = serde_json::to_value(&report)
        .map_err(|e| Error::Format(format!("report serialization: {e}")))?;
    write_json(&args.report, &value)
}

fn cmd_bound_ensemble(args: BoundArgs) -> Result<()> {
    let rho = match (&args.rho, &args.ensemble) {
        (Some(path), None) => {
            let rows: Vec<Vec<f64>> = read_json_file(path, "radius matrix")?;
            let n = rows.len();
            let m = rows.first().map_or(0, Vec::len);
            if rows.iter().any(|r| r.len() != m) {
                return Err(Error::Format(format!(
                    "radius matrix {}: ragged rows",
                    path.display()
                )));
            }
            Tensor::new(&[n, m], rows.into_iter().flatten().collect())?
        }
        (None, Some(path)) => {
            let ensemble = load_ensemble(path)?;
            let ds = args.data.load()?;
            let mut data = Vec::with_capacity(ds.len() * ensemble.len());
            for i in 0..ds.len() {
                for base in ensemble.bases() {
                    let r = certified_radius(base, ds.feature_row(i), ds.label(i))?;
                    data.push(r.clamp(0.0, 1.0));
                }
            }
            Tensor::new(&[ds.len(), ensemble.len()], data)?
        }
        _ => {
            return Err(Error::Param(
                "theorem 3 needs exactly one radius source: --rho or --ensemble".into(),
            ))
        }
    };

    let report = theorem3_bound(&rho, args.r, args.t)?;
    println!("ensemble bound: n={} m={} r={} t={}", report.n, report.m, report.r, report.t);
    println!("deviation threshold {:.6}", report.threshold);
    println!("certified-error bound {:.6}", report.bound);
    for caveat in &report.caveats {
        println!("note: {caveat}");
    }

    let value = serde_json::to_value(&report)
        .map_err(|e| Error::Format(format!("report serialization: {e}")))?;
    write_json(&args.report, &value)
}

fn cmd_gap(args: GapArgs) -> Result<()> {
    let ds = args.data.load()?;
    let report = class_gap(&ds, args.limit)?;
    match report.raw_units {
        Some(raw) => println!(
            "class gap over first {} samples: {} raw units ({:.6} feature units)",
            report.samples_used, raw, report.feature_units
        ),
        None => println!(
            "class gap over first {} samples: {:.6} feature units",
            report.samples_used, report.feature_units
        ),
    }
    let value = serde_json::to_value(&report)
        .map_err(|e| Error::Format(format!("report serialization: {e}")))?;
    if args.report.is_some() {
        write_json(&args.report, &value)?;
    }
    Ok(())
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<()> {
    if args.count == 0 {
        return Err(Error::Param("count must be positive".into()));
    }
    if !(args.tol > 0.0) || !args.tol.is_finite() {
        return Err(Error::Param(format!(
            "tolerance must be positive and finite, got {}",
            args.tol
        )));
    }
    let mut rng = Rng::new(args.seed);
    let mut worst: f64 = 0.0;
    let mut failures = 0usize;
    for case in 0..args.count {
        let (label, net, d) = gradcheck_net(case, &mut rng)?;
        let x: Vec<f64> = (0..d).map(|_| rng.next_f64()).collect();
        let y = rng.below(net.output_width() as u64) as usize;
        let loss = Loss::CrossEntropy { scale: 1.0 };

        let trace = net.forward_trace(&x)?;
        let (_, upstream) = loss.loss_and_grad(trace.logits(), y)?;
        let (pgrads, _) = net.backward(&trace, &upstream)?;

        let params = net.params_flat();
        let mut probe = net.clone();
        let report = grad_check(
            |p| {
                probe.load_params(p).expect("load params");
                let logits = probe.forward(&x).expect("forward");
                loss.loss_and_grad(&logits, y).expect("loss").0
            },
            &params,
            &pgrads,
            1e-5,
        )?;
        worst = worst.max(report.max_rel_err);
        if report.max_rel_err > args.tol {
            failures += 1;
            println!(
                "case {case} ({label}): rel err {:.3e} at parameter {:?} FAIL",
                report.max_rel_err, report.worst_index
            );
        }
    }
    println!(
        "gradcheck: {} configurations, worst relative error {:.3e}, tolerance {:.1e}",
        args.count, worst, args.tol
    );
    if failures > 0 {
        println!("gradcheck FAILED on {failures} configurations");
        std::process::exit(1);
    }
    println!("gradcheck PASS");
    Ok(())
}

/// Rotates through the unit families the gradient audit covers.
fn gradcheck_net(case: usize, rng: &mut Rng) -> Result<(&'static str, Network, usize)> {
    let d = 2 + rng.below(5) as usize;
    let classes = 2 + rng.below(3) as usize;
    match case % 5 {
        0 => Ok(("pnorm-8 layer", Network::dense(&[d, classes], NeuronMode::PNorm(8.0), None, true, rng)?, d)),
        1 => Ok(("lse-20 layer", Network::dense(&[d, classes], NeuronMode::LogSumExp(20.0), None, true, rng)?, d)),
        2 => {
            let w = d.max(3);
            Ok((
                "residual stack",
                Network::dense(&[w, w, w, classes], NeuronMode::PNorm(8.0), Some(0.5), true, rng)?,
                w,
            ))
        }
        3 => {
            let hidden = 3 + rng.below(4) as usize;
            let net = Network::dense(&[d, hidden], NeuronMode::PNorm(8.0), None, false, rng)?
                .with_head(AffineHead::mlp(&[hidden, 4, classes], rng)?)?;
            Ok(("affine head", net, d))
        }
        _ => Ok((
            "full network",
            Network::dense(&[d, 6, 5, classes], NeuronMode::LogSumExp(20.0), None, true, rng)?,
            d,
        )),
    }
}
