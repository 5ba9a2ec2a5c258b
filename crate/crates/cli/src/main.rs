use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use calaudit::dataset::{FeaturedRow, FeaturedSample, Format, Space, WeightedSample};
use calaudit::harness::{
    check_instance, figure2_distribution, fit_logistic_1d, tight_example, verify_all, TightExample,
    VerifyConfig, DEFAULT_SEED,
};
use calaudit::metrics::*;
use calaudit::proper_loss::{builtin_loss, dual_loss, LossKind, ProperLoss, SmoothnessOverride};
use calaudit::srm::{
    algorithm1, algorithm2, regularized_alpha, HistogramFamily, SrmTrace, TraceStep,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

/// Test-only hook: multiplies every prediction-space smCE inside `verify`.
const SMCE_SCALE_ENV: &str = "CALAUDIT_INJECT_SMCE_SCALE";
const SLACK: f64 = 1e-8;

#[derive(Parser)]
#[command(
    name = "calaudit",
    version,
    about = "Smooth calibration error and post-processing gap audits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute calibration metrics and their bounds on a data file
    Audit(AuditArgs),
    /// Check every implemented inequality on named and random instances
    Verify(VerifyArgs),
    /// Reproduce one of the tight examples C1..C4
    Tight(TightArgs),
    /// Fit logistic regression on the two-uniform mixture and audit it
    Figure2(Figure2Args),
    /// Run local search (1) or regularized selection (2) over histograms
    Srm(SrmArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum SpaceArg {
    Prediction,
    Logit,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Squared,
    #[value(name = "cross_entropy", alias = "cross-entropy")]
    CrossEntropy,
}

#[derive(Clone, Copy, ValueEnum)]
enum WhichArg {
    #[value(name = "C1")]
    C1,
    #[value(name = "C2")]
    C2,
    #[value(name = "C3")]
    C3,
    #[value(name = "C4")]
    C4,
}

#[derive(Args)]
struct Output {
    /// Write the JSON report here instead of standard output
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write plot data as CSV here
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    input: PathBuf,
    /// Defaults to the file extension, then CSV
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[arg(long, value_enum, default_value = "prediction")]
    space: SpaceArg,
    /// Loss for the dual metrics (logit space)
    #[arg(long, value_enum, default_value = "cross_entropy")]
    loss: LossArg,
    /// Smoothness override; must be at least the loss's own
    #[arg(long)]
    lambda: Option<f64>,
    /// Bins for the binned ECE baseline and the reliability diagram
    #[arg(long, default_value_t = 20)]
    bins: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, env = "CALAUDIT_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TightArgs {
    #[arg(long, value_enum, ignore_case = true)]
    which: WhichArg,
    #[arg(long)]
    epsilon: f64,
    /// Points of the loss-landscape CSV
    #[arg(long, default_value_t = 41)]
    n: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct Figure2Args {
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    #[arg(long, env = "CALAUDIT_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    bins: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct SrmArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    algorithm: u8,
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    /// Regularization weight for algorithm 2 (default alpha / b)
    #[arg(long)]
    lambda: Option<f64>,
    /// Starting complexity for algorithm 1
    #[arg(long, default_value_t = 1)]
    s0: usize,
    /// Post-processing budget b of the histogram family
    #[arg(long, default_value_t = 1)]
    budget: usize,
    /// Featured data as `x,label[,weight]`; defaults to a generated mixture sample
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    #[arg(long, env = "CALAUDIT_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

/// A failed internal invariant; exits with code 2.
#[derive(Debug)]
struct InvariantViolation(String);

impl std::fmt::Display for InvariantViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InvariantViolation {}

fn format_of(path: &Path, flag: Option<FormatArg>) -> Format {
    match flag {
        Some(FormatArg::Csv) => Format::Csv,
        Some(FormatArg::Json) => Format::Json,
        None if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json")) =>
        {
            Format::Json
        }
        None => Format::Csv,
    }
}

fn emit(report: &Value, out: Option<&Path>) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    match out {
        Some(path) => {
            fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn write_csv(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    if let Some(path) = path {
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn slack(inequality: &str, value: f64) -> Value {
    json!({ "inequality": inequality, "slack": value, "holds": value >= -SLACK })
}

fn violations(slacks: &[Value]) -> Vec<String> {
    slacks
        .iter()
        .filter(|s| s["holds"] == false)
        .map(|s| {
            format!(
                "{} (slack {})",
                s["inequality"].as_str().unwrap_or_default(),
                s["slack"]
            )
        })
        .collect()
}

fn audit(args: AuditArgs) -> anyhow::Result<()> {
    if args.bins == 0 {
        bail!("--bins must be at least 1");
    }
    let space = match args.space {
        SpaceArg::Prediction => Space::Prediction,
        SpaceArg::Logit => Space::Logit,
    };
    let format = format_of(&args.input, args.format);
    let s = WeightedSample::load(&args.input, format, space)
        .with_context(|| format!("reading {}", args.input.display()))?;

    let (metrics, predictions, slacks, loss_name) = match space {
        Space::Prediction => {
            let smce = smooth_calibration_error(&s)?;
            let pgap = post_processing_gap(&s)?;
            let update = certificate_post_processing(&s, &smce.certificate)?;
            let slacks = vec![
                slack("smCE^2 <= pGap", pgap.value - smce.value * smce.value),
                slack("pGap <= 2 smCE", 2.0 * smce.value - pgap.value),
                slack(
                    "certificate loss drop >= beta^2",
                    update.loss_drop - update.beta * update.beta,
                ),
            ];
            let metrics = json!({ "smce": smce, "pgap": pgap, "certificate_update": {
                "beta": update.beta, "loss_drop": update.loss_drop, "kappa": update.kappa } });
            (metrics, s.clone(), slacks, "squared".to_string())
        }
        Space::Logit => {
            let kind = match args.loss {
                LossArg::Squared => LossKind::Squared,
                LossArg::CrossEntropy => LossKind::CrossEntropy,
            };
            let base = builtin_loss(kind);
            let loss: Arc<dyn ProperLoss> = match args.lambda {
                Some(lambda) => Arc::new(SmoothnessOverride::new(base, lambda)?),
                None => base,
            };
            let lambda = loss.smoothness();
            let dsmce = dual_smooth_calibration_error(&s, &*loss)?;
            let dpgap = dual_post_processing_gap(&s, &*loss)?;
            let f = s.map_values(Space::Prediction, |t| loss.grad_psi(t))?;
            let smce = smooth_calibration_error(&f)?;
            let slacks = vec![
                slack(
                    "dual smCE^2 / 2 <= lambda dual pGap",
                    lambda * dpgap.value - dsmce.value * dsmce.value / 2.0,
                ),
                slack(
                    "lambda dual pGap <= dual smCE",
                    dsmce.value - lambda * dpgap.value,
                ),
                slack(
                    "smCE(grad psi o g) <= dual smCE(g)",
                    dsmce.value - smce.value,
                ),
            ];
            let metrics =
                json!({ "dual_smce": dsmce, "dual_pgap": dpgap, "smce_of_predictions": smce });
            (metrics, f, slacks, loss.name().to_string())
        }
    };
    let bins = reliability_diagram(&predictions, args.bins)?;
    let failed = violations(&slacks);
    let report = json!({
        "input": args.input.display().to_string(),
        "space": space,
        "points": s.len(),
        "loss": loss_name,
        "metrics": metrics,
        "binned_ece": { "bins": args.bins, "value": binned_ece(&predictions, args.bins)? },
        "reliability": bins,
        "slacks": slacks,
        "passed": failed.is_empty(),
    });
    emit(&report, args.output.out.as_deref())?;
    write_csv(args.output.csv.as_deref(), &reliability_csv(&bins))?;
    if !failed.is_empty() {
        return Err(
            InvariantViolation(format!("inequalities violated: {}", failed.join(", "))).into(),
        );
    }
    Ok(())
}

fn verify(args: VerifyArgs) -> anyhow::Result<()> {
    let smce_scale = match std::env::var(SMCE_SCALE_ENV) {
        Ok(raw) => raw
            .parse::<f64>()
            .with_context(|| format!("{SMCE_SCALE_ENV}={raw:?} is not a number"))?,
        Err(_) => 1.0,
    };
    let report = verify_all(&VerifyConfig {
        seed: args.seed,
        trials: args.trials,
        smce_scale,
    });
    emit(&serde_json::to_value(&report)?, args.out.as_deref())?;
    if !report.passed {
        return Err(InvariantViolation(format!(
            "verification failed: {}",
            report.failures().join("; ")
        ))
        .into());
    }
    Ok(())
}

/// Loss after moving every value along the certificate by `β`.
fn landscape(which: TightExample, s: &WeightedSample, n: usize) -> anyhow::Result<String> {
    let n = n.max(2);
    let mut out = String::from("beta,loss\n");
    match which {
        TightExample::C1 | TightExample::C2 => {
            let eta = smooth_calibration_error(s)?.certificate;
            for i in 0..n {
                let beta = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
                let loss = s.expect(|v, y| {
                    let k = (v + beta * eta.eval(v)).clamp(0.0, 1.0);
                    (y - k) * (y - k)
                });
                out.push_str(&format!("{beta},{loss}\n"));
            }
        }
        TightExample::C3 | TightExample::C4 => {
            let loss = builtin_loss(LossKind::CrossEntropy);
            let eta = dual_smooth_calibration_error(s, &*loss)?.certificate;
            let radius = 1.0 / loss.smoothness();
            for i in 0..n {
                let beta = radius * (-1.0 + 2.0 * i as f64 / (n - 1) as f64);
                let value: f64 = s
                    .points()
                    .iter()
                    .map(|p| {
                        p.weight * dual_loss(&*loss, p.label, p.value + beta * eta.eval(p.value))
                    })
                    .sum();
                out.push_str(&format!("{beta},{value}\n"));
            }
        }
    }
    Ok(out)
}

fn tight(args: TightArgs) -> anyhow::Result<()> {
    let which = match args.which {
        WhichArg::C1 => TightExample::C1,
        WhichArg::C2 => TightExample::C2,
        WhichArg::C3 => TightExample::C3,
        WhichArg::C4 => TightExample::C4,
    };
    let instance = tight_example(which, args.epsilon)?;
    let checks = check_instance(&instance, 1.0)?;
    let max_abs_diff = checks
        .iter()
        .map(|c| (c.computed - c.expected).abs())
        .fold(0.0, f64::max);
    let passed = checks.iter().all(|c| c.pass);
    let report = json!({
        "instance": instance.name,
        "which": which,
        "epsilon": instance.epsilon,
        "sample": instance.sample,
        "checks": checks,
        "max_abs_diff": max_abs_diff,
        "passed": passed,
    });
    emit(&report, args.output.out.as_deref())?;
    if args.output.csv.is_some() {
        write_csv(
            args.output.csv.as_deref(),
            &landscape(which, &instance.sample, args.n)?,
        )?;
    }
    if !passed {
        return Err(InvariantViolation(format!(
            "{} does not match its closed form",
            instance.name
        ))
        .into());
    }
    Ok(())
}

fn figure2(args: Figure2Args) -> anyhow::Result<()> {
    if args.bins == 0 {
        bail!("--bins must be at least 1");
    }
    let train = figure2_distribution(args.n, args.seed)?;
    let eval = figure2_distribution(args.n, args.seed.wrapping_add(1))?;
    let fit = fit_logistic_1d(&train)?;
    let predictions = fit.predictions(&eval)?;
    let smce = smooth_calibration_error(&predictions)?;
    let constant = smooth_calibration_error(&eval.predictions(Space::Prediction, |_| 0.5)?)?;
    let bins = reliability_diagram(&predictions, args.bins)?;
    let max_dev = bins.iter().map(|b| b.deviation()).fold(0.0, f64::max);
    let report = json!({
        "n": args.n,
        "seed": args.seed,
        "fit": fit,
        "smce_logistic": smce.value,
        "smce_constant_half": constant.value,
        "binned_ece": binned_ece(&predictions, args.bins)?,
        "max_bin_deviation": max_dev,
        "reliability": bins,
    });
    emit(&report, args.output.out.as_deref())?;
    write_csv(args.output.csv.as_deref(), &reliability_csv(&bins))
}

fn load_featured(path: &Path, format: Format) -> anyhow::Result<FeaturedSample> {
    // a featured file has the same shape as a logit-space sample: unrestricted first column
    let s = WeightedSample::load(path, format, Space::Logit)
        .with_context(|| format!("reading {}", path.display()))?;
    let rows = s
        .points()
        .iter()
        .map(|p| FeaturedRow {
            features: vec![p.value],
            label: p.label,
            weight: p.weight,
        })
        .collect();
    Ok(FeaturedSample::new(rows)?)
}

fn steps_csv(steps: &[TraceStep]) -> String {
    let mut out = String::from("s,opt_s,compared,decision\n");
    for st in steps {
        let decision = serde_json::to_value(st.decision)
            .ok()
            .and_then(|v| v.as_str().map(String::from));
        out.push_str(&format!(
            "{},{},{},{}\n",
            st.s,
            st.opt_s,
            st.compared,
            decision.unwrap_or_default()
        ));
    }
    out
}

fn srm(args: SrmArgs) -> anyhow::Result<()> {
    let d = match &args.input {
        Some(path) => load_featured(path, format_of(path, args.format))?,
        None => figure2_distribution(args.n, args.seed)?,
    };
    let fam = HistogramFamily::new(args.budget);
    let trace: SrmTrace<_> = match args.algorithm {
        1 => algorithm1(&fam, &d, args.s0, args.alpha)?,
        _ => {
            let lambda = args
                .lambda
                .unwrap_or(args.alpha / args.budget.max(1) as f64);
            algorithm2(&fam, &d, lambda)?
        }
    };
    let mut report = serde_json::to_value(&trace)?;
    report["data"] = json!({
        "source": args.input.as_ref().map_or("generated".to_string(), |p| p.display().to_string()),
        "rows": d.len(),
        "seed": args.input.is_none().then_some(args.seed),
    });
    if let Some(lambda) = trace.lambda {
        report["alpha_from_lambda"] = json!(regularized_alpha(lambda, args.budget));
    }
    emit(&report, args.output.out.as_deref())?;
    write_csv(args.output.csv.as_deref(), &steps_csv(&trace.steps))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<InvariantViolation>().is_some() {
        return 2;
    }
    match err.downcast_ref::<calaudit::Error>() {
        Some(calaudit::Error::TheoremViolation(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Audit(a) => audit(a),
        Command::Verify(a) => verify(a),
        Command::Tight(a) => tight(a),
        Command::Figure2(a) => figure2(a),
        Command::Srm(a) => srm(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
