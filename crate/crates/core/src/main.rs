use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use trialgen::dataset::{balance_table, trim_to_support, CovariateSchema, IngestOptions, Source, StudyDataset, TrimMethod};
use trialgen::decision::conclude_values;
use trialgen::estimators::{bootstrap_ci, estimate_rct_diff, Estimate, EstimatorSpec, Method, TargetPopulation};
use trialgen::models::{ModelSpec, PropensityMode};
use trialgen::plot::{contour_csv, contour_points_csv, contour_svg, forest_csv, forest_svg, ForestRow};
use trialgen::report::{build_report, ConclusionRecord, OutcomeReport, RunMetadata};
use trialgen::sensitivity::{analyze, ContourGrid, RobustnessRule, SensitivityOptions, SensitivityReport};
use trialgen::simulation::{run_mc, McEstimator, McOptions, SimConfig};
use trialgen::{Error, Result};

#[derive(Parser)]
#[command(name = "trialgen", version, about = "Generalize a randomized trial's effect to a real-world target population")]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Baseline balance between arms and between trial and target.
    Describe(DescribeArgs),
    /// Restrict the target cohort to the trial's covariate support.
    Trim(TrimArgs),
    /// Trial difference in means and a generalized estimate per outcome.
    Estimate(EstimateArgs),
    /// Omitted-variable sensitivity of both confidence bounds.
    Sensitivity(SensitivityArgs),
    /// Conclusion from bound signs and robustness.
    Conclude(ConcludeArgs),
    /// describe, trim, estimate, sensitivity and conclude in one pass.
    RunAll(RunAllArgs),
    /// Monte Carlo evaluation on synthetic cohorts.
    Simulate(SimulateArgs),
}

#[derive(Args, Clone)]
struct InputArgs {
    /// Trial CSV with covariates, `arm` and outcome columns.
    #[arg(long)]
    rct: PathBuf,
    /// Target-cohort CSV with covariates.
    #[arg(long)]
    rwd: PathBuf,
    /// Covariate schema, one `name:kind` per line.
    #[arg(long)]
    schema: PathBuf,
    /// Drop rows with missing covariates or arm instead of failing.
    #[arg(long)]
    drop_missing: bool,
    #[arg(long, env = "TRIALGEN_OUTDIR", default_value = "trialgen-out")]
    outdir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliMethod {
    Aipsw,
    Ipsw,
    Om,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliTarget {
    Combined,
    TargetOnly,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum CliTrim {
    None,
    SamplingScore,
    CovariateRange,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliRule {
    NoKillerBenchmark,
    AnyNonKillerBenchmark,
}

#[derive(Args, Clone)]
struct EstimatorArgs {
    /// Comma-separated outcome columns; all trial outcomes when omitted.
    #[arg(long, value_delimiter = ',')]
    outcomes: Vec<String>,
    #[arg(long, value_enum, default_value = "aipsw")]
    method: CliMethod,
    /// Hajek-normalize the weighted terms within each arm.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    normalized: bool,
    #[arg(long, value_enum, default_value = "combined")]
    targetpop: CliTarget,
    /// Symmetric quantile truncation of the inverse sampling scores.
    #[arg(long)]
    truncate: Option<f64>,
    /// `observed`, `fitted`, or a known randomization probability.
    #[arg(long, default_value = "observed")]
    propensity: String,
    /// Bootstrap replicates.
    #[arg(long = "B", default_value_t = 1000)]
    replicates: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = "treatment")]
    treatment_label: String,
    #[arg(long, default_value = "comparator")]
    comparator_label: String,
}

#[derive(Args, Clone)]
struct SensitivityFlags {
    /// Bias as a fraction of the estimate for the robustness value.
    #[arg(long, default_value_t = 1.0)]
    q: f64,
    /// Contour resolution as ROWSxCOLS (rho^2 by R2).
    #[arg(long, default_value = "200x200", value_parser = parse_grid)]
    grid: (usize, usize),
    #[arg(long, default_value_t = 0.95)]
    r2_max: f64,
    /// Largest |rho| considered when scaling benchmark correlations.
    #[arg(long, default_value_t = 1.0)]
    rho_max: f64,
    #[arg(long, value_enum, default_value = "no-killer-benchmark")]
    rule: CliRule,
}

#[derive(Args)]
struct DescribeArgs {
    #[command(flatten)]
    input: InputArgs,
}

#[derive(Args)]
struct TrimArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value = "sampling-score")]
    trim: CliTrim,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    est: EstimatorArgs,
    #[arg(long, value_enum, default_value = "none")]
    trim: CliTrim,
}

#[derive(Args)]
struct SensitivityArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    est: EstimatorArgs,
    #[command(flatten)]
    sens: SensitivityFlags,
    #[arg(long, value_enum, default_value = "none")]
    trim: CliTrim,
}

#[derive(Args)]
struct RunAllArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    est: EstimatorArgs,
    #[command(flatten)]
    sens: SensitivityFlags,
    #[arg(long, value_enum, default_value = "sampling-score")]
    trim: CliTrim,
}

#[derive(Args)]
struct ConcludeArgs {
    #[arg(long, allow_hyphen_values = true)]
    lower: f64,
    #[arg(long, allow_hyphen_values = true)]
    upper: f64,
    #[arg(long)]
    lower_robust: bool,
    #[arg(long)]
    upper_robust: bool,
    #[arg(long, default_value = "treatment")]
    treatment_label: String,
    #[arg(long, default_value = "comparator")]
    comparator_label: String,
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML simulation config.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 500)]
    reps: usize,
    /// Overrides the config's seed; one of the two is required.
    #[arg(long)]
    seed: Option<u64>,
    /// Bootstrap replicates per study for coverage; skipped when absent.
    #[arg(long = "B")]
    replicates: Option<usize>,
    #[arg(long, env = "TRIALGEN_OUTDIR", default_value = "trialgen-out")]
    outdir: PathBuf,
}

fn parse_grid(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once(['x', 'X']).ok_or("expected ROWSxCOLS")?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| e.to_string());
    Ok((parse(a)?, parse(b)?))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::InvalidArgument("--threads must be at least 1".into()));
        }
        trialgen::configure_threads(t)?;
    }
    match cli.command {
        Command::Describe(a) => describe(&a),
        Command::Trim(a) => trim(&a),
        Command::Estimate(a) => estimate(&a),
        Command::Sensitivity(a) => sensitivity(&a),
        Command::Conclude(a) => conclude(&a),
        Command::RunAll(a) => run_all(&a),
        Command::Simulate(a) => simulate(&a),
    }
}

struct Cohorts {
    trial: StudyDataset,
    target: StudyDataset,
}

fn load(input: &InputArgs) -> Result<Cohorts> {
    let schema = CovariateSchema::from_file(&input.schema)?;
    let opts = IngestOptions {
        drop_missing: input.drop_missing,
    };
    let trial = StudyDataset::ingest(&input.rct, &schema, Source::Trial, opts)?;
    let target = StudyDataset::ingest(&input.rwd, &schema, Source::Target, opts)?;
    for (name, dropped) in [("trial", trial.dropped_rows), ("target", target.dropped_rows)] {
        if dropped > 0 {
            eprintln!("note: dropped {dropped} incomplete {name} rows");
        }
    }
    Ok(Cohorts {
        trial: trial.dataset,
        target: target.dataset,
    })
}

fn input_meta(meta: RunMetadata, input: &InputArgs) -> RunMetadata {
    meta.with("rct", input.rct.display())
        .with("rwd", input.rwd.display())
        .with("schema", input.schema.display())
        .with("drop_missing", input.drop_missing)
}

fn estimator_meta(meta: RunMetadata, est: &EstimatorArgs, outcomes: &[String]) -> RunMetadata {
    meta.with("method", spec_method(est.method).label())
        .with("normalized", est.normalized)
        .with("targetpop", target_label(est.targetpop))
        .with("truncate", est.truncate.map_or("none".into(), |t| t.to_string()))
        .with("propensity", &est.propensity)
        .with("B", est.replicates)
        .with("outcomes", outcomes.join(","))
}

fn sens_meta(meta: RunMetadata, s: &SensitivityFlags) -> RunMetadata {
    meta.with("q", s.q)
        .with("grid", format!("{}x{}", s.grid.0, s.grid.1))
        .with("r2_max", s.r2_max)
        .with("rho_max", s.rho_max)
        .with("rule", rule_label(s.rule))
}

fn write(outdir: &Path, name: &str, content: &str) -> Result<()> {
    fs::create_dir_all(outdir)?;
    fs::write(outdir.join(name), content)?;
    Ok(())
}

fn spec_method(m: CliMethod) -> Method {
    match m {
        CliMethod::Aipsw => Method::Aipsw,
        CliMethod::Ipsw => Method::Ipsw,
        CliMethod::Om => Method::Om,
    }
}

fn target_label(t: CliTarget) -> &'static str {
    match t {
        CliTarget::Combined => "combined",
        CliTarget::TargetOnly => "target-only",
    }
}

fn rule_label(r: CliRule) -> &'static str {
    match r {
        CliRule::NoKillerBenchmark => "no-killer-benchmark",
        CliRule::AnyNonKillerBenchmark => "any-non-killer-benchmark",
    }
}

fn trim_method(t: CliTrim) -> Option<TrimMethod> {
    match t {
        CliTrim::None => None,
        CliTrim::SamplingScore => Some(TrimMethod::SamplingScore),
        CliTrim::CovariateRange => Some(TrimMethod::CovariateRange),
    }
}

fn trim_label(t: CliTrim) -> &'static str {
    match t {
        CliTrim::None => "none",
        CliTrim::SamplingScore => "sampling-score",
        CliTrim::CovariateRange => "covariate-range",
    }
}

fn estimator_spec(est: &EstimatorArgs, p: usize) -> Result<EstimatorSpec> {
    let propensity = match est.propensity.as_str() {
        "observed" => PropensityMode::ObservedFraction,
        "fitted" => PropensityMode::Fitted(trialgen::models::FeatureSpec::linear(p)),
        other => PropensityMode::KnownConstant(other.parse::<f64>().map_err(|_| {
            Error::InvalidArgument(format!("--propensity `{other}` is not observed, fitted or a number"))
        })?),
    };
    Ok(EstimatorSpec {
        method: spec_method(est.method),
        normalized: est.normalized,
        target: match est.targetpop {
            CliTarget::Combined => TargetPopulation::Combined,
            CliTarget::TargetOnly => TargetPopulation::TargetOnly,
        },
        models: ModelSpec {
            propensity,
            ..ModelSpec::main_effects(p)
        },
        truncate: est.truncate,
    })
}

fn outcomes_of(est: &EstimatorArgs, trial: &StudyDataset) -> Result<Vec<String>> {
    if est.outcomes.is_empty() {
        return Ok(trial.outcome_names().to_vec());
    }
    for o in &est.outcomes {
        if !trial.outcome_names().contains(o) {
            return Err(Error::MissingColumn { column: o.clone() });
        }
    }
    Ok(est.outcomes.clone())
}

fn sensitivity_options(s: &SensitivityFlags) -> SensitivityOptions {
    SensitivityOptions {
        q: s.q,
        resolution: s.grid,
        r2_max: s.r2_max,
        rho_max: s.rho_max,
        rule: match s.rule {
            CliRule::NoKillerBenchmark => RobustnessRule::NoKillerBenchmark,
            CliRule::AnyNonKillerBenchmark => RobustnessRule::AnyNonKillerBenchmark,
        },
    }
}

fn describe(a: &DescribeArgs) -> Result<()> {
    let c = load(&a.input)?;
    let table = balance_table(&c.trial, &c.target)?;
    let meta = input_meta(RunMetadata::new("describe", None), &a.input);
    let text = table.to_text();
    write(&a.input.outdir, "balance.json", &(serde_json::to_string_pretty(&table)? + "\n"))?;
    write(&a.input.outdir, "balance.txt", &with_comments(&meta, &text))?;
    print!("{text}");
    Ok(())
}

fn with_comments(meta: &RunMetadata, body: &str) -> String {
    let mut s: String = meta.lines().iter().map(|l| format!("# {l}\n")).collect();
    s.push_str(body);
    s
}

fn apply_trim(c: Cohorts, t: CliTrim) -> Result<(Cohorts, Option<trialgen::dataset::TrimReport>)> {
    match trim_method(t) {
        None => Ok((c, None)),
        Some(m) => {
            let (target, report) = trim_to_support(&c.trial, &c.target, m)?;
            Ok((Cohorts { trial: c.trial, target }, Some(report)))
        }
    }
}

fn trim(a: &TrimArgs) -> Result<()> {
    if a.trim == CliTrim::None {
        return Err(Error::InvalidArgument("trim needs a method".into()));
    }
    let c = load(&a.input)?;
    let (c, report) = apply_trim(c, a.trim)?;
    let report = report.expect("method given");
    let meta = input_meta(RunMetadata::new("trim", None), &a.input).with("trim", trim_label(a.trim));
    write(&a.input.outdir, "trim_report.json", &(serde_json::to_string_pretty(&report)? + "\n"))?;
    write(&a.input.outdir, "trim_report.txt", &with_comments(&meta, &report.to_text()))?;
    fs::create_dir_all(&a.input.outdir)?;
    c.target.write_csv(fs::File::create(a.input.outdir.join("rwd_trimmed.csv"))?)?;
    print!("{}", report.to_text());
    Ok(())
}

/// Trial difference and generalized estimate for each outcome.
fn estimate_all(c: &Cohorts, spec: &EstimatorSpec, outcomes: &[String], est: &EstimatorArgs) -> Result<Vec<(Estimate, Estimate)>> {
    outcomes
        .iter()
        .map(|o| {
            let rct = estimate_rct_diff(&c.trial, o)?;
            let gen = bootstrap_ci(spec, &c.trial, &c.target, o, est.replicates, est.seed)?;
            Ok((rct, gen))
        })
        .collect()
}

fn forest_rows(estimates: &[(Estimate, Estimate)]) -> Vec<ForestRow> {
    estimates
        .iter()
        .flat_map(|(a, b)| [a, b])
        .map(|e| ForestRow {
            outcome: e.outcome.clone(),
            method: e.method.label().into(),
            point: e.point,
            low: e.ci_low,
            high: e.ci_high,
        })
        .collect()
}

fn write_forest(outdir: &Path, estimates: &[(Estimate, Estimate)], meta: &RunMetadata) -> Result<()> {
    let rows = forest_rows(estimates);
    let lines = meta.lines();
    write(outdir, "forest.svg", &forest_svg(&rows, &lines))?;
    write(outdir, "forest.csv", &forest_csv(&rows, &lines))
}

fn estimate(a: &EstimateArgs) -> Result<()> {
    let c = load(&a.input)?;
    let (c, _) = apply_trim(c, a.trim)?;
    let spec = estimator_spec(&a.est, c.trial.schema().len())?;
    let outcomes = outcomes_of(&a.est, &c.trial)?;
    let meta = estimator_meta(input_meta(RunMetadata::new("estimate", Some(a.est.seed)), &a.input), &a.est, &outcomes)
        .with("trim", trim_label(a.trim));
    let estimates = estimate_all(&c, &spec, &outcomes, &a.est)?;
    let flat: Vec<&Estimate> = estimates.iter().flat_map(|(x, y)| [x, y]).collect();
    write(&a.input.outdir, "estimates.json", &(serde_json::to_string_pretty(&flat)? + "\n"))?;
    write_forest(&a.input.outdir, &estimates, &meta)?;
    for e in flat {
        println!(
            "{}\t{}\t{:.4}\t({:.4}, {:.4})",
            e.outcome,
            e.method.label(),
            e.point,
            e.ci_low,
            e.ci_high
        );
    }
    Ok(())
}

fn contour_stem(outcome: &str, side: &str, single: bool) -> String {
    if single {
        format!("contour_{side}")
    } else {
        format!("contour_{outcome}_{side}")
    }
}

/// Writes one outcome's contour figures and returns the SVG file names.
fn write_contours(
    outdir: &Path,
    outcome: &str,
    grids: &[ContourGrid],
    single: bool,
    meta: &RunMetadata,
) -> Result<Vec<String>> {
    let mut files = Vec::new();
    for (grid, side) in grids.iter().zip(["lower", "upper"]) {
        let stem = contour_stem(outcome, side, single);
        let lines = meta.clone().with("outcome", outcome).with("bound", side).lines();
        let title = format!("{outcome}: bias for the {side} bound {:.3}", grid.target_bound);
        write(outdir, &format!("{stem}.svg"), &contour_svg(grid, &title, &lines))?;
        write(outdir, &format!("{stem}.csv"), &contour_csv(grid, &lines))?;
        write(outdir, &format!("{stem}_points.csv"), &contour_points_csv(grid, &lines))?;
        files.push(format!("{stem}.svg"));
    }
    Ok(files)
}

struct OutcomeSensitivity {
    report: SensitivityReport,
    figures: Vec<String>,
}

fn sensitivity_all(
    c: &Cohorts,
    spec: &EstimatorSpec,
    estimates: &[(Estimate, Estimate)],
    flags: &SensitivityFlags,
    outdir: &Path,
    meta: &RunMetadata,
) -> Result<Vec<OutcomeSensitivity>> {
    let options = sensitivity_options(flags);
    let single = estimates.len() == 1;
    estimates
        .iter()
        .map(|(_, g)| {
            let (report, grids) = analyze(&c.trial, &c.target, &g.outcome, spec, g.point, (g.ci_low, g.ci_high), &options)?;
            let figures = write_contours(outdir, &g.outcome, &grids, single, meta)?;
            Ok(OutcomeSensitivity { report, figures })
        })
        .collect()
}

fn sensitivity(a: &SensitivityArgs) -> Result<()> {
    let c = load(&a.input)?;
    let (c, _) = apply_trim(c, a.trim)?;
    let spec = estimator_spec(&a.est, c.trial.schema().len())?;
    let outcomes = outcomes_of(&a.est, &c.trial)?;
    let meta = sens_meta(
        estimator_meta(input_meta(RunMetadata::new("sensitivity", Some(a.est.seed)), &a.input), &a.est, &outcomes),
        &a.sens,
    )
    .with("trim", trim_label(a.trim));
    let estimates = estimate_all(&c, &spec, &outcomes, &a.est)?;
    let results = sensitivity_all(&c, &spec, &estimates, &a.sens, &a.input.outdir, &meta)?;
    let reports: Vec<&SensitivityReport> = results.iter().map(|r| &r.report).collect();
    write(&a.input.outdir, "sensitivity.json", &(serde_json::to_string_pretty(&reports)? + "\n"))?;
    let text: String = reports.iter().map(|r| r.to_text()).collect();
    write(&a.input.outdir, "sensitivity.txt", &with_comments(&meta, &text))?;
    print!("{text}");
    Ok(())
}

fn conclude(a: &ConcludeArgs) -> Result<()> {
    let c = conclude_values(a.lower, a.lower_robust, a.upper, a.upper_robust)?;
    let record = ConclusionRecord::new(a.lower, a.upper, a.lower_robust, a.upper_robust, &a.treatment_label, &a.comparator_label)?;
    debug_assert_eq!(record.conclusion, c);
    println!("{}: {}.", c.label(), record.narrative);
    if let Some(d) = record.diagnostic {
        eprintln!("note: {d}");
    }
    Ok(())
}

fn run_all(a: &RunAllArgs) -> Result<()> {
    let c = load(&a.input)?;
    let outdir = &a.input.outdir;
    let balance = balance_table(&c.trial, &c.target)?;
    let (c, trim_report) = apply_trim(c, a.trim)?;
    let spec = estimator_spec(&a.est, c.trial.schema().len())?;
    let outcomes = outcomes_of(&a.est, &c.trial)?;
    let meta = sens_meta(
        estimator_meta(input_meta(RunMetadata::new("run-all", Some(a.est.seed)), &a.input), &a.est, &outcomes),
        &a.sens,
    )
    .with("trim", trim_label(a.trim))
    .with("treatment", &a.est.treatment_label)
    .with("comparator", &a.est.comparator_label);

    let estimates = estimate_all(&c, &spec, &outcomes, &a.est)?;
    write_forest(outdir, &estimates, &meta)?;
    let sens = sensitivity_all(&c, &spec, &estimates, &a.sens, outdir, &meta)?;

    let mut outcome_reports = Vec::new();
    for ((rct, gen), s) in estimates.into_iter().zip(sens) {
        let robust = |i: usize| s.report.bounds[i].verdict.robust;
        let conclusion = ConclusionRecord::new(
            gen.ci_low,
            gen.ci_high,
            robust(0),
            robust(1),
            &a.est.treatment_label,
            &a.est.comparator_label,
        )?;
        let mut figures = vec!["forest.svg".to_string()];
        figures.extend(s.figures);
        outcome_reports.push(OutcomeReport {
            outcome: gen.outcome.clone(),
            rct_diff: rct,
            generalized: gen,
            sensitivity: Some(s.report),
            figures,
            conclusion: Some(conclusion),
        });
    }
    let report = build_report(
        meta.clone(),
        &a.est.treatment_label,
        &a.est.comparator_label,
        Some(balance),
        trim_report,
        outcome_reports,
    )?;
    write(outdir, "report.json", &report.to_json()?)?;
    let text = report.to_text();
    write(outdir, "report.txt", &text)?;
    print!("{text}");
    Ok(())
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let cfg = SimConfig::from_file(&a.config)?;
    let seed = a
        .seed
        .or(cfg.seed)
        .ok_or_else(|| Error::InvalidArgument("a seed is required: pass --seed or set `seed` in the config".into()))?;
    let estimators = McEstimator::standard_set(&cfg);
    let result = run_mc(
        &cfg,
        &estimators,
        McOptions {
            reps: a.reps,
            seed,
            bootstrap: a.replicates,
        },
    )?;
    let meta = RunMetadata::new("simulate", Some(seed))
        .with("config", a.config.display())
        .with("reps", a.reps)
        .with("B", a.replicates.map_or("none".into(), |b| b.to_string()));
    write(&a.outdir, "mc_result.json", &result.to_json()?)?;
    let text = result.to_text();
    write(&a.outdir, "mc_result.txt", &with_comments(&meta, &text))?;
    print!("{text}");
    Ok(())
}
