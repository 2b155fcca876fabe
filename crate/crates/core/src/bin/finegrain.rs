use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use finegrain::adaptive::{fuse_predictions, plan_for_policy, Policy, RandomPool};
use finegrain::error::{Error, Result};
use finegrain::ingest::{downscale_grid, pair_grids};
use finegrain::io::config::load_synth_config;
use finegrain::io::fdmp::{read_fdmp, write_fdmp, FeatureSet};
use finegrain::io::text::{
    format_fused_meta, format_plan, format_tags, format_truth, parse_fused_meta, parse_plan, parse_tags, parse_truth,
    read_text, FusedMeta, PlanFile, TagRow, Truth,
};
use finegrain::io::{read_fdbk, write_fdbk, QueryGrid, RunConfig};
use finegrain::metrics::{aucc, ece, kendall_tau, macro_f1, p_accurate_certain, EvalReport};
use finegrain::pipeline::{analyze, check_pairing, domain_aucc, eu_au_correlation, evaluate_policy, fit_model};
use finegrain::record::{Domain, FeatureRecord, ProbabilityVector};
use finegrain::synth::{generate_paired_dataset, SynthConfig};
use finegrain::taxonomy::entropy;

#[derive(Parser)]
#[command(name = "finegrain", version, about = "Fine-grained uncertainty taxonomy and adaptive LI/HI querying")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a paired synthetic dataset: li.fdmp, hi.fdmp, truth.txt.
    Synth(SynthArgs),
    /// Fit EU banks, thresholds and resolvability banks on labeled pairs.
    Fit(FitArgs),
    /// Tag LI samples as C / UAR / UAI / UE.
    Taxonomy(TaxonomyArgs),
    /// Select samples for HI re-imaging under a budget.
    Query(QueryArgs),
    /// Replace LI predictions of queried samples by HI predictions.
    Fuse(FuseArgs),
    /// Score a fused prediction against ground truth.
    Eval(EvalArgs),
    /// Evaluate every policy over a grid of budgets.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct RunOpts {
    /// key = value run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl RunOpts {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct SynthArgs {
    /// key = value synthetic-data configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_samples: Option<usize>,
    /// Fold the UE share into C (for calibration data).
    #[arg(long)]
    no_ue: bool,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    li: PathBuf,
    #[arg(long)]
    hi: PathBuf,
    /// Size of the stratified calibration subset (default: all pairs).
    #[arg(long)]
    calib_size: Option<usize>,
    #[arg(long, default_value = "banks.bin")]
    banks: PathBuf,
    #[arg(long, default_value = "thresholds.txt")]
    thresholds: PathBuf,
    #[command(flatten)]
    run: RunOpts,
}

#[derive(Args)]
struct TaxonomyArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    banks: PathBuf,
    /// Also compute oracle tags from paired HI data.
    #[arg(long, requires = "hi")]
    oracle: bool,
    #[arg(long, requires = "oracle")]
    hi: Option<PathBuf>,
    #[arg(long, default_value = "tags.txt")]
    out: PathBuf,
    #[command(flatten)]
    run: RunOpts,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    tags: PathBuf,
    /// Total cost T^A, LI pass included. Unconstrained when absent.
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long, default_value = "finegrained")]
    policy: Policy,
    #[arg(long)]
    random_pool: Option<RandomPool>,
    #[arg(long, default_value = "plan.txt")]
    out: PathBuf,
    #[command(flatten)]
    run: RunOpts,
}

#[derive(Args)]
struct FuseArgs {
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    li: PathBuf,
    #[arg(long)]
    hi: PathBuf,
    /// Model file; when given, certainty and EU are recorded per sample.
    #[arg(long)]
    banks: Option<PathBuf>,
    #[arg(long, default_value = "fused.fdmp")]
    out: PathBuf,
    #[command(flatten)]
    run: RunOpts,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Sidecar written by `fuse` (default: <pred>.meta when present).
    #[arg(long)]
    meta: Option<PathBuf>,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    run: RunOpts,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    li: PathBuf,
    #[arg(long)]
    hi: PathBuf,
    #[arg(long)]
    banks: PathBuf,
    /// Labels; defaults to the labels stored in the LI dump.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// start:stop:step, inclusive.
    #[arg(long, default_value = "2:50:2")]
    budgets: String,
    #[arg(long)]
    random_pool: Option<RandomPool>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    run: RunOpts,
}

fn meta_path(p: &Path) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Reads a dump, downscaling grid dumps when the config asks for it.
fn load_set(path: &Path, cfg: &RunConfig) -> Result<FeatureSet> {
    let set = read_fdmp(path)?;
    if set.is_grid() && cfg.query_grid == QueryGrid::Down && cfg.downscale > 1 {
        let grid = downscale_grid(&set.into_grid()?, cfg.downscale)?;
        return Ok(FeatureSet::from_grid(grid));
    }
    Ok(set)
}

/// Aligns HI records with LI records: block means when the HI grid is
/// finer, position (and coordinate) otherwise.
fn load_pairs(li: &Path, hi: &Path, cfg: &RunConfig) -> Result<(Vec<FeatureRecord>, Vec<FeatureRecord>)> {
    let li = load_set(li, cfg)?;
    let hi = load_set(hi, cfg)?;
    if li.domain != Domain::Li || hi.domain != Domain::Hi {
        return Err(Error::validation("expected an LI dump and an HI dump"));
    }
    if li.is_grid() && hi.is_grid() && (li.height, li.width) != (hi.height, hi.width) {
        if li.height == 0 || hi.height % li.height != 0 {
            return Err(Error::validation("HI grid is not an integer multiple of the LI grid"));
        }
        let scale = (hi.height / li.height) as usize;
        let pairs = pair_grids(&li.into_grid()?, &hi.into_grid()?, scale)?;
        return Ok(pairs.into_iter().unzip());
    }
    check_pairing(&li.records, &hi.records)?;
    Ok((li.records, hi.records))
}

fn write_out(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => load_synth_config(p)?,
        None => SynthConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.n_samples {
        cfg.n_samples = n;
    }
    if a.no_ue {
        cfg = cfg.without_ue();
    }
    let ds = generate_paired_dataset(&cfg)?;
    fs::create_dir_all(&a.out_dir)?;
    let truth = Truth {
        labels: ds.li.iter().map(|r| r.label.expect("synthetic records are labeled")).collect(),
        planted: ds.planted.iter().copied().map(Some).collect(),
    };
    write_fdmp(&FeatureSet::from_records(Domain::Li, ds.li), a.out_dir.join("li.fdmp"))?;
    write_fdmp(&FeatureSet::from_records(Domain::Hi, ds.hi), a.out_dir.join("hi.fdmp"))?;
    write_out(&a.out_dir.join("truth.txt"), &format_truth(&truth))?;
    log::info!("wrote {} pairs to {}", truth.labels.len(), a.out_dir.display());
    Ok(())
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let mut cfg = a.run.load()?;
    if a.calib_size.is_some() {
        cfg.calib_size = a.calib_size;
    }
    let (li, hi) = load_pairs(&a.li, &a.hi, &cfg)?;
    let (model, s) = fit_model(&li, &hi, &cfg.fit_config())?;
    write_fdbk(&model, &a.banks)?;
    let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |x| x.to_string());
    let text = [
        format!("backend = {}", cfg.backend),
        format!("n_calibration = {}", s.n_calibration),
        format!("li.tau_eu = {}", s.li.tau_eu),
        format!("li.tau_au = {}", s.li.tau_au.tau_au),
        format!("li.tau_au_objective = {}", s.li.tau_au.objective),
        format!("hi.tau_eu = {}", s.hi.tau_eu),
        format!("hi.tau_au = {}", s.hi.tau_au.tau_au),
        format!("hi.tau_au_objective = {}", s.hi.tau_au.objective),
        format!("n_uar = {}", s.n_uar),
        format!("n_uai = {}", s.n_uai),
        format!("calibration.f1_uar = {}", opt(s.calibration_agreement.f1_uar)),
        format!("calibration.f1_uai = {}", opt(s.calibration_agreement.f1_uai)),
        format!("calibration.mean_f1 = {}", opt(s.calibration_agreement.mean_f1)),
    ]
    .join("\n")
        + "\n";
    write_out(&a.thresholds, &text)
}

fn cmd_taxonomy(a: TaxonomyArgs) -> Result<()> {
    let cfg = a.run.load()?;
    let model = read_fdbk(&a.banks)?;
    let analyses = match &a.hi {
        Some(hi) => {
            let (li, hi) = load_pairs(&a.input, hi, &cfg)?;
            analyze(&model, &li, Some(&hi))?
        }
        None => analyze(&model, &load_set(&a.input, &cfg)?.records, None)?,
    };
    let rows: Vec<TagRow> = analyses.iter().map(TagRow::from_analysis).collect();
    write_out(&a.out, &format_tags(&rows))
}

fn cmd_query(a: QueryArgs) -> Result<()> {
    let cfg = a.run.load()?;
    let rows = parse_tags(&read_text(&a.tags)?)?;
    if rows.is_empty() {
        return Err(Error::validation("tags file is empty"));
    }
    let candidates: Vec<_> = rows.iter().map(TagRow::candidate).collect();
    let cost = cfg.cost_model()?;
    let budget = a.budget.or(cfg.budget);
    let pool = a.random_pool.unwrap_or(cfg.random_pool);
    let plan = plan_for_policy(a.policy, &candidates, &cost, budget, cfg.seed, pool)?;
    log::info!("{} of {} samples queried, T^A = {}", plan.selected.len(), plan.n_total, plan.realized_cost);
    write_out(&a.out, &format_plan(&PlanFile { policy: a.policy, cost, plan }))
}

fn cmd_fuse(a: FuseArgs) -> Result<()> {
    let cfg = a.run.load()?;
    let plan = parse_plan(&read_text(&a.plan)?)?.plan;
    let (li, hi) = load_pairs(&a.li, &a.hi, &cfg)?;
    let li_probs: Vec<ProbabilityVector> = li.iter().map(|r| r.probs.clone()).collect();
    let hi_probs: Vec<Option<ProbabilityVector>> = hi.iter().map(|r| Some(r.probs.clone())).collect();
    let fused = fuse_predictions(&li_probs, &hi_probs, &plan)?;

    let statics = match &a.banks {
        Some(p) => {
            let model = read_fdbk(p)?;
            let mut v = Vec::with_capacity(li.len());
            for (i, prov) in fused.provenance.iter().enumerate() {
                let label = match prov {
                    Domain::Li => model.li.static_label(&li[i])?,
                    Domain::Hi => model.hi.static_label(&hi[i])?,
                };
                v.push(Some(label));
            }
            v
        }
        None => vec![None; li.len()],
    };
    let meta: Vec<FusedMeta> = fused
        .provenance
        .iter()
        .zip(&statics)
        .map(|(&provenance, s)| FusedMeta {
            provenance,
            certain: s.map(|l| l.is_certain()),
            eu: s.map(|l| l.eu_score),
        })
        .collect();

    let records: Vec<FeatureRecord> = li
        .into_iter()
        .zip(fused.probs)
        .map(|(mut r, p)| {
            r.probs = p;
            r
        })
        .collect();
    let set = FeatureSet::from_records(Domain::Li, records);
    write_fdmp(&set, &a.out)?;
    write_out(&meta_path(&a.out), &format_fused_meta(&meta))
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let cfg = a.run.load()?;
    let pred = read_fdmp(&a.pred)?;
    let truth = parse_truth(&read_text(&a.truth)?)?.labels;
    if truth.len() != pred.records.len() {
        return Err(Error::validation(format!(
            "{} predictions but {} truth labels",
            pred.records.len(),
            truth.len()
        )));
    }
    let meta_file = a.meta.clone().or_else(|| Some(meta_path(&a.pred)).filter(|p| p.exists()));
    let meta = match &meta_file {
        Some(p) => Some(parse_fused_meta(&read_text(p)?)?),
        None => None,
    };
    if let Some(m) = &meta {
        if m.len() != truth.len() {
            return Err(Error::validation("sidecar length does not match the predictions"));
        }
    }

    let probs = pred.probs();
    let n_classes = probs[0].n_classes();
    let y: Vec<usize> = probs.iter().map(ProbabilityVector::argmax).collect();
    let f1 = macro_f1(&y, &truth, n_classes)?;
    let mut report = EvalReport {
        macro_f1: f1.macro_f1,
        per_class_f1: f1.per_class,
        ece: ece(&probs, &truth, cfg.n_bins)?,
        ..EvalReport::default()
    };
    if let Some(m) = &meta {
        if let Some(certain) = m.iter().map(|r| r.certain).collect::<Option<Vec<bool>>>() {
            report.p_accurate_certain = Some(p_accurate_certain(&y, &truth, &certain)?);
        }
        if let Some(eu) = m.iter().map(|r| r.eu).collect::<Option<Vec<f64>>>() {
            let h: Vec<f64> = probs.iter().map(entropy).collect();
            report.kendall_tau = kendall_tau(&eu, &h).ok();
            report.aucc = Some(aucc(&probs, &truth, &eu, &cfg.coverage, cfg.n_bins)?);
        }
    }
    emit(&report.to_json(), a.out.as_deref())
}

fn parse_budgets(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = spec
        .split(':')
        .map(|s| s.trim().parse::<f64>().map_err(|_| Error::validation(format!("bad budget grid {spec:?}"))))
        .collect::<Result<_>>()?;
    let [start, stop, step] = parts[..] else {
        return Err(Error::validation(format!("budget grid {spec:?} is not start:stop:step")));
    };
    if !(step > 0.0 && start <= stop && start >= 0.0) {
        return Err(Error::validation(format!("budget grid {spec:?} is empty or invalid")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let cfg = a.run.load()?;
    let budgets = parse_budgets(&a.budgets)?;
    if budgets.len() < 2 {
        return Err(Error::validation("a sweep needs at least 2 budgets"));
    }
    let model = read_fdbk(&a.banks)?;
    let (mut li, hi) = load_pairs(&a.li, &a.hi, &cfg)?;
    if let Some(t) = &a.truth {
        let truth = parse_truth(&read_text(t)?)?.labels;
        if truth.len() != li.len() {
            return Err(Error::validation("truth length does not match the LI dump"));
        }
        for (r, y) in li.iter_mut().zip(truth) {
            *r = r.clone().with_label(y)?;
        }
    }
    let analyses = analyze(&model, &li, Some(&hi))?;
    let cost = cfg.cost_model()?;
    let pool = a.random_pool.unwrap_or(cfg.random_pool);

    let tau_li = eu_au_correlation(&model.li, &li).ok();
    let tau_hi = eu_au_correlation(&model.hi, &hi).ok();
    let tau = match (tau_li, tau_hi) {
        (Some(x), Some(y)) => Some(0.5 * (x + y)),
        (x, y) => x.or(y),
    };
    let aucc_li = domain_aucc(&model.li, &li)?;
    let aucc_hi = domain_aucc(&model.hi, &hi)?;

    let mut policies = Map::new();
    for policy in Policy::ALL {
        let mut report = EvalReport::default();
        for &b in &budgets {
            let out = evaluate_policy(&li, &hi, &analyses, policy, &cost, Some(b), cfg.seed, pool, cfg.n_bins)?;
            report.curve.push((b, out.macro_f1, out.ece, out.p_accurate_certain));
        }
        report.integrate_curve()?;
        let last = *report.curve.last().unwrap();
        report.macro_f1 = last.1;
        report.ece = last.2;
        report.p_accurate_certain = Some(last.3);
        report.kendall_tau = tau;
        report.aucc = Some(0.5 * (aucc_li + aucc_hi));
        policies.insert(policy.to_string(), report.to_json());
    }
    let doc = json!({
        "budgets": budgets,
        "tau_li": tau_li,
        "tau_hi": tau_hi,
        "aucc_li": aucc_li,
        "aucc_hi": aucc_hi,
        "policies": Value::Object(policies),
    });
    emit(&doc, a.out.as_deref())
}

fn emit(v: &Value, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| Error::Parse(e.to_string()))? + "\n";
    match out {
        Some(p) => write_out(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Taxonomy(a) => cmd_taxonomy(a),
        Command::Query(a) => cmd_query(a),
        Command::Fuse(a) => cmd_fuse(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
