mod manifest;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use anonrec::evaluation::{run_experiment, ExperimentConfig};
use anonrec::io::{self, DatasetFormat};
use anonrec::{
    audit_k_anonymity, oka_anonymize, residual_anonymity, run_analysis, Dataset, ItemSimilarityMatrix,
    ModelKind, PredictionInput, PrototypeWeighting, RatingRow, RatingScale, TrainedModel,
};

use manifest::{now_unix, DatasetInfo, RunManifest};

#[derive(Parser)]
#[command(name = "anonrec", version, about = "k-anonymized ratings and item-based collaborative filtering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// k-anonymize a rating file into an anonrec-v1 table
    Anonymize(AnonymizeArgs),
    /// Item-item similarities of a rating file or an anonymized table
    Similarity(SimilarityArgs),
    /// Predict one rating under a chosen model
    Predict(PredictArgs),
    /// RMSE versus k for Case1/REG, Case1A/UR, Case1A/AI and BASELINE
    EvalCase1(EvalCase1Args),
    /// RMSE versus N for Case2/UR, Case2A/UR and BASELINE
    EvalCase2(EvalCase2Args),
    /// Per-k diagnostics written as CSV tables
    Analyze(AnalyzeArgs),
    /// Report the anonymity level of an anonrec-v1 table
    Audit(AuditArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Rating file
    #[arg(long)]
    input: PathBuf,
    /// movielens-100k, movielens-1m or csv-triples
    #[arg(long, default_value = "movielens-100k")]
    format: String,
    #[arg(long, default_value_t = 1.0)]
    scale_lo: f64,
    #[arg(long, default_value_t = 5.0)]
    scale_hi: f64,
}

impl DataArgs {
    fn load(&self) -> Result<(Dataset, DatasetInfo)> {
        let format: DatasetFormat = self.format.parse()?;
        let scale = RatingScale::new(self.scale_lo, self.scale_hi)?;
        let bytes = fs::read(&self.input).with_context(|| format!("reading {}", self.input.display()))?;
        let raw = io::parse_ratings(format, bytes.as_slice(), scale)?;
        let data = Dataset::from_raw(&raw, scale)?;
        let info = DatasetInfo {
            path: self.input.clone(),
            format: format.as_str().to_string(),
            checksum: format!("{:016x}", io::fnv1a64(&bytes)),
            users: data.matrix.n_users(),
            items: data.matrix.n_items(),
            ratings: data.matrix.nnz(),
        };
        Ok((data, info))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Weighting {
    Multiplicity,
    Uniform,
}

impl From<Weighting> for PrototypeWeighting {
    fn from(w: Weighting) -> Self {
        match w {
            Weighting::Multiplicity => PrototypeWeighting::Multiplicity,
            Weighting::Uniform => PrototypeWeighting::Uniform,
        }
    }
}

#[derive(Args)]
struct AnonymizeArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    k: usize,
    #[arg(long, env = "ANONREC_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
    /// Include the user-to-anonymous-identity map
    #[arg(long)]
    emit_sigma: bool,
}

#[derive(Args)]
struct SimilarityArgs {
    /// Rating file (raw similarities)
    #[arg(long, conflicts_with = "anon")]
    input: Option<PathBuf>,
    #[arg(long, default_value = "movielens-100k")]
    format: String,
    /// anonrec-v1 table (anonymized similarities)
    #[arg(long)]
    anon: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "multiplicity")]
    weighting: Weighting,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Case1/REG, Case1A/UR, Case1A/AI, Case2/UR, Case2A/UR or BASELINE
    #[arg(long)]
    model: String,
    /// Target item: an external id with --input, a 1-based index with --anon
    #[arg(long)]
    item: u64,
    /// Rating file used as raw training input
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value = "movielens-100k")]
    format: String,
    /// anonrec-v1 table used as anonymized training input
    #[arg(long)]
    anon: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "multiplicity")]
    weighting: Weighting,
    /// User id (Case1/REG), or 1-based user index resolved through sigma (Case1A/AI)
    #[arg(long)]
    user: Option<u64>,
    /// 1-based anonymous identity (Case1A/AI)
    #[arg(long)]
    anon_id: Option<usize>,
    /// Revealed ratings as item=value pairs separated by commas
    #[arg(long)]
    ratings: Option<String>,
}

#[derive(Args)]
struct EvalCase1Args {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 2)]
    k_min: usize,
    #[arg(long, default_value_t = 15)]
    k_max: usize,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    /// Use a fixed k-fold partition instead of random holdouts
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long, default_value_t = 0.2)]
    holdout: f64,
    /// Share of each user's training ratings revealed to Case1A/UR
    #[arg(long, default_value_t = 0.2)]
    input_fraction: f64,
    #[arg(long, value_enum, default_value = "multiplicity")]
    weighting: Weighting,
    #[arg(long, env = "ANONREC_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_csv: PathBuf,
}

#[derive(Args)]
struct EvalCase2Args {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_delimiter = ',', default_value = "2,4,10")]
    k_list: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    n_min: usize,
    #[arg(long, default_value_t = 20)]
    n_max: usize,
    #[arg(long, default_value_t = 20)]
    draws: usize,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[arg(long, default_value_t = 0.2)]
    holdout: f64,
    #[arg(long, value_enum, default_value = "multiplicity")]
    weighting: Weighting,
    #[arg(long, env = "ANONREC_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_csv: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_delimiter = ',', default_value = "2,3,4,5,6,7,8,9,10,11,12,13,14,15")]
    k_list: Vec<usize>,
    #[arg(long, default_value_t = 40)]
    bins: usize,
    #[arg(long, default_value_t = 0.2)]
    holdout: f64,
    #[arg(long, default_value_t = 0.2)]
    input_fraction: f64,
    #[arg(long, value_enum, default_value = "multiplicity")]
    weighting: Weighting,
    #[arg(long, env = "ANONREC_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    anon: PathBuf,
    /// Comma-separated 1-based user indices whose ratings were revealed
    #[arg(long, value_delimiter = ',')]
    revealed: Option<Vec<usize>>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Anonymize(a) => anonymize(a),
        Command::Similarity(a) => similarity(a),
        Command::Predict(a) => predict(a),
        Command::EvalCase1(a) => eval_case1(a),
        Command::EvalCase2(a) => eval_case2(a),
        Command::Analyze(a) => analyze(a),
        Command::Audit(a) => audit(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn anonymize(a: AnonymizeArgs) -> Result<()> {
    let started = now_unix();
    let (data, info) = a.data.load()?;
    let (anon, sigma) = oka_anonymize(&data.matrix, a.k, a.seed)?;
    let text = io::format_anonymized(&anon, a.emit_sigma.then_some(&sigma));
    write_file(&a.output, text.as_bytes())?;
    let audit = audit_k_anonymity(&anon);
    println!(
        "prototypes={} users={} satisfied_k={}",
        anon.n_prototypes(),
        anon.n_users(),
        audit.satisfied_k
    );
    let mut m = RunManifest::new(
        "anonymize",
        json!({ "k": a.k, "emit_sigma": a.emit_sigma }),
        json!({ "anonymize": a.seed }),
        started,
    );
    m.dataset = Some(info);
    m.outputs.push(a.output.clone());
    m.write_beside(&a.output)?;
    Ok(())
}

fn read_anon(path: &Path) -> Result<(anonrec::AnonymizedMatrix, Option<anonrec::AssignmentMap>)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(io::parse_anonymized(&text)?)
}

fn similarity(a: SimilarityArgs) -> Result<()> {
    let started = now_unix();
    let (sims, info) = match (&a.input, &a.anon) {
        (Some(input), None) => {
            let data = DataArgs {
                input: input.clone(),
                format: a.format.clone(),
                scale_lo: 1.0,
                scale_hi: 5.0,
            };
            let (d, info) = data.load()?;
            (ItemSimilarityMatrix::from_ratings(&d.matrix), Some(info))
        }
        (None, Some(anon)) => {
            let (t, _) = read_anon(anon)?;
            (ItemSimilarityMatrix::from_anonymized(&t, a.weighting.into()), None)
        }
        _ => bail!("pass exactly one of --input or --anon"),
    };
    write_file(&a.output, io::format_similarity(&sims).as_bytes())?;
    let mut m = RunManifest::new(
        "similarity",
        json!({ "source": sims.source().as_str(), "anon": a.anon }),
        json!({}),
        started,
    );
    m.dataset = info;
    m.outputs.push(a.output.clone());
    m.write_beside(&a.output)?;
    Ok(())
}

fn parse_revealed(s: &str, to_index: impl Fn(u64) -> Result<usize>) -> Result<RatingRow> {
    let mut pairs = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (item, value) = part
            .split_once('=')
            .ok_or_else(|| anyhow!("expected item=value, got {part:?}"))?;
        let item: u64 = item.trim().parse().with_context(|| format!("item in {part:?}"))?;
        let value: f64 = value.trim().parse().with_context(|| format!("value in {part:?}"))?;
        pairs.push((to_index(item)?, value));
    }
    Ok(RatingRow::from_pairs(pairs)?)
}

fn one_based(x: u64, size: usize, what: &str) -> Result<usize> {
    if x == 0 || x as usize > size {
        bail!("{what} {x} out of range 1..={size}");
    }
    Ok(x as usize - 1)
}

fn predict(a: PredictArgs) -> Result<()> {
    let kind = ModelKind::parse(&a.model).ok_or_else(|| anyhow!("unknown model {:?}", a.model))?;
    let anonymized_input = kind.is_anonymized() || (kind == ModelKind::Baseline && a.anon.is_some());
    let (model, input, target) = if anonymized_input {
        let path = a.anon.as_ref().ok_or_else(|| anyhow!("{kind} needs --anon"))?;
        let (table, sigma) = read_anon(path)?;
        let m = table.n_items();
        let table = Arc::new(table);
        let sims = Arc::new(ItemSimilarityMatrix::from_anonymized(&table, a.weighting.into()));
        let mut model = TrainedModel::new(kind, sims, None, Some(table.clone()), table.scale())?;
        if let Some(sigma) = sigma {
            model = model.with_assignment(Arc::new(sigma));
        }
        let input = match kind {
            ModelKind::Case1aAi => match (a.anon_id, a.user) {
                (Some(id), _) => PredictionInput::AnonymousIdentity(one_based(id as u64, table.n_prototypes(), "anonymous id")?),
                (None, Some(u)) => PredictionInput::UserIdentity(one_based(u, table.n_users(), "user")?),
                _ => bail!("Case1A/AI needs --anon-id or --user"),
            },
            ModelKind::Baseline => PredictionInput::Empty,
            _ => PredictionInput::UserRatings(parse_revealed(
                a.ratings.as_deref().ok_or_else(|| anyhow!("{kind} needs --ratings"))?,
                |i| one_based(i, m, "item"),
            )?),
        };
        (model, input, one_based(a.item, m, "item")?)
    } else {
        let path = a.input.as_ref().ok_or_else(|| anyhow!("{kind} needs --input"))?;
        let data = DataArgs {
            input: path.clone(),
            format: a.format.clone(),
            scale_lo: 1.0,
            scale_hi: 5.0,
        };
        let (d, _) = data.load()?;
        let item_index = |i: u64| d.item_index(i).ok_or_else(|| anyhow!("unknown item id {i}"));
        let target = item_index(a.item)?;
        let input = match kind {
            ModelKind::Case1Reg => {
                let u = a.user.ok_or_else(|| anyhow!("Case1/REG needs --user"))?;
                PredictionInput::UserIdentity(d.user_index(u).ok_or_else(|| anyhow!("unknown user id {u}"))?)
            }
            ModelKind::Case2Ur => PredictionInput::UserRatings(parse_revealed(
                a.ratings.as_deref().ok_or_else(|| anyhow!("Case2/UR needs --ratings"))?,
                item_index,
            )?),
            _ => PredictionInput::Empty,
        };
        let model = TrainedModel::fit_raw(kind, Arc::new(d.matrix))?;
        (model, input, target)
    };
    let p = model.predict(&input, target)?;
    println!("prediction={} fallback={}", p.value, p.fallback_level.as_str());
    Ok(())
}

fn write_results(path: &Path, rows: &[anonrec::ResultRow]) -> Result<()> {
    let mut buf = Vec::new();
    io::write_results_csv(&mut buf, rows)?;
    write_file(path, &buf)
}

fn run_eval(command: &str, data: &DataArgs, config: ExperimentConfig, out_csv: &Path) -> Result<()> {
    let started = now_unix();
    let (d, info) = data.load()?;
    let result = run_experiment(&d.matrix, &config)?;
    write_results(out_csv, &result.rows)?;
    if !result.hygiene.is_clean() {
        bail!("split hygiene violated: {:?}", result.hygiene);
    }
    let mut stdout = std::io::stdout().lock();
    for r in &result.rows {
        writeln!(stdout, "{:<10} k={:<3} n={:<3} rmse={:.4} sd={:.4}", r.model.as_str(), r.k, r.n, r.rmse, r.rmse_sd)?;
    }
    let mut m = RunManifest::new(
        command,
        serde_json::to_value(&config)?,
        json!({
            "master": config.seed,
            "trials": result.trial_seeds,
            "rule": "trial t: mix64(mix64(mix64(master) ^ 0) ^ t); children derive(trial, stream, index)",
        }),
        started,
    );
    m.dataset = Some(info);
    m.outputs.push(out_csv.to_path_buf());
    m.config["skipped_users"] = serde_json::to_value(&result.skipped_users)?;
    m.config["hygiene"] = serde_json::to_value(result.hygiene)?;
    m.write_beside(out_csv)?;
    Ok(())
}

fn eval_case1(a: EvalCase1Args) -> Result<()> {
    if a.k_min == 0 || a.k_min > a.k_max {
        bail!("invalid k range {}..={}", a.k_min, a.k_max);
    }
    let mut config = ExperimentConfig::case1(a.seed);
    config.k_values = (a.k_min..=a.k_max).collect();
    config.trials = a.trials;
    config.folds = a.folds;
    config.holdout_fraction = a.holdout;
    config.prediction_input_fraction = a.input_fraction;
    config.weighting = a.weighting.into();
    run_eval("eval-case1", &a.data, config, &a.out_csv)
}

fn eval_case2(a: EvalCase2Args) -> Result<()> {
    if a.n_min == 0 || a.n_min > a.n_max {
        bail!("invalid N range {}..={}", a.n_min, a.n_max);
    }
    let mut config = ExperimentConfig::case2(a.seed);
    config.k_values = a.k_list.clone();
    config.n_values = (a.n_min..=a.n_max).collect();
    config.draws = a.draws;
    config.trials = a.trials;
    config.holdout_fraction = a.holdout;
    config.weighting = a.weighting.into();
    run_eval("eval-case2", &a.data, config, &a.out_csv)
}

fn analyze(a: AnalyzeArgs) -> Result<()> {
    let started = now_unix();
    let (d, info) = a.data.load()?;
    let mut config = ExperimentConfig::case1(a.seed);
    config.k_values = a.k_list.clone();
    config.bins = a.bins;
    config.trials = 1;
    config.holdout_fraction = a.holdout;
    config.prediction_input_fraction = a.input_fraction;
    config.weighting = a.weighting.into();
    let report = run_analysis(&d.matrix, &config)?;
    fs::create_dir_all(&a.out_dir)?;

    let mut e_avg = String::from("k,e_avg,compared,excluded,density,negative_pairs,defined_pairs\n");
    for k in &report.per_k {
        e_avg.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            k.k, k.mean_shift.e_avg, k.mean_shift.compared, k.mean_shift.excluded, k.density, k.negative_pairs, k.defined_pairs
        ));
    }
    let mut hist = String::from("k,bin_lo,bin_hi,count\n");
    let mut push_hist = |k: usize, h: &anonrec::SimilarityHistogram| {
        for (b, c) in h.counts.iter().enumerate() {
            hist.push_str(&format!("{},{},{},{}\n", k, h.bin_edges[b], h.bin_edges[b + 1], c));
        }
    };
    push_hist(0, &report.raw_histogram);
    for k in &report.per_k {
        push_hist(k.k, &k.histogram);
    }
    let mut e_var = String::from("model,k,variance,mae\n");
    for r in &report.e_var {
        e_var.push_str(&format!("{},{},{},{}\n", r.model.as_str(), r.k, r.spread.variance, r.spread.mae));
    }
    let outputs = [
        (a.out_dir.join("e_avg.csv"), e_avg),
        (a.out_dir.join("histograms.csv"), hist),
        (a.out_dir.join("e_var.csv"), e_var),
    ];
    for (path, text) in &outputs {
        write_file(path, text.as_bytes())?;
    }
    println!(
        "raw: defined_pairs={} negative_pairs={}",
        report.raw_defined_pairs, report.raw_negative_pairs
    );
    for k in &report.per_k {
        println!(
            "k={:<3} e_avg={:.5} negative_pairs={} density={:.4}",
            k.k, k.mean_shift.e_avg, k.negative_pairs, k.density
        );
    }
    let mut m = RunManifest::new(
        "analyze",
        serde_json::to_value(&config)?,
        json!({ "master": config.seed }),
        started,
    );
    m.dataset = Some(info);
    m.outputs = outputs.iter().map(|(p, _)| p.clone()).collect();
    m.write_beside(&a.out_dir.join("analysis"))?;
    Ok(())
}

fn audit(a: AuditArgs) -> Result<()> {
    let (anon, sigma) = read_anon(&a.anon)?;
    let report = audit_k_anonymity(&anon);
    println!("satisfied_k={}", report.satisfied_k);
    println!("prototypes={} users={}", anon.n_prototypes(), anon.n_users());
    let sizes: Vec<String> = report
        .class_sizes
        .iter()
        .map(|(size, count)| format!("{size}:{count}"))
        .collect();
    println!("class_sizes={}", sizes.join(","));
    if let Some(revealed) = a.revealed {
        let sigma = sigma.ok_or_else(|| anyhow!("--revealed needs a table written with --emit-sigma"))?;
        let users = revealed
            .iter()
            .map(|&u| one_based(u as u64, sigma.n_users(), "user"))
            .collect::<Result<Vec<_>>>()?;
        let residual = residual_anonymity(&anon, &sigma, &users)?;
        println!("residual_min={}", residual.min_residual);
        let touched: Vec<String> = users
            .iter()
            .filter_map(|&u| sigma.anon_id(u))
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .map(|id| format!("{}:{}", id + 1, residual.residuals[id]))
            .collect();
        println!("residuals={}", touched.join(","));
    }
    Ok(())
}
