//! Pipeline stages behind the command-line subcommands. Every stage writes
//! its artifacts plus a `manifest.json` with the config echo, the seed and
//! content hashes of inputs and outputs. Nothing time-dependent is recorded,
//! so identical inputs give identical files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::{train, write_metrics_csv, CqlPolicy, StepMetrics};
use crate::baselines::{optimize_price, BehavioralPolicy, OptPolicy, PricingPolicy};
use crate::config::{Precision, RunConfig};
use crate::error::{Error, Result};
use crate::eval::plot::{render_svg, thin, Chart, Series};
use crate::eval::{evaluate_prices, summary_markdown, write_report_csv, OptimalReturn, ReportRow, UpliftRange};
use crate::market::{build_market, to_transitions, Dataset, DatasetRow, Split, StateEncoder, TruthModel};
use crate::policy::PolicyArtifact;
use crate::response::{fit_response, PriceResponse, ResponseModel, ResponseVariant};
use crate::reward::{expected_reward, MAX_RATE, MIN_RATE};
use crate::Scalar;

pub const MANIFEST: &str = "manifest.json";

/// Git-style object hash: SHA-256 over `"blob <len>\0" ++ bytes`.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_hash(path: &Path) -> Result<String> {
    Ok(content_hash(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub seed: Option<u64>,
    pub config: RunConfig,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    pub notes: BTreeMap<String, String>,
}

impl Manifest {
    fn new(stage: &str, seed: Option<u64>, config: &RunConfig) -> Self {
        Self {
            stage: stage.to_string(),
            seed,
            config: config.clone(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            notes: BTreeMap::new(),
        }
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileHash {
            path: path.display().to_string(),
            hash: file_hash(path)?,
        });
        Ok(())
    }

    /// Records outputs by file name, relative to the stage directory.
    fn output(&mut self, path: &Path) -> Result<()> {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        self.outputs.push(FileHash {
            path: name,
            hash: file_hash(path)?,
        });
        Ok(())
    }

    fn note(&mut self, key: &str, value: impl ToString) {
        self.notes.insert(key.to_string(), value.to_string());
    }

    fn write(&self, dir: &Path) -> Result<()> {
        write_text(&dir.join(MANIFEST), &serde_json::to_string_pretty(self)?)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    write_text(path, &serde_json::to_string_pretty(value)?)
}

fn read_json<D: for<'de> Deserialize<'de>>(path: &Path) -> Result<D> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn load_truth(path: &Path) -> Result<TruthModel> {
    read_json(path)
}

/// `gen-data`: writes `dataset.csv` and `truth.json`.
pub fn gen_data(config: &RunConfig, seed: u64, out: &Path) -> Result<Dataset> {
    let cfg = config.for_seed(seed);
    cfg.validate()?;
    ensure_dir(out)?;
    let market = build_market(&cfg.market, &cfg.reward)?;
    market.dataset.validate()?;
    let data = out.join("dataset.csv");
    let truth = out.join("truth.json");
    market.dataset.save(&data)?;
    write_json(&truth, &market.truth)?;
    let mut m = Manifest::new("gen-data", Some(seed), &cfg);
    m.output(&data)?;
    m.output(&truth)?;
    m.note("family", market.truth.family);
    m.note("accept_rate", format!("{:.6}", market.dataset.accept_rate()));
    m.note("intercept_shift", format!("{:.6}", market.truth.intercept_shift));
    m.write(out)?;
    log::info!("gen-data: {} rows, accept rate {:.4}", market.dataset.rows.len(), market.dataset.accept_rate());
    Ok(market.dataset)
}

/// `fit-response`: fits `variant` on the train split, writes `model.json`.
pub fn fit_response_stage(
    config: &RunConfig,
    dataset_path: &Path,
    variant: ResponseVariant,
    out: &Path,
) -> Result<ResponseModel> {
    config.validate()?;
    ensure_dir(out)?;
    let dataset = Dataset::load(dataset_path)?;
    let model = fit_response(
        variant,
        dataset.rows_in(Split::Train),
        dataset.rows_in(Split::Val),
        &config.response.neural,
    )?;
    let path = out.join("model.json");
    model.save(&path)?;
    let mut m = Manifest::new("fit-response", None, config);
    m.input(dataset_path)?;
    m.output(&path)?;
    m.note("variant", variant);
    m.note("model", model.id());
    m.write(out)?;
    Ok(model)
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub policy: CqlPolicy,
    pub metrics: Vec<StepMetrics>,
    /// `E[Q(s, a~π)] − E[Q(s, a_data)]` on the training transitions.
    pub conservative_gap: f64,
    pub final_alpha: f64,
}

fn train_typed<T: Scalar>(config: &RunConfig, dataset: &Dataset, checkpoints: Option<&Path>) -> Result<TrainResult> {
    let rows = dataset.rows_in(Split::Train);
    let encoder = StateEncoder::fit(rows)?;
    let transitions = to_transitions(rows, &encoder)?;
    let outcome = train::<T>(&transitions, &config.cql, |epoch, agent| match checkpoints {
        Some(dir) => agent.save_epoch(dir, epoch),
        None => Ok(()),
    })?;
    Ok(TrainResult {
        policy: CqlPolicy::new(encoder, &outcome.agent.actor),
        conservative_gap: outcome.agent.conservative_gap(&transitions)?,
        final_alpha: outcome.agent.alpha(),
        metrics: outcome.metrics,
    })
}

/// Trains CQL on the train split of `dataset` without writing anything.
pub fn train_policy(config: &RunConfig, dataset: &Dataset) -> Result<TrainResult> {
    config.validate()?;
    match config.precision {
        Precision::F32 => train_typed::<f32>(config, dataset, None),
        Precision::F64 => train_typed::<f64>(config, dataset, None),
    }
}

/// `train`: per-epoch checkpoints, `metrics.csv` and `policy.json`.
pub fn train_stage(config: &RunConfig, dataset_path: &Path, out: &Path) -> Result<TrainResult> {
    config.validate()?;
    let dataset = Dataset::load(dataset_path)?;
    let ckpt = out.join("checkpoints");
    ensure_dir(&ckpt)?;
    let result = match config.precision {
        Precision::F32 => train_typed::<f32>(config, &dataset, Some(&ckpt))?,
        Precision::F64 => train_typed::<f64>(config, &dataset, Some(&ckpt))?,
    };
    let metrics = out.join("metrics.csv");
    let file = fs::File::create(&metrics).map_err(|e| Error::io(&metrics, e))?;
    write_metrics_csv(&result.metrics, std::io::BufWriter::new(file))?;
    let policy = out.join("policy.json");
    PolicyArtifact::Cql(result.policy.clone()).save(&policy)?;
    let mut m = Manifest::new("train", Some(config.cql.seed), config);
    m.input(dataset_path)?;
    m.output(&metrics)?;
    m.output(&policy)?;
    m.note("dropout_placement", "online critics only");
    m.note("alpha_threshold_scope", "per critic");
    m.note("final_alpha", format!("{:.6}", result.final_alpha));
    m.note("conservative_gap", format!("{:.6}", result.conservative_gap));
    m.note("steps", result.metrics.len());
    m.write(out)?;
    Ok(result)
}

fn opt_label(model: &ResponseModel) -> String {
    match model.id().as_str() {
        "logistic" => "opt".to_string(),
        "logistic-fdpe" => "opt-fdpe".to_string(),
        id => format!("opt-{id}"),
    }
}

/// `optimize`: π_Opt under a fitted model; `prices.csv` covers the test split.
pub fn optimize_stage(config: &RunConfig, dataset_path: &Path, model_path: &Path, out: &Path) -> Result<Vec<f64>> {
    config.validate()?;
    ensure_dir(out)?;
    let dataset = Dataset::load(dataset_path)?;
    let model = ResponseModel::load(model_path)?;
    let label = opt_label(&model);
    let fdpe = label == "opt-fdpe";
    let policy = OptPolicy::new(label, model, config.reward);
    let rows = dataset.rows_in(Split::Test);
    let prices = policy.prices(rows)?;
    let csv_path = out.join("prices.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["app_index", "offered_rate", "price"])?;
    for (r, p) in rows.iter().zip(&prices) {
        w.write_record([r.app.app_index.to_string(), r.offered_rate.to_string(), p.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    let policy_path = out.join("policy.json");
    let artifact = if fdpe {
        PolicyArtifact::OptFdpe(policy)
    } else {
        PolicyArtifact::Opt(policy)
    };
    artifact.save(&policy_path)?;
    let mut m = Manifest::new("optimize", None, config);
    m.input(dataset_path)?;
    m.input(model_path)?;
    m.output(&csv_path)?;
    m.output(&policy_path)?;
    m.note("policy", artifact.id());
    m.write(out)?;
    Ok(prices)
}

/// Evaluators: the truth, when known, then each configured variant fit on
/// every logged row.
pub fn build_evaluators(
    config: &RunConfig,
    dataset: &Dataset,
    truth: Option<TruthModel>,
) -> Result<Vec<Box<dyn PriceResponse>>> {
    let mut out: Vec<Box<dyn PriceResponse>> = Vec::new();
    if let Some(t) = truth {
        out.push(Box::new(t));
    }
    for v in &config.evaluators {
        out.push(Box::new(fit_response(
            *v,
            &dataset.rows,
            dataset.rows_in(Split::Val),
            &config.response.neural,
        )?));
    }
    Ok(out)
}

/// Reports of every policy under every evaluator on `rows`. The behavioral
/// policy is always included; % of optimal is attached under the truth.
pub fn evaluate_policies(
    config: &RunConfig,
    family: &str,
    seed: u64,
    policies: &[&dyn PricingPolicy],
    rows: &[DatasetRow],
    truth: Option<&TruthModel>,
    evaluators: &[Box<dyn PriceResponse>],
) -> Result<(Vec<ReportRow>, Vec<crate::eval::EvalReport>)> {
    let optimal = truth.map(|t| OptimalReturn::compute(rows, t, &config.reward)).transpose()?;
    let truth_id = truth.map(|t| t.id());
    let behavioral = BehavioralPolicy;
    let mut all: Vec<&dyn PricingPolicy> = vec![&behavioral];
    all.extend(policies.iter().copied());
    let mut rows_out = Vec::new();
    let mut reports = Vec::new();
    for policy in all {
        let prices = policy.prices(rows)?;
        for e in evaluators {
            let mut rep = evaluate_prices(&policy.id(), prices.clone(), rows, e.as_ref(), &config.reward)?;
            if let (Some(opt), Some(id)) = (&optimal, &truth_id) {
                if &rep.evaluator == id {
                    opt.attach(&mut rep);
                }
            }
            rows_out.push(ReportRow::from_report(family, seed, &rep));
            reports.push(rep);
        }
    }
    Ok((rows_out, reports))
}

/// Markdown summary: a table per evaluator plus uplift ranges per policy.
pub fn summary_document(rows: &[ReportRow]) -> String {
    let mut evaluators: Vec<&str> = Vec::new();
    for r in rows {
        if !evaluators.contains(&r.evaluator.as_str()) {
            evaluators.push(&r.evaluator);
        }
    }
    let mut out = String::from("# Evaluation summary\n\n");
    for e in &evaluators {
        out.push_str(&summary_markdown(rows, e));
        out.push('\n');
    }
    let mut groups: BTreeMap<(String, u64, String), Vec<f64>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.family.clone(), r.seed, r.policy.clone()))
            .or_default()
            .push(r.uplift);
    }
    out.push_str("## Uplift range across evaluators\n\n| Family | Seed | Policy | Min | Mean | Max |\n|---|---|---|---:|---:|---:|\n");
    for ((family, seed, policy), u) in &groups {
        let lo = u.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mean = u.iter().sum::<f64>() / u.len() as f64;
        out.push_str(&format!(
            "| {family} | {seed} | {policy} | {:.1}% | {:.1}% | {:.1}% |\n",
            100.0 * lo,
            100.0 * mean,
            100.0 * hi
        ));
    }
    out
}

/// Uplift range of `policy` across evaluators, from report rows.
pub fn uplift_range(reports: &[crate::eval::EvalReport], policy: &str) -> Result<UpliftRange> {
    let sel: Vec<_> = reports.iter().filter(|r| r.policy == policy).cloned().collect();
    UpliftRange::of(&sel)
}

fn cumulative_chart(reports: &[crate::eval::EvalReport], evaluator: &str) -> Chart {
    Chart {
        title: format!("Cumulative expected reward ({evaluator})"),
        x_label: "test application".into(),
        y_label: "dollars".into(),
        series: reports
            .iter()
            .filter(|r| r.evaluator == evaluator)
            .map(|r| {
                let pts: Vec<(f64, f64)> = r
                    .cumulative_curve()
                    .into_iter()
                    .enumerate()
                    .map(|(i, v)| ((i + 1) as f64, v))
                    .collect();
                Series {
                    label: r.policy.clone(),
                    points: thin(&pts, 400),
                }
            })
            .collect(),
        markers: Vec::new(),
    }
}

/// `evaluate`: `report.csv`, `summary.md` and `cumulative.svg` for the
/// test split.
pub fn evaluate_stage(
    config: &RunConfig,
    dataset_path: &Path,
    truth_path: Option<&Path>,
    policy_paths: &[PathBuf],
    out: &Path,
) -> Result<Vec<ReportRow>> {
    config.validate()?;
    ensure_dir(out)?;
    let dataset = Dataset::load(dataset_path)?;
    let truth = truth_path.map(load_truth).transpose()?;
    let family = truth
        .as_ref()
        .map(|t| t.family)
        .unwrap_or(config.market.demand_family)
        .to_string();
    let artifacts = policy_paths
        .iter()
        .map(|p| PolicyArtifact::load(p))
        .collect::<Result<Vec<_>>>()?;
    let policies: Vec<&dyn PricingPolicy> = artifacts
        .iter()
        .filter(|a| !matches!(a, PolicyArtifact::Behavioral))
        .map(|a| a as &dyn PricingPolicy)
        .collect();
    let evaluators = build_evaluators(config, &dataset, truth.clone())?;
    let rows = dataset.rows_in(Split::Test);
    let seed = config.seeds.first().copied().unwrap_or(config.market.seed);
    let (report_rows, reports) = evaluate_policies(config, &family, seed, &policies, rows, truth.as_ref(), &evaluators)?;
    let (csv_path, md_path, svg_path) = (out.join("report.csv"), out.join("summary.md"), out.join("cumulative.svg"));
    let file = fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    write_report_csv(&report_rows, std::io::BufWriter::new(file))?;
    write_text(&md_path, &summary_document(&report_rows))?;
    let chart_evaluator = evaluators.first().map(|e| e.id()).unwrap_or_default();
    write_text(&svg_path, &render_svg(&cumulative_chart(&reports, &chart_evaluator)))?;
    let mut m = Manifest::new("evaluate", Some(seed), config);
    m.input(dataset_path)?;
    if let Some(t) = truth_path {
        m.input(t)?;
    }
    for p in policy_paths {
        m.input(p)?;
    }
    for p in [&csv_path, &md_path, &svg_path] {
        m.output(p)?;
    }
    m.write(out)?;
    Ok(report_rows)
}

/// One point of the explain curves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplainPoint {
    pub rate: f64,
    pub accept_probability: f64,
    pub expected_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub app_index: u64,
    pub model: String,
    pub behavioral_rate: f64,
    pub optimal_rate: f64,
    pub points: Vec<ExplainPoint>,
}

/// Response and expected-reward curves of one application on a 0.05 grid.
pub fn explain(
    row: &DatasetRow,
    model: &dyn PriceResponse,
    reward: &crate::reward::RewardParams,
) -> Result<Explanation> {
    let n = ((MAX_RATE - MIN_RATE) / 0.05).round() as usize;
    let rates: Vec<f64> = (0..=n).map(|i| MIN_RATE + 0.05 * i as f64).collect();
    let probs = model.accept_probabilities(&row.app, &rates);
    let points = rates
        .iter()
        .zip(&probs)
        .map(|(&rate, &p)| {
            Ok(ExplainPoint {
                rate,
                accept_probability: p,
                expected_reward: expected_reward(&row.app, rate, p, reward)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Explanation {
        app_index: row.app.app_index,
        model: model.id(),
        behavioral_rate: row.offered_rate,
        optimal_rate: optimize_price(&row.app, model, reward, (MIN_RATE, MAX_RATE))?,
        points,
    })
}

/// The model `explain` draws curves from: a fitted model or the truth.
pub fn load_any_model(path: &Path) -> Result<Box<dyn PriceResponse>> {
    let value: serde_json::Value = read_json(path)?;
    if value.get("family").is_some() {
        Ok(Box::new(serde_json::from_value::<TruthModel>(value)?))
    } else {
        Ok(Box::new(serde_json::from_value::<ResponseModel>(value)?))
    }
}

/// `explain`: `explain.csv`, `explain_response.svg`, `explain_reward.svg`.
pub fn explain_stage(
    config: &RunConfig,
    dataset_path: &Path,
    app_index: u64,
    model_path: &Path,
    out: &Path,
) -> Result<Explanation> {
    config.validate()?;
    ensure_dir(out)?;
    let dataset = Dataset::load(dataset_path)?;
    let row = dataset
        .rows
        .iter()
        .find(|r| r.app.app_index == app_index)
        .ok_or_else(|| Error::Data(format!("no application with index {app_index}")))?;
    let model = load_any_model(model_path)?;
    let ex = explain(row, model.as_ref(), &config.reward)?;
    let csv_path = out.join("explain.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    for p in &ex.points {
        w.serialize(p)?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    let markers = vec![(ex.behavioral_rate, "behavioral".to_string()), (ex.optimal_rate, "optimal".to_string())];
    let curve = |f: fn(&ExplainPoint) -> f64, label: &str| Series {
        label: label.to_string(),
        points: ex.points.iter().map(|p| (p.rate, f(p))).collect(),
    };
    let response = Chart {
        title: format!("Price response, application {app_index}"),
        x_label: "APR %".into(),
        y_label: "P(accept)".into(),
        series: vec![curve(|p| p.accept_probability, &ex.model)],
        markers: markers.clone(),
    };
    let reward = Chart {
        title: format!("Expected reward, application {app_index}"),
        x_label: "APR %".into(),
        y_label: "dollars".into(),
        series: vec![curve(|p| p.expected_reward, &ex.model)],
        markers,
    };
    let (rs, ws) = (out.join("explain_response.svg"), out.join("explain_reward.svg"));
    write_text(&rs, &render_svg(&response))?;
    write_text(&ws, &render_svg(&reward))?;
    let mut m = Manifest::new("explain", None, config);
    m.input(dataset_path)?;
    m.input(model_path)?;
    for p in [&csv_path, &rs, &ws] {
        m.output(p)?;
    }
    m.note("app_index", app_index);
    m.note("optimal_rate", format!("{:.6}", ex.optimal_rate));
    m.write(out)?;
    Ok(ex)
}

/// gen-data → fit-response (configured variant and FDPE) → train →
/// optimize → evaluate for every seed, then a combined report.
pub fn run_pipeline(config: &RunConfig, out: &Path) -> Result<Vec<ReportRow>> {
    config.validate()?;
    ensure_dir(out)?;
    let mut all = Vec::new();
    let mut top = Manifest::new("pipeline", None, config);
    for &seed in &config.seeds {
        let cfg = config.for_seed(seed);
        let dir = out.join(format!("seed_{seed}"));
        gen_data(config, seed, &dir.join("data"))?;
        let data = dir.join("data").join("dataset.csv");
        let truth = dir.join("data").join("truth.json");
        fit_response_stage(&cfg, &data, cfg.response.variant, &dir.join("response"))?;
        fit_response_stage(&cfg, &data, ResponseVariant::Fdpe, &dir.join("response_fdpe"))?;
        train_stage(&cfg, &data, &dir.join("train"))?;
        optimize_stage(&cfg, &data, &dir.join("response").join("model.json"), &dir.join("opt"))?;
        optimize_stage(&cfg, &data, &dir.join("response_fdpe").join("model.json"), &dir.join("opt_fdpe"))?;
        let policies = [
            dir.join("train").join("policy.json"),
            dir.join("opt").join("policy.json"),
            dir.join("opt_fdpe").join("policy.json"),
        ];
        all.extend(evaluate_stage(&cfg, &data, Some(&truth), &policies, &dir.join("eval"))?);
        top.input(&dir.join("eval").join("report.csv"))?;
    }
    let (csv_path, md_path) = (out.join("report.csv"), out.join("summary.md"));
    let file = fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    write_report_csv(&all, std::io::BufWriter::new(file))?;
    write_text(&md_path, &summary_document(&all))?;
    top.output(&csv_path)?;
    top.output(&md_path)?;
    top.write(out)?;
    Ok(all)
}
