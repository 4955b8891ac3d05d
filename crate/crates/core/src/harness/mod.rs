//! End-to-end experiment driver: load, split, standardize on the training
//! fold, train the requested models in parallel, evaluate on the holdout and
//! emit every artifact through a single writer.

mod artifacts;
mod checkpoint;
mod config;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::boosting::gbm_fit;
use crate::dataio::{
    correlation_csv, feature_summary, load_csv, pearson_correlation_matrix, standardize_apply,
    standardize_fit, stratified_split, summary_csv, Dataset, RecordSchema, SplitSpec,
    StandardizationStats,
};
use crate::error::{Error, Result};
use crate::metrics::{confusion_csv, full_report, roc_csv, EvaluationReport};
use crate::nnmodels::train;

pub use artifacts::{ArtifactEntry, Manifest, MANIFEST_FILE};
pub use checkpoint::{Checkpoint, FittedModel, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::{parse_model_list, ExperimentConfig, ModelName};

use artifacts::ArtifactSet;

/// Decision threshold for label metrics.
pub const DECISION_THRESHOLD: f64 = 0.5;

/// One line of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub mcc: f64,
    pub auc: Option<f64>,
}

/// One row per report, best MCC first; ties by higher AUC (a missing AUC
/// ranks last), then by model name.
pub fn compare_table(reports: &[EvaluationReport]) -> Vec<ComparisonRow> {
    let mut rows: Vec<ComparisonRow> = reports
        .iter()
        .map(|r| ComparisonRow {
            model: r.model.clone(),
            weighted_precision: r.weighted_precision,
            weighted_recall: r.weighted_recall,
            weighted_f1: r.weighted_f1,
            mcc: r.mcc,
            auc: r.auc(),
        })
        .collect();
    rows.sort_by(|a, b| {
        b.mcc
            .total_cmp(&a.mcc)
            .then_with(|| match (a.auc, b.auc) {
                (Some(x), Some(y)) => y.total_cmp(&x),
                (Some(_), None) => std::cmp::Ordering::Less,
                (None, Some(_)) => std::cmp::Ordering::Greater,
                (None, None) => std::cmp::Ordering::Equal,
            })
            .then_with(|| a.model.cmp(&b.model))
    });
    rows
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("model,weighted_precision,weighted_recall,weighted_f1,mcc,auc\n");
    for r in rows {
        let auc = r.auc.map(|a| format!("{a:.4}")).unwrap_or_default();
        out.push_str(&format!(
            "{},{:.4},{:.4},{:.4},{:.4},{}\n",
            r.model, r.weighted_precision, r.weighted_recall, r.weighted_f1, r.mcc, auc
        ));
    }
    out
}

/// `epoch,mean_loss`. Neural curves start at epoch 1; the boosting curve
/// starts at stage 0 (the constant initial prediction).
pub fn loss_csv(curve: &[f64], first_epoch: usize) -> String {
    let mut out = String::from("epoch,mean_loss\n");
    for (i, v) in curve.iter().enumerate() {
        out.push_str(&format!("{},{v:.10}\n", i + first_epoch));
    }
    out
}

/// Report JSON with metrics rounded to 4 decimals and ROC points to 6.
pub fn report_json(report: &EvaluationReport) -> Result<String> {
    fn round(v: &mut serde_json::Value, decimals: i32) {
        match v {
            serde_json::Value::Number(n) if n.is_f64() => {
                let scale = 10f64.powi(decimals);
                let x = (n.as_f64().unwrap_or(0.0) * scale).round() / scale;
                if let Some(r) = serde_json::Number::from_f64(x) {
                    *n = r;
                }
            }
            serde_json::Value::Array(items) => items.iter_mut().for_each(|i| round(i, decimals)),
            serde_json::Value::Object(map) => map
                .iter_mut()
                .for_each(|(k, i)| round(i, if k == "roc" { 6 } else { decimals })),
            _ => {}
        }
    }
    let mut value = serde_json::to_value(report)?;
    round(&mut value, 4);
    Ok(serde_json::to_string_pretty(&value)? + "\n")
}

/// Everything a run produced, in memory and on disk.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub output_dir: PathBuf,
    pub manifest: Manifest,
    pub reports: Vec<EvaluationReport>,
    pub comparison: Vec<ComparisonRow>,
    pub checkpoints: Vec<Checkpoint>,
}

/// Train/test folds after standardization with training-fold statistics.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Dataset,
    pub test: Dataset,
    pub standardization: StandardizationStats,
}

pub fn prepare_data(data: &Dataset, seed: u64, test_fraction: f64) -> Result<PreparedData> {
    let spec = SplitSpec {
        test_fraction,
        seed,
        stratified: true,
    };
    let (train, test) = stratified_split(data, &spec).map_err(|e| e.at("split"))?;
    let stats = standardize_fit(&train).map_err(|e| e.at("standardize"))?;
    Ok(PreparedData {
        train: standardize_apply(&train, &stats).map_err(|e| e.at("standardize"))?,
        test: standardize_apply(&test, &stats).map_err(|e| e.at("standardize"))?,
        standardization: stats,
    })
}

/// Fits one model on the (standardized) training fold.
pub fn fit_model(
    config: &ExperimentConfig,
    name: ModelName,
    train_fold: &Dataset,
) -> Result<FittedModel> {
    let fitted = match config.model_config(name) {
        Some(cfg) => train(&cfg, &config.train_config(), train_fold).map(FittedModel::Neural),
        None => gbm_fit(train_fold, &config.gbm).map(FittedModel::Gbm),
    };
    fitted.map_err(|e| e.at(format!("train {name}")))
}

/// Runs the whole pipeline on an already loaded dataset. Models train
/// concurrently; each draws from its own named random streams, so results do
/// not depend on scheduling.
pub fn run_on_dataset(
    config: &ExperimentConfig,
    data: &Dataset,
    output_dir: &Path,
) -> Result<RunArtifacts> {
    config.validate().map_err(|e| e.at("config"))?;
    let prepared = prepare_data(data, config.seed, config.test_fraction)?;
    let models = config.models();

    let fitted: Vec<Result<FittedModel>> = std::thread::scope(|s| {
        let handles: Vec<_> = models
            .iter()
            .map(|&name| {
                let train_fold = &prepared.train;
                s.spawn(move || fit_model(config, name, train_fold))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(Error::Usage("training thread panicked".into())))
            })
            .collect()
    });

    let mut set = ArtifactSet::default();
    let mut reports = Vec::new();
    let mut checkpoints = Vec::new();
    for (&name, model) in models.iter().zip(fitted) {
        let model = model?;
        let stage = format!("evaluate {name}");
        let scores = model
            .predict(&prepared.test.x)
            .map_err(|e| e.at(stage.clone()))?;
        let report = full_report(&prepared.test.y, &scores, DECISION_THRESHOLD, name.as_str())
            .map_err(|e| e.at(stage))?;
        set.add(format!("report_{name}.json"), report_json(&report)?);
        if let Some(roc) = &report.roc {
            set.add(format!("roc_{name}.csv"), roc_csv(roc));
        }
        set.add(
            format!("confusion_{name}.csv"),
            confusion_csv(&report.confusion_matrix),
        );
        let first_epoch = if name == ModelName::Gbm { 0 } else { 1 };
        set.add(
            format!("loss_{name}.csv"),
            loss_csv(model.loss_curve(), first_epoch),
        );
        let ck = Checkpoint::new(
            name,
            data.feature_names.clone(),
            prepared.standardization.clone(),
            model,
        );
        set.add(format!("checkpoint_{name}.json"), ck.to_json()?);
        reports.push(report);
        checkpoints.push(ck);
    }
    let comparison = compare_table(&reports);
    set.add("comparison.csv".to_string(), comparison_csv(&comparison));
    let manifest = set.write(output_dir).map_err(|e| e.at("write"))?;
    Ok(RunArtifacts {
        output_dir: output_dir.to_path_buf(),
        manifest,
        reports,
        comparison,
        checkpoints,
    })
}

fn required<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| Error::Config(format!("{what} is not set")).at("config"))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    load_csv(path, &RecordSchema::uci()).map_err(|e| e.at("load"))
}

/// Loads `config.data_path` and runs the pipeline into `config.output_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunArtifacts> {
    let data_path = required(&config.data_path, "data_path")?;
    let output_dir = required(&config.output_dir, "output_dir")?;
    config.validate().map_err(|e| e.at("config"))?;
    let data = load_dataset(data_path)?;
    run_on_dataset(config, &data, output_dir)
}

/// Writes `correlation.csv` and `summary.csv` for the raw features.
pub fn eda_command(data_path: &Path, output_dir: &Path) -> Result<Manifest> {
    let data = load_dataset(data_path)?;
    let corr = pearson_correlation_matrix(&data).map_err(|e| e.at("eda"))?;
    let summary = feature_summary(&data).map_err(|e| e.at("eda"))?;
    let mut set = ArtifactSet::default();
    set.add(
        "correlation.csv".to_string(),
        correlation_csv(&data.feature_names, &corr),
    );
    set.add("summary.csv".to_string(), summary_csv(&summary));
    set.write(output_dir).map_err(|e| e.at("write"))
}

/// Re-scores every row of `data_path` with a saved model and writes its
/// report, ROC and confusion files.
pub fn evaluate_checkpoint(
    checkpoint_path: &Path,
    data_path: &Path,
    output_dir: &Path,
) -> Result<EvaluationReport> {
    let ck = Checkpoint::load(checkpoint_path).map_err(|e| e.at("checkpoint"))?;
    let data = load_dataset(data_path)?;
    if data.feature_names != ck.feature_names {
        return Err(
            Error::Schema("data columns do not match the checkpoint's features".into()).at("load"),
        );
    }
    let name = ck.model_name;
    let stage = format!("evaluate {name}");
    let scores = ck.predict_raw(&data.x).map_err(|e| e.at(stage.clone()))?;
    let report = full_report(&data.y, &scores, DECISION_THRESHOLD, name.as_str())
        .map_err(|e| e.at(stage))?;
    let mut set = ArtifactSet::default();
    set.add(format!("report_{name}.json"), report_json(&report)?);
    if let Some(roc) = &report.roc {
        set.add(format!("roc_{name}.csv"), roc_csv(roc));
    }
    set.add(
        format!("confusion_{name}.csv"),
        confusion_csv(&report.confusion_matrix),
    );
    set.write(output_dir).map_err(|e| e.at("write"))?;
    Ok(report)
}
