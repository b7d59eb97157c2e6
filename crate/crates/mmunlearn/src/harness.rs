//! Config-driven experiment orchestration: artifact caching, the full
//! method x deletion-size x seed grid, timing sweeps, and report emission.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{run_baseline, BaselineConfig};
use crate::error::{Error, Result};
use crate::eval::{evaluate_model, run_ablation, MetricsReport};
use crate::model::{load_checkpoint, save_checkpoint, train_original, ModelConfig, MultimodalModel, TrainConfig};
use crate::plot::{linear_fit, render_line_plot, Series};
use crate::synthdata::{generate_dataset, sample_deletion_set, DatasetBundle, SynthConfig};
use crate::unlearn::{multidelete_unlearn, UnlearnConfig, UnlearnTrace};

pub const CONFIG_SCHEMA: &str = "experiment/1";
pub const RESULTS_HEADER: [&str; 11] = [
    "method",
    "variant",
    "d_test",
    "d_f",
    "mean_recall",
    "mi_ratio",
    "probe_orig",
    "probe_unlearned",
    "seconds",
    "config_hash",
    "seed",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: String,
    pub synth: SynthConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// MultiDelete settings; omit to skip the method.
    pub unlearn: Option<UnlearnConfig>,
    #[serde(default)]
    pub baselines: Vec<BaselineConfig>,
    pub deletion_sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema_version: CONFIG_SCHEMA.into(),
            synth: SynthConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            unlearn: Some(UnlearnConfig::default()),
            baselines: vec![
                BaselineConfig {
                    method: crate::baselines::Method::Finetune,
                    ..BaselineConfig::default()
                },
                BaselineConfig {
                    method: crate::baselines::Method::Neggrad,
                    steps: 50,
                    lr: 0.02,
                    ..BaselineConfig::default()
                },
                BaselineConfig {
                    method: crate::baselines::Method::Dtd,
                    noise_std: 0.2,
                    ..BaselineConfig::default()
                },
                BaselineConfig {
                    method: crate::baselines::Method::Retrain,
                    ..BaselineConfig::default()
                },
            ],
            deletion_sizes: vec![100],
            seeds: vec![0],
            output_dir: PathBuf::from("runs/default"),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA {
            return Err(Error::SchemaVersion {
                expected: CONFIG_SCHEMA.into(),
                found: self.schema_version.clone(),
            });
        }
        self.synth.validate().map_err(|e| Error::Config(format!("synth: {e}")))?;
        self.model.validate().map_err(|e| Error::Config(format!("model: {e}")))?;
        if let Some(u) = &self.unlearn {
            u.validate().map_err(|e| Error::Config(format!("unlearn: {e}")))?;
        }
        for (i, b) in self.baselines.iter().enumerate() {
            b.validate().map_err(|e| Error::Config(format!("baselines[{i}]: {e}")))?;
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds: must list at least one seed".into()));
        }
        let approx_train = (self.synth.n_concepts * self.synth.pairs_per_concept) as f64
            * self.synth.split_fractions.0;
        for &s in &self.deletion_sizes {
            if s == 0 || (s as f64) >= approx_train {
                return Err(Error::Config(format!(
                    "deletion_sizes: size {s} must satisfy 0 < size < |train|"
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let cfg: ExperimentConfig = parse_json_with_offset(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parse JSON, mapping syntax errors to a message with the byte offset.
pub fn parse_json_with_offset<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| {
        let offset: usize = text
            .lines()
            .take(e.line().saturating_sub(1))
            .map(|l| l.len() + 1)
            .sum::<usize>()
            + e.column().saturating_sub(1);
        Error::InvalidInput(format!("JSON parse error at byte offset {offset}: {e}"))
    })
}

pub fn hash_value<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_string(value).expect("serializable");
    let digest = Sha256::digest(json.as_bytes());
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    hex[..16].to_string()
}

fn cache_dir(config: &ExperimentConfig) -> PathBuf {
    std::env::var_os("MMUNLEARN_CACHE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| config.output_dir.join("cache"))
}

fn now_iso() -> String {
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("unix:{secs}")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellRecord {
    pub method: String,
    pub variant: String,
    pub size: usize,
    pub seed: u64,
    pub checkpoint: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub status: String,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: String,
    pub config_hash: String,
    pub bundle_path: PathBuf,
    pub model_path: PathBuf,
    pub results_csv: Option<PathBuf>,
    pub cells: Vec<CellRecord>,
    pub tool_version: String,
    pub started: String,
    pub finished: String,
}

pub fn write_results_csv(path: &Path, rows: &[MetricsReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RESULTS_HEADER)?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.variant.clone(),
            r.d_test_perf.to_string(),
            r.d_f_perf.to_string(),
            r.mean_recall.to_string(),
            r.mi_ratio.to_string(),
            r.probe_acc_original.to_string(),
            r.probe_acc_unlearned.to_string(),
            r.wall_time_s.to_string(),
            r.config_hash.clone(),
            r.seed.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_results_csv(path: &Path) -> Result<Vec<MetricsReport>> {
    let text = fs::read_to_string(path)?;
    results_from_csv(&text)
}

pub fn results_from_csv(text: &str) -> Result<Vec<MetricsReport>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != RESULTS_HEADER {
        return Err(Error::InvalidInput(format!(
            "results CSV header mismatch: {:?}",
            headers
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != RESULTS_HEADER.len() {
            return Err(Error::InvalidInput(format!(
                "results CSV row {} has {} fields, expected {}",
                i + 2,
                rec.len(),
                RESULTS_HEADER.len()
            )));
        }
        let num = |j: usize| -> Result<f64> {
            rec[j].parse().map_err(|e| {
                Error::InvalidInput(format!("results CSV row {}: bad number: {e}", i + 2))
            })
        };
        rows.push(MetricsReport {
            method: rec[0].to_string(),
            variant: rec[1].to_string(),
            d_test_perf: num(2)?,
            d_f_perf: num(3)?,
            mean_recall: num(4)?,
            mi_ratio: num(5)?,
            probe_acc_original: num(6)?,
            probe_acc_unlearned: num(7)?,
            wall_time_s: num(8)?,
            config_hash: rec[9].to_string(),
            seed: rec[10].parse().map_err(|e| {
                Error::InvalidInput(format!("results CSV row {}: bad seed: {e}", i + 2))
            })?,
        });
    }
    Ok(rows)
}

/// Load or generate the dataset bundle for a config, cached by synth hash.
pub fn bundle_for(config: &ExperimentConfig) -> Result<(DatasetBundle, PathBuf)> {
    let dir = cache_dir(config);
    fs::create_dir_all(&dir)?;
    let path = dir.join(format!("bundle_{}.json", hash_value(&config.synth)));
    if path.exists() {
        let bundle = DatasetBundle::from_json(&fs::read_to_string(&path)?)?;
        return Ok((bundle, path));
    }
    let bundle = generate_dataset(&config.synth)?;
    fs::write(&path, bundle.to_json()?)?;
    Ok((bundle, path))
}

/// Load or train the original model f, cached by (synth, model, train) hash.
pub fn original_model_for(
    config: &ExperimentConfig,
    bundle: &DatasetBundle,
) -> Result<(MultimodalModel, PathBuf)> {
    let dir = cache_dir(config);
    fs::create_dir_all(&dir)?;
    let key = hash_value(&(&config.synth, &config.model, &config.train));
    let path = dir.join(format!("model_{key}.json"));
    if path.exists() {
        return Ok((load_checkpoint(&fs::read_to_string(&path)?)?, path));
    }
    let model = train_original(bundle, &config.model, &config.train)?;
    fs::write(&path, save_checkpoint(&model)?)?;
    Ok((model, path))
}

fn mask_seed(seed: u64, size: usize) -> u64 {
    seed ^ (size as u64).wrapping_mul(0x9e3779b97f4a7c15)
}

struct Cell {
    method: String,
    variant: String,
    size: usize,
    seed: u64,
}

fn run_cell(
    config: &ExperimentConfig,
    bundle: &mut DatasetBundle,
    f: &MultimodalModel,
    cell: &Cell,
) -> Result<(MultimodalModel, Option<UnlearnTrace>, f64)> {
    bundle.deletion_mask = sample_deletion_set(bundle, cell.size, mask_seed(cell.seed, cell.size))?;
    if cell.method == "multidelete" {
        let base = config.unlearn.clone().unwrap_or_default();
        let ucfg = UnlearnConfig { seed: cell.seed, ..base };
        let start = std::time::Instant::now();
        let (m, trace) = multidelete_unlearn(f, bundle, &ucfg)?;
        let secs = start.elapsed().as_secs_f64();
        Ok((m, Some(trace), secs))
    } else {
        let bcfg = config
            .baselines
            .iter()
            .find(|b| b.method.name() == cell.method)
            .cloned()
            .ok_or_else(|| Error::Config(format!("no baseline config for {}", cell.method)))?;
        let bcfg = BaselineConfig { seed: cell.seed, ..bcfg };
        let start = std::time::Instant::now();
        let m = run_baseline(f, bundle, &config.train, &bcfg)?;
        let secs = start.elapsed().as_secs_f64();
        Ok((m, None, secs))
    }
}

/// End-to-end experiment: bundle, original model, every configured method x
/// deletion size x seed, evaluation, results CSV, manifest. Idempotent:
/// completed cells are reused from the cache.
pub fn run_experiment(config_path: &Path) -> Result<RunManifest> {
    let config = ExperimentConfig::load(config_path)?;
    run_experiment_config(&config)
}

pub fn run_experiment_config(config: &ExperimentConfig) -> Result<RunManifest> {
    config.validate()?;
    let started = now_iso();
    fs::create_dir_all(&config.output_dir)?;
    let cache = cache_dir(config);
    fs::create_dir_all(&cache)?;
    let config_hash = hash_value(&(
        &config.synth,
        &config.model,
        &config.train,
        &config.unlearn,
        &config.baselines,
        &config.deletion_sizes,
        &config.seeds,
    ));
    let (mut bundle, bundle_path) = bundle_for(config)?;
    let (f, model_path) = original_model_for(config, &bundle)?;

    let mut methods: Vec<String> = Vec::new();
    if config.unlearn.is_some() {
        methods.push("multidelete".into());
    }
    for b in &config.baselines {
        methods.push(b.method.name().into());
    }

    let mut cells_meta = Vec::new();
    let mut rows: Vec<MetricsReport> = Vec::new();
    for &seed in &config.seeds {
        for &size in &config.deletion_sizes {
            for method in &methods {
                let variant = variant_of(config, method);
                let cell = Cell { method: method.clone(), variant: variant.clone(), size, seed };
                let cell_key = hash_value(&(&config_hash, method, &variant, size, seed));
                let row_path = cache.join(format!("cell_{cell_key}.json"));
                let ckpt_path = cache.join(format!("ckpt_{cell_key}.json"));
                let trace_path = cache.join(format!("trace_{cell_key}.csv"));
                if row_path.exists() {
                    let row: MetricsReport =
                        parse_json_with_offset(&fs::read_to_string(&row_path)?)?;
                    rows.push(row);
                    cells_meta.push(CellRecord {
                        method: method.clone(),
                        variant,
                        size,
                        seed,
                        checkpoint: ckpt_path.exists().then(|| ckpt_path.clone()),
                        trace: trace_path.exists().then(|| trace_path.clone()),
                        status: "cached".into(),
                        error: None,
                    });
                    continue;
                }
                match run_cell(config, &mut bundle, &f, &cell) {
                    Ok((f_prime, trace, secs)) => {
                        fs::write(&ckpt_path, save_checkpoint(&f_prime)?)?;
                        if let Some(t) = &trace {
                            fs::write(&trace_path, t.to_csv()?)?;
                        }
                        let report = evaluate_model(
                            &f,
                            &f_prime,
                            &bundle,
                            method,
                            &cell.variant,
                            seed,
                            secs,
                            &config_hash,
                        )?;
                        fs::write(&row_path, serde_json::to_string(&report)?)?;
                        rows.push(report);
                        cells_meta.push(CellRecord {
                            method: method.clone(),
                            variant: cell.variant.clone(),
                            size,
                            seed,
                            checkpoint: Some(ckpt_path),
                            trace: trace.as_ref().map(|_| trace_path.clone()),
                            status: "ok".into(),
                            error: None,
                        });
                    }
                    Err(e) => {
                        cells_meta.push(CellRecord {
                            method: method.clone(),
                            variant: cell.variant.clone(),
                            size,
                            seed,
                            checkpoint: None,
                            trace: None,
                            status: "failed".into(),
                            error: Some(e.to_string()),
                        });
                    }
                }
            }
        }
    }

    let results_csv = if rows.is_empty() {
        None
    } else {
        let path = config.output_dir.join("results.csv");
        write_results_csv(&path, &rows)?;
        Some(path)
    };
    let manifest = RunManifest {
        schema_version: "manifest/1".into(),
        config_hash,
        bundle_path,
        model_path,
        results_csv,
        cells: cells_meta,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        started,
        finished: now_iso(),
    };
    fs::write(
        config.output_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

fn variant_of(config: &ExperimentConfig, method: &str) -> String {
    let fusion_only = if method == "multidelete" {
        config.unlearn.as_ref().map(|u| u.fusion_only).unwrap_or(false)
    } else {
        config
            .baselines
            .iter()
            .find(|b| b.method.name() == method)
            .map(|b| b.fusion_only)
            .unwrap_or(false)
    };
    if fusion_only { "fusion-only".into() } else { "full".into() }
}

// ---- timing sweep ----

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: String,
    pub size: usize,
    pub seconds: f64,
}

/// Wall-time of MultiDelete and Retrain across deletion sizes, fixed seed.
/// MultiDelete's step count scales with |D_f| so that the number of passes
/// over the deletion set is constant (the largest size runs the configured
/// step budget).
pub fn timing_sweep(config: &ExperimentConfig, sizes: &[usize]) -> Result<Vec<SweepRow>> {
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("sizes must be strictly increasing".into()));
    }
    let (mut bundle, _) = bundle_for(config)?;
    let (f, _) = original_model_for(config, &bundle)?;
    let base = config.unlearn.clone().unwrap_or_default();
    let seed = config.seeds.first().copied().unwrap_or(0);
    let max_size = *sizes.last().unwrap();
    let mut rows = Vec::new();
    for &size in sizes {
        bundle.deletion_mask = sample_deletion_set(&bundle, size, mask_seed(seed, size))?;
        let steps = ((base.steps as f64) * size as f64 / max_size as f64).ceil() as usize;
        let ucfg = UnlearnConfig { steps: steps.max(1), seed, ..base.clone() };
        let (_, trace) = multidelete_unlearn(&f, &bundle, &ucfg)?;
        rows.push(SweepRow { method: "multidelete".into(), size, seconds: trace.wall_time_s });

        let start = std::time::Instant::now();
        let _ = crate::baselines::retrain_with_config(&bundle, &config.model, &config.train, seed)?;
        rows.push(SweepRow {
            method: "retrain".into(),
            size,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(rows)
}

pub fn write_sweep_outputs(rows: &[SweepRow], out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "size", "seconds"])?;
    for r in rows {
        w.write_record([r.method.clone(), r.size.to_string(), r.seconds.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    fs::write(out_dir.join("sweep.csv"), bytes)?;

    let mut by_method: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        by_method.entry(&r.method).or_default().push((r.size as f64, r.seconds));
    }
    let series: Vec<Series> = by_method
        .iter()
        .map(|(m, pts)| Series { label: m.to_string(), points: pts.clone() })
        .collect();
    render_line_plot(&series, &out_dir.join("sweep.png"))?;

    let mut summary = String::new();
    for (m, pts) in &by_method {
        let (a, b, r2) = linear_fit(pts);
        summary.push_str(&format!(
            "{m}: fit seconds = {a:.4} + {b:.6} * size, R^2 = {r2:.4}\n"
        ));
    }
    fs::write(out_dir.join("sweep_fit.txt"), summary)?;
    Ok(())
}

// ---- report ----

/// Render per-method tables and the ablation table from a results CSV.
/// Returns (plain-text report, per-method CSV).
pub fn report(results_csv: &Path) -> Result<(String, String)> {
    let rows = read_results_csv(results_csv)?;
    if rows.is_empty() {
        eprintln!("warning: results CSV is empty; emitting empty tables");
    }
    let method_order = ["retrain", "finetune", "neggrad", "dtd", "multidelete"];
    let mut text = String::new();
    text.push_str(&format!(
        "{:<14}{:<14}{:>8}{:>8}{:>12}{:>10}{:>12}{:>14}\n",
        "method", "variant", "D_Test", "D_f", "mean_recall", "MI", "probe_orig", "probe_unlrn"
    ));
    let mut csv_out = csv::Writer::from_writer(Vec::new());
    csv_out.write_record(RESULTS_HEADER)?;
    let mut ordered: Vec<&MetricsReport> = Vec::new();
    for m in method_order {
        for r in rows.iter().filter(|r| r.method == m) {
            ordered.push(r);
        }
    }
    for r in rows.iter().filter(|r| !method_order.contains(&r.method.as_str())) {
        ordered.push(r);
    }
    for r in &ordered {
        text.push_str(&format!(
            "{:<14}{:<14}{:>8.1}{:>8.1}{:>12.1}{:>10.3}{:>12.1}{:>14.1}\n",
            r.method,
            r.variant,
            r.d_test_perf,
            r.d_f_perf,
            r.mean_recall,
            r.mi_ratio,
            r.probe_acc_original,
            r.probe_acc_unlearned
        ));
        csv_out.write_record([
            r.method.clone(),
            r.variant.clone(),
            r.d_test_perf.to_string(),
            r.d_f_perf.to_string(),
            r.mean_recall.to_string(),
            r.mi_ratio.to_string(),
            r.probe_acc_original.to_string(),
            r.probe_acc_unlearned.to_string(),
            r.wall_time_s.to_string(),
            r.config_hash.clone(),
            r.seed.to_string(),
        ])?;
    }
    // ablation block: D_Test then D_f, one row per objective variant
    let ablation_variants = ["full", "-MD", "-UKR", "-MKR"];
    let ab_rows: Vec<&MetricsReport> = ablation_variants
        .iter()
        .filter_map(|v| rows.iter().find(|r| r.method == "multidelete" && &r.variant == v))
        .collect();
    if !ab_rows.is_empty() {
        text.push_str("\nablation (objective, D_Test, D_f):\n");
        for r in ab_rows {
            text.push_str(&format!(
                "{:<8}{:>8.1}{:>8.1}\n",
                r.variant, r.d_test_perf, r.d_f_perf
            ));
        }
    }
    let csv_bytes = csv_out.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    let csv_text = String::from_utf8(csv_bytes).map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok((text, csv_text))
}

/// Run the ablation grid for a config and write its rows to a CSV.
pub fn run_ablation_for(config: &ExperimentConfig, out: &Path) -> Result<Vec<MetricsReport>> {
    let (mut bundle, _) = bundle_for(config)?;
    let (f, _) = original_model_for(config, &bundle)?;
    let seed = config.seeds.first().copied().unwrap_or(0);
    let size = config.deletion_sizes.first().copied().unwrap_or(200);
    bundle.deletion_mask = sample_deletion_set(&bundle, size, mask_seed(seed, size))?;
    let base = config.unlearn.clone().unwrap_or_default();
    let base = UnlearnConfig { seed, ..base };
    let reports: Vec<MetricsReport> = run_ablation(&f, &bundle, &base)?
        .into_iter()
        .map(|(_, r)| r)
        .collect();
    if let Some(dir) = out.parent() {
        fs::create_dir_all(dir)?;
    }
    write_results_csv(out, &reports)?;
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_hash_stable_and_sensitive() {
        let c1 = ExperimentConfig::default();
        let mut c2 = ExperimentConfig::default();
        assert_eq!(hash_value(&c1.synth), hash_value(&c2.synth));
        c2.synth.seed = 99;
        assert_ne!(hash_value(&c1.synth), hash_value(&c2.synth));
    }

    #[test]
    fn invalid_schema_version_rejected() {
        let mut c = ExperimentConfig::default();
        c.schema_version = "experiment/0".into();
        assert!(matches!(c.validate(), Err(Error::SchemaVersion { .. })));
    }

    #[test]
    fn oversized_deletion_rejected() {
        let mut c = ExperimentConfig::default();
        c.deletion_sizes = vec![1_000_000];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn parse_error_reports_byte_offset() {
        let bad = "{\n  \"schema_version\": \"experiment/1\",\n  oops\n}";
        let err = parse_json_with_offset::<ExperimentConfig>(bad).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("byte offset"), "{msg}");
    }

    #[test]
    fn results_csv_round_trip() {
        let dir = std::env::temp_dir().join(format!("mmunlearn_csv_{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("r.csv");
        let rows = vec![MetricsReport {
            method: "finetune".into(),
            variant: "full".into(),
            d_test_perf: 91.25,
            d_f_perf: 88.0,
            mean_recall: 70.5,
            mi_ratio: 1.02,
            probe_acc_original: 80.0,
            probe_acc_unlearned: 79.5,
            wall_time_s: 1.5,
            config_hash: "abc".into(),
            seed: 3,
        }];
        write_results_csv(&path, &rows).unwrap();
        let back = read_results_csv(&path).unwrap();
        assert_eq!(back, rows);
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn report_on_hand_built_csv() {
        let dir = std::env::temp_dir().join(format!("mmunlearn_rep_{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("r.csv");
        let mk = |method: &str, d_test: f64| MetricsReport {
            method: method.into(),
            variant: "full".into(),
            d_test_perf: d_test,
            d_f_perf: 50.0,
            mean_recall: 60.0,
            mi_ratio: 1.1,
            probe_acc_original: 75.0,
            probe_acc_unlearned: 74.0,
            wall_time_s: 2.0,
            config_hash: "h".into(),
            seed: 0,
        };
        write_results_csv(&path, &[mk("multidelete", 90.0), mk("finetune", 88.0)]).unwrap();
        let (text, _) = report(&path).unwrap();
        // method order puts finetune before multidelete
        let fi = text.find("finetune").unwrap();
        let md = text.find("multidelete").unwrap();
        assert!(fi < md);
        assert_eq!(text.matches("finetune").count(), 1);
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn report_rejects_malformed_header() {
        let dir = std::env::temp_dir().join(format!("mmunlearn_bad_{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.csv");
        fs::write(&path, "a,b,c\n1,2,3\n").unwrap();
        assert!(report(&path).is_err());
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn empty_results_csv_is_ok() {
        let dir = std::env::temp_dir().join(format!("mmunlearn_empty_{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("empty.csv");
        write_results_csv(&path, &[]).unwrap();
        let (text, _) = report(&path).unwrap();
        assert!(text.contains("method"));
        fs::remove_dir_all(&dir).ok();
    }
}
