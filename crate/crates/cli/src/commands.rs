use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use log::info;
use serde::{Deserialize, Serialize};

use selfhar::baselines::{en_co_train, extract_dataset_features, EnCoConfig};
use selfhar::datakit::{
    export_csv, subset_by_intensity, synthesize_recordings, Dataset, IntensityMode, PreparedData, SynthConfig,
};
use selfhar::evalkit::{
    evaluate_model, export_embeddings, linear_evaluate, mean_bootstrap_ci, Metric, MetricsReport, CONFIDENCE_LEVEL,
};
use selfhar::model::{load_weights, InferenceDescriptor, ModelParameters};
use selfhar::pipeline::{
    limited_data_sweep, parallel_map, run_configuration, write_sweep_csv, Configuration, FitOptions, PipelineData,
    RunOutcome, SweepData, SweepRow, SWEEP_CONFIGURATIONS,
};
use selfhar::rng::derive_seed;
use selfhar::{Error, Result};

use crate::config::{Purpose, RunConfig};
use crate::data::{labeled_sampling_rate, labeled_train, prepare};

/// Appends a timestamped line to `run.log`; kept apart from the
/// deterministic outputs.
fn log_line(dir: &Path, message: &str) -> Result<()> {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let mut f = OpenOptions::new().create(true).append(true).open(dir.join("run.log"))?;
    writeln!(f, "{secs} {message}")?;
    Ok(())
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn descriptor(prepared: &PreparedData, model: &ModelParameters, sampling_rate_hz: f64) -> InferenceDescriptor {
    InferenceDescriptor {
        architecture: "tpn".into(),
        num_classes: model.num_classes(),
        label_vocabulary: prepared.train.label_vocabulary().to_vec(),
        channel_stats: prepared.stats,
        window_len: prepared.train.windows().first().map_or(0, |w| w.timesteps()),
        sampling_rate_hz,
    }
}

fn linear_report(
    cfg: &RunConfig,
    representation: &ModelParameters,
    train: &Dataset,
    prepared: &PreparedData,
    seed: u64,
) -> Result<MetricsReport> {
    let opts = FitOptions::from_config(&cfg.pipeline, cfg.pipeline.schedule.finetune_epochs, derive_seed(seed, "linear.fit"));
    Ok(linear_evaluate(
        representation,
        train,
        &prepared.validation,
        &prepared.test,
        &opts,
        derive_seed(seed, "linear.head"),
        cfg.n_resamples,
        seed,
    )?
    .report)
}

/// Paths and reports of a finished `run`.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub report: Option<MetricsReport>,
    pub linear_report: Option<MetricsReport>,
    pub baseline_report: Option<MetricsReport>,
    pub parameter_count: usize,
}

/// En-Co-Training on statistical features of the labeled subset and the pool.
pub fn baseline_report(
    enco: &EnCoConfig,
    train: &Dataset,
    unlabeled: Option<&Dataset>,
    test: &Dataset,
    n_resamples: usize,
    seed: u64,
) -> Result<MetricsReport> {
    let to_rows = |d: &Dataset| -> Result<Vec<Vec<f64>>> {
        Ok(extract_dataset_features(d)?.into_iter().map(|f| f.to_vec()).collect())
    };
    let u = match unlabeled {
        Some(u) => to_rows(u)?,
        None => Vec::new(),
    };
    let k = train.num_classes();
    let outcome = en_co_train(&to_rows(train)?, &train.labels(), &u, k, enco)?;
    let predicted: Vec<usize> = to_rows(test)?.iter().map(|x| outcome.ensemble.predict(x)).collect();
    MetricsReport::compute(&test.labels(), &predicted, k, n_resamples, seed)
}

/// Runs `pipeline.configuration` once and writes the run directory.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate(Purpose::Run)?;
    let seed = cfg.pipeline.seed;
    let needs_u = cfg.pipeline.configuration.needs_unlabeled() || cfg.baseline.is_some();
    let prepared = prepare(cfg, needs_u && cfg.unlabeled.is_some())?;
    let train = labeled_train(cfg, &prepared, seed)?;
    let dir = cfg.run_dir(cfg.pipeline.configuration.name())?;
    fs::create_dir_all(&dir)?;
    log_line(&dir, "run started")?;
    fs::write(dir.join("config.json"), cfg.to_json()?)?;

    let data = PipelineData {
        train: &train,
        validation: &prepared.validation,
        unlabeled: prepared.unlabeled.as_ref(),
    };
    let outcome = run_configuration(&cfg.pipeline, &data, None)?;
    outcome.write_artifacts(&dir)?;
    descriptor(&prepared, &outcome.final_model, labeled_sampling_rate(cfg)?).save(&dir.join("descriptor.json"))?;

    let report = if cfg.protocol.standard() {
        let r = evaluate_model(&outcome.final_model, &prepared.test, cfg.n_resamples, seed)?;
        r.save(&dir.join("report.json"))?;
        Some(r)
    } else {
        None
    };
    let linear = if cfg.protocol.linear() {
        let r = linear_report(cfg, outcome.representation(), &train, &prepared, seed)?;
        r.save(&dir.join("linear_report.json"))?;
        Some(r)
    } else {
        None
    };
    let baseline = match &cfg.baseline {
        Some(enco) => {
            let r = baseline_report(enco, &train, prepared.unlabeled.as_ref(), &prepared.test, cfg.n_resamples, seed)?;
            r.save(&dir.join("baseline_report.json"))?;
            Some(r)
        }
        None => None,
    };
    log_line(&dir, "run finished")?;
    info!("wrote {}", dir.display());
    Ok(RunSummary {
        dir,
        report,
        linear_report: linear,
        baseline_report: baseline,
        parameter_count: outcome.final_model.parameter_count(),
    })
}

/// Standard and linear scores of every configuration for one seed. Self
/// training and SelfHAR reuse the fully supervised model as their teacher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub seed: u64,
    pub configuration: Configuration,
    pub standard: MetricsReport,
    pub linear: MetricsReport,
    pub parameter_count: usize,
}

fn ablation_seed(cfg: &RunConfig, prepared: &PreparedData, seed: u64, dir: &Path) -> Result<Vec<AblationCell>> {
    let train = labeled_train(cfg, prepared, seed)?;
    let data = PipelineData {
        train: &train,
        validation: &prepared.validation,
        unlabeled: prepared.unlabeled.as_ref(),
    };
    let cell_dir = dir.join(format!("seed-{seed}"));
    fs::create_dir_all(&cell_dir)?;
    let mut teacher: Option<ModelParameters> = None;
    let mut cells = Vec::new();
    for conf in Configuration::ALL {
        let run_cfg = cfg.with_configuration(conf, seed);
        let reuse = matches!(conf, Configuration::SelfTraining | Configuration::SelfHar);
        let outcome: RunOutcome = run_configuration(&run_cfg.pipeline, &data, if reuse { teacher.as_ref() } else { None })?;
        let standard = evaluate_model(&outcome.final_model, &prepared.test, cfg.n_resamples, seed)?;
        let linear = linear_report(cfg, outcome.representation(), &train, prepared, seed)?;
        let conf_dir = cell_dir.join(conf.name());
        fs::create_dir_all(&conf_dir)?;
        standard.save(&conf_dir.join("report.json"))?;
        linear.save(&conf_dir.join("linear_report.json"))?;
        cells.push(AblationCell {
            seed,
            configuration: conf,
            standard,
            linear,
            parameter_count: outcome.final_model.parameter_count(),
        });
        if conf == Configuration::FullySupervised {
            teacher = Some(outcome.final_model);
        }
    }
    Ok(cells)
}

/// One line of an aggregated table: mean of per-seed point estimates with a
/// percentile-bootstrap interval of that mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub column: String,
    pub protocol: String,
    pub metric: Metric,
    pub seeds: Vec<u64>,
    pub scores: Vec<f64>,
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub parameter_count: Option<usize>,
}

fn table_row(
    column: &str,
    protocol: &str,
    metric: Metric,
    seeds: Vec<u64>,
    scores: Vec<f64>,
    parameter_count: Option<usize>,
    n_resamples: usize,
    seed: u64,
) -> Result<TableRow> {
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    let ci = mean_bootstrap_ci(&scores, n_resamples, CONFIDENCE_LEVEL, seed)?;
    Ok(TableRow {
        column: column.to_string(),
        protocol: protocol.to_string(),
        metric,
        seeds,
        scores,
        mean,
        ci_lo: ci.lo,
        ci_hi: ci.hi,
        parameter_count,
    })
}

pub fn write_table_csv(rows: &[TableRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["column", "protocol", "metric", "mean", "ci_lo", "ci_hi", "parameter_count", "seeds", "scores"])?;
    for r in rows {
        w.write_record([
            r.column.clone(),
            r.protocol.clone(),
            r.metric.name().to_string(),
            r.mean.to_string(),
            r.ci_lo.to_string(),
            r.ci_hi.to_string(),
            r.parameter_count.map(|p| p.to_string()).unwrap_or_default(),
            r.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(";"),
            r.scores.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<TableRow>,
    pub cells: Vec<AblationCell>,
}

/// All five configurations × seeds under the standard and linear protocols.
pub fn cmd_ablate(cfg: &RunConfig, jobs: usize) -> Result<(PathBuf, AblationTable)> {
    cfg.validate(Purpose::Study)?;
    let prepared = prepare(cfg, true)?;
    let dir = cfg.run_dir("ablate")?;
    fs::create_dir_all(&dir)?;
    log_line(&dir, "ablation started")?;
    fs::write(dir.join("config.json"), cfg.to_json()?)?;
    let per_seed = parallel_map(&cfg.seeds, jobs, |&seed| ablation_seed(cfg, &prepared, seed, &dir))?;
    let cells: Vec<AblationCell> = per_seed.into_iter().flatten().collect();
    let mut rows = Vec::new();
    for conf in Configuration::ALL {
        let of_conf: Vec<&AblationCell> = cells.iter().filter(|c| c.configuration == conf).collect();
        let seeds: Vec<u64> = of_conf.iter().map(|c| c.seed).collect();
        let params = of_conf.first().map(|c| c.parameter_count);
        for (protocol, pick) in [
            ("standard", (|c: &AblationCell| c.standard.weighted_f1.point) as fn(&AblationCell) -> f64),
            ("linear", |c: &AblationCell| c.linear.weighted_f1.point),
        ] {
            let scores = of_conf.iter().map(|c| pick(c)).collect();
            rows.push(table_row(
                conf.name(),
                protocol,
                Metric::WeightedF1,
                seeds.clone(),
                scores,
                params,
                cfg.n_resamples,
                cfg.pipeline.seed,
            )?);
        }
    }
    let table = AblationTable { rows, cells };
    write_table_csv(&table.rows, &dir.join("ablation.csv"))?;
    write_json(&table, &dir.join("ablation.json"))?;
    log_line(&dir, "ablation finished")?;
    Ok((dir, table))
}

/// Label-budget sweep over FullySupervised, TransformationDiscrimination and
/// SelfHAR.
pub fn cmd_limited(cfg: &RunConfig, jobs: usize) -> Result<(PathBuf, Vec<SweepRow>)> {
    cfg.validate(Purpose::Study)?;
    let prepared = prepare(cfg, true)?;
    let dir = cfg.run_dir("limited")?;
    fs::create_dir_all(&dir)?;
    log_line(&dir, "sweep started")?;
    fs::write(dir.join("config.json"), cfg.to_json()?)?;
    let data = SweepData {
        train_pool: &prepared.train,
        validation: &prepared.validation,
        test: &prepared.test,
        unlabeled: prepared.unlabeled.as_ref().expect("validated"),
    };
    let rows = limited_data_sweep(&cfg.pipeline, &data, &cfg.n_per_class, &cfg.seeds, &SWEEP_CONFIGURATIONS, jobs)?;
    write_sweep_csv(&rows, &dir.join("limited.csv"))?;
    write_json(&rows, &dir.join("limited.json"))?;
    log_line(&dir, "sweep finished")?;
    Ok((dir, rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityCell {
    pub seed: u64,
    pub column: String,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityTable {
    pub columns: Vec<String>,
    pub subset_sizes: Vec<(String, usize)>,
    pub rows: Vec<TableRow>,
    pub cells: Vec<IntensityCell>,
}

pub const INTENSITY_BASELINE_COLUMN: &str = "fully_supervised";

/// SelfHAR pre-trained on inactive, balanced and active unlabeled subsets of
/// equal size, next to the fully supervised baseline.
pub fn cmd_intensity_study(cfg: &RunConfig, jobs: usize) -> Result<(PathBuf, IntensityTable)> {
    cfg.validate(Purpose::Study)?;
    let prepared = prepare(cfg, true)?;
    let pool = prepared.unlabeled.as_ref().expect("validated");
    let target = cfg.intensity_subset_size.unwrap_or(pool.len() / 3 / 3 * 3);
    if target == 0 || target > pool.len() {
        return Err(Error::config(format!(
            "intensity_subset_size: {target} is not feasible for a pool of {}",
            pool.len()
        )));
    }
    let subsets: Vec<(IntensityMode, Dataset)> = IntensityMode::ALL
        .iter()
        .map(|&m| Ok((m, subset_by_intensity(pool, m, target)?)))
        .collect::<Result<_>>()?;
    let dir = cfg.run_dir("intensity")?;
    fs::create_dir_all(&dir)?;
    log_line(&dir, "intensity study started")?;
    fs::write(dir.join("config.json"), cfg.to_json()?)?;

    let per_seed = parallel_map(&cfg.seeds, jobs, |&seed| -> Result<Vec<IntensityCell>> {
        let train = labeled_train(cfg, &prepared, seed)?;
        let base = PipelineData {
            train: &train,
            validation: &prepared.validation,
            unlabeled: None,
        };
        let fs_cfg = cfg.with_configuration(Configuration::FullySupervised, seed);
        let teacher = run_configuration(&fs_cfg.pipeline, &base, None)?.final_model;
        let mut cells = vec![IntensityCell {
            seed,
            column: INTENSITY_BASELINE_COLUMN.into(),
            report: evaluate_model(&teacher, &prepared.test, cfg.n_resamples, seed)?,
        }];
        let sh_cfg = cfg.with_configuration(Configuration::SelfHar, seed);
        for (mode, subset) in &subsets {
            let data = PipelineData {
                unlabeled: Some(subset),
                ..base
            };
            let outcome = run_configuration(&sh_cfg.pipeline, &data, Some(&teacher))?;
            cells.push(IntensityCell {
                seed,
                column: mode.name().into(),
                report: evaluate_model(&outcome.final_model, &prepared.test, cfg.n_resamples, seed)?,
            });
        }
        Ok(cells)
    })?;
    let cells: Vec<IntensityCell> = per_seed.into_iter().flatten().collect();
    let columns: Vec<String> = std::iter::once(INTENSITY_BASELINE_COLUMN.to_string())
        .chain(IntensityMode::ALL.iter().map(|m| m.name().to_string()))
        .collect();
    let mut rows = Vec::new();
    for col in &columns {
        let of_col: Vec<&IntensityCell> = cells.iter().filter(|c| &c.column == col).collect();
        for metric in Metric::ALL {
            rows.push(table_row(
                col,
                "standard",
                metric,
                of_col.iter().map(|c| c.seed).collect(),
                of_col.iter().map(|c| c.report.metric(metric).point).collect(),
                None,
                cfg.n_resamples,
                cfg.pipeline.seed,
            )?);
        }
    }
    let table = IntensityTable {
        columns,
        subset_sizes: subsets.iter().map(|(m, d)| (m.name().to_string(), d.len())).collect(),
        rows,
        cells,
    };
    write_table_csv(&table.rows, &dir.join("intensity.csv"))?;
    write_json(&table, &dir.join("intensity.json"))?;
    log_line(&dir, "intensity study finished")?;
    Ok((dir, table))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Partition {
    Train,
    Validation,
    Test,
    Unlabeled,
}

fn partition(prepared: &PreparedData, which: Partition) -> Result<&Dataset> {
    Ok(match which {
        Partition::Train => &prepared.train,
        Partition::Validation => &prepared.validation,
        Partition::Test => &prepared.test,
        Partition::Unlabeled => prepared
            .unlabeled
            .as_ref()
            .ok_or_else(|| Error::config("unlabeled: no unlabeled source configured"))?,
    })
}

/// Pooled core features of one partition for external projection.
pub fn cmd_export_embeddings(cfg: &RunConfig, weights: &Path, which: Partition, out: &Path) -> Result<usize> {
    cfg.validate(Purpose::LabeledOnly)?;
    let prepared = prepare(cfg, which == Partition::Unlabeled)?;
    let model = load_weights(weights)?;
    let ds = partition(&prepared, which)?;
    export_embeddings(&model, ds, out)?;
    Ok(ds.len())
}

/// Scores saved weights on the test partition.
pub fn cmd_eval(cfg: &RunConfig, weights: &Path, out: &Path) -> Result<MetricsReport> {
    cfg.validate(Purpose::LabeledOnly)?;
    let prepared = prepare(cfg, false)?;
    let model = load_weights(weights)?;
    let report = evaluate_model(&model, &prepared.test, cfg.n_resamples, cfg.pipeline.seed)?;
    report.save(out)?;
    Ok(report)
}

/// Writes `labeled.csv` and, when requested, `unlabeled.csv`.
pub fn cmd_synth_gen(cfg: &SynthConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let (labeled, unlabeled) = synthesize_recordings(cfg)?;
    fs::create_dir_all(out)?;
    let mut written = vec![out.join("labeled.csv")];
    export_csv(&labeled, &written[0])?;
    if !unlabeled.is_empty() {
        written.push(out.join("unlabeled.csv"));
        export_csv(&unlabeled, &written[1])?;
    }
    Ok(written)
}
