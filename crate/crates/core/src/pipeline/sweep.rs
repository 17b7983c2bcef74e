use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{run_configuration, Configuration, PipelineConfig, PipelineData};
use crate::datakit::{subsample_labeled, Dataset};
use crate::evalkit::{predict_labels, weighted_f1};
use crate::rng::derive_seed;
use crate::{Error, Result};

/// Configurations compared in the limited-label sweep.
pub const SWEEP_CONFIGURATIONS: [Configuration; 3] = [
    Configuration::FullySupervised,
    Configuration::TransformationDiscrimination,
    Configuration::SelfHar,
];

/// Applies `f` to every item using up to `jobs` scoped threads; results keep
/// input order and the first error wins.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> Result<R> + Sync) -> Result<Vec<R>> {
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<R>>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().expect("result lock")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("result lock")
        .into_iter()
        .map(|r| r.expect("every item processed"))
        .collect()
}

/// Data shared by every sweep cell. The test set is fixed across cells.
#[derive(Debug, Clone, Copy)]
pub struct SweepData<'a> {
    pub train_pool: &'a Dataset,
    pub validation: &'a Dataset,
    pub test: &'a Dataset,
    pub unlabeled: &'a Dataset,
}

/// Test-set weighted F1 of each configuration for one (n, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellScores {
    pub n_per_class: usize,
    pub seed: u64,
    pub scores: Vec<(Configuration, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_per_class: usize,
    pub configuration: Configuration,
    pub seeds: Vec<u64>,
    pub scores: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (0 for a single seed).
    pub std: f64,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Runs `configurations` for one labeled subsample. Configurations whose
/// teacher is the plain supervised model reuse the FullySupervised result.
pub fn run_cell(
    template: &PipelineConfig,
    data: &SweepData,
    configurations: &[Configuration],
    n_per_class: usize,
    seed: u64,
) -> Result<CellScores> {
    let labeled = subsample_labeled(data.train_pool, n_per_class, derive_seed(seed, "subsample"))?;
    let pdata = PipelineData {
        train: &labeled,
        validation: data.validation,
        unlabeled: Some(data.unlabeled),
    };
    let truth = data.test.labels();
    let k = data.test.num_classes();
    let mut teacher = None;
    let mut scores = Vec::new();
    for &conf in configurations {
        let cfg = PipelineConfig {
            configuration: conf,
            seed,
            ..*template
        };
        let reuse = matches!(conf, Configuration::SelfTraining | Configuration::SelfHar);
        let outcome = run_configuration(&cfg, &pdata, if reuse { teacher.as_ref() } else { None })?;
        let pred = predict_labels(&outcome.final_model, data.test)?;
        scores.push((conf, weighted_f1(&truth, &pred, k)?));
        if conf == Configuration::FullySupervised {
            teacher = Some(outcome.final_model);
        }
    }
    Ok(CellScores {
        n_per_class,
        seed,
        scores,
    })
}

/// Summarizes cells into one row per (n, configuration).
pub fn aggregate_cells(cells: &[CellScores], n_list: &[usize], configurations: &[Configuration]) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    for &n in n_list {
        for &conf in configurations {
            let mut seeds = Vec::new();
            let mut scores = Vec::new();
            for c in cells.iter().filter(|c| c.n_per_class == n) {
                if let Some((_, s)) = c.scores.iter().find(|(k, _)| *k == conf) {
                    seeds.push(c.seed);
                    scores.push(*s);
                }
            }
            if scores.is_empty() {
                continue;
            }
            let (mean, std) = mean_std(&scores);
            rows.push(SweepRow {
                n_per_class: n,
                configuration: conf,
                seeds,
                scores,
                mean,
                std,
            });
        }
    }
    rows
}

/// Every (n, seed) cell of the limited-label protocol.
pub fn limited_data_sweep(
    template: &PipelineConfig,
    data: &SweepData,
    n_list: &[usize],
    seeds: &[u64],
    configurations: &[Configuration],
    jobs: usize,
) -> Result<Vec<SweepRow>> {
    if n_list.is_empty() || seeds.is_empty() || configurations.is_empty() {
        return Err(Error::config("sweep needs at least one n, one seed and one configuration"));
    }
    template.validate()?;
    let cells: Vec<(usize, u64)> = n_list.iter().flat_map(|&n| seeds.iter().map(move |&s| (n, s))).collect();
    let results = parallel_map(&cells, jobs, |&(n, seed)| run_cell(template, data, configurations, n, seed))?;
    Ok(aggregate_cells(&results, n_list, configurations))
}

/// `n_per_class,configuration,mean,std,seeds,scores` with `;`-joined lists.
pub fn write_sweep_csv(rows: &[SweepRow], path: &std::path::Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["n_per_class", "configuration", "mean", "std", "seeds", "scores"])?;
    for r in rows {
        let join = |v: Vec<String>| v.join(";");
        w.write_record([
            r.n_per_class.to_string(),
            r.configuration.name().to_string(),
            r.mean.to_string(),
            r.std.to_string(),
            join(r.seeds.iter().map(|s| s.to_string()).collect()),
            join(r.scores.iter().map(|s| s.to_string()).collect()),
        ])?;
    }
    w.flush()?;
    Ok(())
}
