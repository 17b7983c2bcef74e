use selfhar::datakit::{
    ingest_csv, prepare_datasets, segment, subsample_labeled, synthesize, vocabulary_of, Dataset, PreparedData,
    Role, WINDOW_LEN, WINDOW_OVERLAP,
};
use selfhar::rng::derive_seed;
use selfhar::{Error, Result};

use crate::config::{DataSource, RunConfig};

fn load_csv_windows(path: &std::path::Path, vocabulary: Option<&[String]>) -> Result<Dataset> {
    let recordings = ingest_csv(path)?;
    let vocab = match vocabulary {
        Some(v) => v.to_vec(),
        None => vocabulary_of(&recordings),
    };
    let mut windows = Vec::new();
    for r in &recordings {
        windows.extend(segment(r, &vocab, WINDOW_LEN, WINDOW_OVERLAP)?);
    }
    let role = if vocabulary.is_none() { Role::Labeled } else { Role::Unlabeled };
    if role == Role::Unlabeled {
        windows.iter_mut().for_each(|w| w.label = None);
    } else if windows.is_empty() {
        return Err(Error::data(format!("{}: no labeled windows", path.display())));
    }
    Dataset::new(windows, vocab, role)
}

/// Raw-unit labeled and unlabeled datasets named by the config.
pub fn load_sources(cfg: &RunConfig, want_unlabeled: bool) -> Result<(Dataset, Option<Dataset>)> {
    let labeled_src = cfg.labeled_source()?;
    let unlabeled_src = if want_unlabeled { cfg.unlabeled_source()? } else { None };
    let mut synth_cache: Option<(selfhar::datakit::SynthConfig, (Dataset, Dataset))> = None;
    let mut synth = |c: &selfhar::datakit::SynthConfig| -> Result<(Dataset, Dataset)> {
        if let Some((cached_cfg, data)) = &synth_cache {
            if cached_cfg == c {
                return Ok(data.clone());
            }
        }
        let data = synthesize(c)?;
        synth_cache = Some((c.clone(), data.clone()));
        Ok(data)
    };
    let labeled = match &labeled_src {
        DataSource::Csv(p) => load_csv_windows(p, None)?,
        DataSource::Synthetic(c) => synth(c)?.0,
    };
    let unlabeled = match &unlabeled_src {
        None => None,
        Some(DataSource::Csv(p)) => Some(load_csv_windows(p, Some(labeled.label_vocabulary()))?),
        Some(DataSource::Synthetic(c)) => {
            let u = synth(c)?.1;
            if u.label_vocabulary() != labeled.label_vocabulary() {
                return Err(Error::config("unlabeled: synthetic class count differs from the labeled source"));
            }
            Some(u)
        }
    };
    if let Some(u) = &unlabeled {
        if u.is_empty() {
            return Err(Error::data("unlabeled: source produced no windows"));
        }
    }
    Ok((labeled, unlabeled))
}

/// Loaded, user-split and normalized data for a config.
pub fn prepare(cfg: &RunConfig, want_unlabeled: bool) -> Result<PreparedData> {
    let (labeled, unlabeled) = load_sources(cfg, want_unlabeled)?;
    prepare_datasets(&labeled, unlabeled.as_ref(), &cfg.split)
}

/// Training labels available to one run: the full training partition, or a
/// per-class subsample seeded by the run seed.
pub fn labeled_train(cfg: &RunConfig, prepared: &PreparedData, seed: u64) -> Result<Dataset> {
    match cfg.labels_per_class {
        Some(n) => subsample_labeled(&prepared.train, n, derive_seed(seed, "subsample")),
        None => Ok(prepared.train.clone()),
    }
}

/// Sampling rate of the labeled source: the generator setting, or the median
/// of the per-recording estimates of a CSV file.
pub fn labeled_sampling_rate(cfg: &RunConfig) -> Result<f64> {
    match cfg.labeled_source()? {
        DataSource::Synthetic(c) => Ok(c.sampling_rate_hz),
        DataSource::Csv(p) => {
            let mut rates: Vec<f64> = ingest_csv(&p)?.iter().map(|r| r.sampling_rate_hz).collect();
            if rates.is_empty() {
                return Err(Error::data(format!("{}: no recordings", p.display())));
            }
            rates.sort_by(f64::total_cmp);
            Ok(rates[rates.len() / 2])
        }
    }
}
