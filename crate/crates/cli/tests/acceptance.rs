//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any hard criterion fails.
//!
//! `cargo test -p selfhar-cli --test acceptance -- 3 8` runs a subset.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::Rng;

use selfhar::baselines::{en_co_train, extract_features, Classifier, EnCoConfig, Ensemble, FEATURE_COUNT};
use selfhar::datakit::{
    intensity_proxy, prepare_datasets, synthesize, Dataset, Role, SplitSpec, SynthConfig, Window, CHANNELS,
};
use selfhar::evalkit::{
    bootstrap_ci, linear_evaluate, resample_indices, Metric, MetricsReport, CONFIDENCE_LEVEL,
};
use selfhar::model::{Example, GradientProbe, InitScheme, ModelParameters};
use selfhar::ndtensor::{
    adam_step, conv1d_backward, conv1d_forward, dense_backward, dense_forward, finite_difference_check,
    global_max_pool, global_max_pool_backward, AdamConfig, AdamState, RegularizationConfig, Tensor,
};
use selfhar::pipeline::{
    finetune_student, limited_data_sweep, select_confident, self_label_and_select, Configuration, FitOptions,
    PipelineConfig, PipelineData, SelectionPolicy, SweepData,
};
use selfhar::rng;
use selfhar::signals::{apply_transform, build_multitask_dataset, TransformKind, TransformParams};
use selfhar_cli::{cmd_ablate, cmd_intensity_study, RunConfig, INTENSITY_BASELINE_COLUMN};

type Check = std::result::Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: std::result::Result<T, E>) -> std::result::Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn random_values(r: &mut impl Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| r.random_range(-scale..scale)).collect()
}

fn tiny_synth() -> SynthConfig {
    SynthConfig {
        classes: 3,
        users: 8,
        windows_per_user_per_class: 8,
        unlabeled_users: 3,
        unlabeled_windows_per_user: 30,
        noise_std: 0.1,
        window_len: 64,
        seed: 11,
        ..SynthConfig::default()
    }
}

fn synth_spec(c: &SynthConfig) -> String {
    format!(
        "synthetic:classes={},users={},windows_per_user_per_class={},unlabeled_users={},unlabeled_windows_per_user={},noise_std={},window_len={},seed={}",
        c.classes, c.users, c.windows_per_user_per_class, c.unlabeled_users, c.unlabeled_windows_per_user, c.noise_std, c.window_len, c.seed
    )
}

fn tiny_run_config(out: &Path) -> RunConfig {
    let spec = synth_spec(&tiny_synth());
    let mut cfg = RunConfig {
        labeled: Some(spec.clone()),
        unlabeled: Some(spec),
        n_resamples: 200,
        out: out.to_path_buf(),
        ..RunConfig::default()
    };
    cfg.split.test_user_fraction = 0.25;
    cfg.pipeline.schedule.teacher_epochs = 4;
    cfg.pipeline.schedule.pretrain_epochs = 1;
    cfg.pipeline.schedule.finetune_epochs = 2;
    cfg.pipeline.schedule.batch_size = 16;
    cfg
}

/// Settings of the synthetic limited-label benchmark shared by the trend and
/// intensity criteria.
fn benchmark_pipeline() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.selection.per_class_cap = 100;
    cfg.schedule.pretrain_epochs = 2;
    cfg
}

fn core_snapshot(m: &ModelParameters, prefixes: &[&str]) -> BTreeMap<String, Vec<u64>> {
    m.parameters()
        .into_iter()
        .filter(|p| prefixes.iter().any(|pre| p.name.starts_with(pre)))
        .map(|p| (p.name.clone(), p.value.data().iter().map(|v| v.to_bits()).collect()))
        .collect()
}

// 1 ---------------------------------------------------------------------------

fn gradient_correctness() -> Check {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let (mut checked, mut skipped) = (0, 0);
    for seed in 0..100u64 {
        let mut r = rng::seeded(seed);
        let model = ok(ModelParameters::multitask(3, InitScheme::GlorotUniform, seed % 2 == 1, seed))?;
        let mut probe = GradientProbe {
            model,
            regularization: RegularizationConfig::default(),
        };
        let len = 48 + (seed as usize % 5);
        let x = random_values(&mut r, len * CHANNELS, 2.0);
        let mut soft: Vec<f64> = (0..3).map(|_| r.random_range(0.05..1.0)).collect();
        let total: f64 = soft.iter().sum();
        soft.iter_mut().for_each(|v| *v /= total);
        let mut td = [0.0; 8];
        if seed % 9 != 0 {
            td[r.random_range(0..8)] = 1.0;
        }
        let report = ok(finite_difference_check(&mut probe, &x, &(Some(soft), Some(td)), 1e-5, Some(16)))?;
        ensure!(
            report.max_relative_error < 1e-4,
            "seed {seed}: max relative error {:.3e} at {:?}",
            report.max_relative_error,
            report.worst
        );
        worst = worst.max(report.max_relative_error);
        checked += report.checked;
        skipped += report.skipped;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 120.0, "took {secs:.1}s, budget 120s");
    Ok(format!(
        "100 seeds, input 48-52 x 3, worst rel err {worst:.2e}, {checked} probes ({skipped} skipped at kinks), {secs:.1}s"
    ))
}

// 2 ---------------------------------------------------------------------------

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

fn layer_oracles() -> Check {
    const TOL: f64 = 1e-12;
    let mut r = rng::seeded(2024);
    for case in 0..1000 {
        let time = r.random_range(1..24usize);
        let ch = r.random_range(1..5usize);
        let filters = r.random_range(1..7usize);
        let width = r.random_range(1..=time);
        let out_t = time - width + 1;
        let x = random_values(&mut r, time * ch, 1.0);
        let k = random_values(&mut r, filters * width * ch, 1.0);
        let b = random_values(&mut r, filters, 1.0);
        let g = random_values(&mut r, out_t * filters, 1.0);

        let mut y = vec![0.0; out_t * filters];
        let mut dk = vec![0.0; k.len()];
        let mut db = vec![0.0; filters];
        let mut dx = vec![0.0; x.len()];
        for t in 0..out_t {
            for f in 0..filters {
                let mut acc = b[f];
                for w in 0..width {
                    for c in 0..ch {
                        let kidx = (f * width + w) * ch + c;
                        let xidx = (t + w) * ch + c;
                        acc += x[xidx] * k[kidx];
                        dk[kidx] += g[t * filters + f] * x[xidx];
                        dx[xidx] += g[t * filters + f] * k[kidx];
                    }
                }
                y[t * filters + f] = acc;
                db[f] += g[t * filters + f];
            }
        }
        let xt = ok(Tensor::new(vec![time, ch], x.clone()))?;
        let kt = ok(Tensor::new(vec![filters, width, ch], k.clone()))?;
        let bt = ok(Tensor::vector(b.clone()))?;
        let gt = ok(Tensor::new(vec![out_t, filters], g.clone()))?;
        let fwd = ok(conv1d_forward(&xt, &kt, &bt))?;
        ensure!(fwd.shape() == [out_t, filters] && close(fwd.data(), &y, TOL), "case {case}: conv forward");
        let bw = ok(conv1d_backward(&xt, &kt, &gt))?;
        ensure!(close(bw.weights.data(), &dk, TOL), "case {case}: conv kernel gradient");
        ensure!(close(bw.bias.data(), &db, TOL), "case {case}: conv bias gradient");
        let dxi = bw.input.ok_or("conv input gradient missing")?;
        ensure!(close(dxi.data(), &dx, TOL), "case {case}: conv input gradient");

        // dense
        let (m, n) = (r.random_range(1..12usize), r.random_range(1..12usize));
        let w = random_values(&mut r, m * n, 1.0);
        let v = random_values(&mut r, n, 1.0);
        let bias = random_values(&mut r, m, 1.0);
        let up = random_values(&mut r, m, 1.0);
        let mut out = bias.clone();
        let mut dw = vec![0.0; m * n];
        let mut dv = vec![0.0; n];
        for i in 0..m {
            for j in 0..n {
                out[i] += w[i * n + j] * v[j];
                dw[i * n + j] = up[i] * v[j];
                dv[j] += w[i * n + j] * up[i];
            }
        }
        let wt = ok(Tensor::new(vec![m, n], w))?;
        let vt = ok(Tensor::vector(v))?;
        let ut = ok(Tensor::vector(up.clone()))?;
        let d = ok(dense_forward(&vt, &wt, &ok(Tensor::vector(bias))?))?;
        ensure!(close(d.data(), &out, TOL), "case {case}: dense forward");
        let dg = ok(dense_backward(&vt, &wt, &ut))?;
        ensure!(close(dg.weights.data(), &dw, TOL), "case {case}: dense weight gradient");
        ensure!(close(dg.bias.data(), &up, TOL), "case {case}: dense bias gradient");
        ensure!(close(dg.input.ok_or("dense input gradient missing")?.data(), &dv, TOL), "case {case}: dense input gradient");

        // global max pool, with ties drawn from a small value set
        let pool_in: Vec<f64> = (0..time * filters).map(|_| r.random_range(0..4) as f64).collect();
        let pg = random_values(&mut r, filters, 1.0);
        let mut best = vec![f64::NEG_INFINITY; filters];
        let mut arg = vec![0usize; filters];
        for t in 0..time {
            for f in 0..filters {
                if pool_in[t * filters + f] > best[f] {
                    best[f] = pool_in[t * filters + f];
                    arg[f] = t;
                }
            }
        }
        let mut pdx = vec![0.0; time * filters];
        for f in 0..filters {
            pdx[arg[f] * filters + f] = pg[f];
        }
        let (pooled, idx) = ok(global_max_pool(&ok(Tensor::new(vec![time, filters], pool_in))?))?;
        ensure!(close(pooled.data(), &best, 0.0) && idx == arg, "case {case}: max pool forward");
        let back = ok(global_max_pool_backward(&idx, &ok(Tensor::vector(pg))?, time))?;
        ensure!(close(back.data(), &pdx, 0.0), "case {case}: max pool backward");
    }
    Ok("1000 random shapes: conv, dense, max-pool forward and backward within 1e-12".into())
}

// 3 ---------------------------------------------------------------------------

fn transformation_properties() -> Check {
    let start = Instant::now();
    let params = TransformParams::default();
    let mut r = rng::seeded(3);
    for case in 0..300 {
        let t = r.random_range(8..120usize);
        let w = ok(Window::new(random_values(&mut r, t * CHANNELS, 3.0), "u", Some(0)))?;
        let x = w.values();
        for kind in TransformKind::ALL {
            let y = ok(apply_transform(&w, kind, &params, &mut r))?;
            ensure!(y.timesteps() == t, "case {case}: {} changed the shape", kind.name());
            let yv = y.values();
            match kind {
                TransformKind::Invert | TransformKind::TimeReverse => {
                    let z = ok(apply_transform(&y, kind, &params, &mut r))?;
                    ensure!(z.values() == x, "case {case}: {} is not an involution", kind.name());
                }
                TransformKind::Rotate3D => {
                    for (a, b) in x.chunks_exact(3).zip(yv.chunks_exact(3)) {
                        let na = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
                        let nb = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
                        ensure!((na - nb).abs() <= 1e-9, "case {case}: rotation changed a norm by {}", (na - nb).abs());
                    }
                }
                TransformKind::Scramble => {
                    let key = |v: &[f64]| -> Vec<[u64; 3]> {
                        let mut rows: Vec<[u64; 3]> =
                            v.chunks_exact(3).map(|s| [s[0].to_bits(), s[1].to_bits(), s[2].to_bits()]).collect();
                        rows.sort_unstable();
                        rows
                    };
                    ensure!(key(x) == key(yv), "case {case}: scramble is not a row permutation");
                }
                TransformKind::ChannelShuffle => {
                    let column = |v: &[f64], c: usize| -> Vec<u64> { v.iter().skip(c).step_by(3).map(|f| f.to_bits()).collect() };
                    let mut src: Vec<Vec<u64>> = (0..3).map(|c| column(x, c)).collect();
                    let mut dst: Vec<Vec<u64>> = (0..3).map(|c| column(yv, c)).collect();
                    src.sort();
                    dst.sort();
                    ensure!(src == dst, "case {case}: channel shuffle is not a column permutation");
                }
                _ => {}
            }
        }
    }

    let k = 4;
    let windows: Vec<Window> = (0..25)
        .map(|i| {
            let mut w = Window::new(random_values(&mut r, 64 * CHANNELS, 1.0), format!("u{i}"), None).unwrap();
            let mut p: Vec<f64> = (0..k).map(|_| r.random_range(0.01..1.0)).collect();
            let s: f64 = p.iter().sum();
            p.iter_mut().for_each(|v| *v /= s);
            w.soft_label = Some(p);
            w
        })
        .collect();
    let vocab = (0..k).map(|c| format!("c{c}")).collect();
    let selected = ok(Dataset::new(windows, vocab, Role::Selected))?;
    let records = ok(build_multitask_dataset(&selected, &params, 5))?;
    ensure!(records.len() == 9 * selected.len(), "{} records for {} windows", records.len(), selected.len());
    for (i, group) in records.chunks_exact(9).enumerate() {
        let src = &selected.windows()[i];
        let mut seen = [0usize; 8];
        let mut originals = 0;
        for rec in group {
            let flags: u32 = rec.transform_labels.iter().map(|&f| u32::from(f)).sum();
            ensure!(flags <= 1, "window {i}: record with {flags} flags");
            ensure!(rec.har_soft_label == src.soft_label, "window {i}: soft label not copied");
            match ok(rec.kind())? {
                None => {
                    originals += 1;
                    ensure!(rec.window.values() == src.values(), "window {i}: original record altered");
                }
                Some(kind) => seen[kind.ordinal()] += 1,
            }
        }
        ensure!(originals == 1 && seen == [1; 8], "window {i}: expected one original and one of each transformation");
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1}s, budget 60s");
    Ok(format!("300 windows x 8 transformations, |D'| = 9|S| on 25 windows, {secs:.1}s"))
}

// 4 ---------------------------------------------------------------------------

/// Independent rescan: for each class, windows whose argmax (lowest index on
/// ties) is that class and whose confidence reaches C, best first.
fn rescan(probs: &[Vec<f64>], k: usize, c: f64, cap: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for class in 0..k {
        let mut members = Vec::new();
        for (i, p) in probs.iter().enumerate() {
            let mut top = 0;
            for j in 1..k {
                if p[j] > p[top] {
                    top = j;
                }
            }
            if top == class && p[class] >= c {
                members.push(i);
            }
        }
        members.sort_by(|&a, &b| probs[b][class].total_cmp(&probs[a][class]).then(a.cmp(&b)));
        out.extend(members.into_iter().take(cap).map(|i| (i, class)));
    }
    out
}

fn adversarial_probs(r: &mut impl Rng, n: usize, k: usize, family: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| match family {
            0 => vec![1.0 / k as f64; k],
            1 => {
                let mut p = vec![0.0; k];
                p[r.random_range(0..k)] = 1.0;
                p
            }
            2 => {
                let eps = [0.0, 1e-15, 1e-12, 1e-9, 1e-6][r.random_range(0..5)];
                let top = if r.random::<bool>() { 0.5 + eps } else { 0.5 - eps };
                let mut p = vec![(1.0 - top) / (k - 1) as f64; k];
                p[r.random_range(0..k)] = top;
                p
            }
            _ => {
                let mut p: Vec<f64> = (0..k).map(|_| r.random::<f64>().powi(3)).collect();
                let s: f64 = p.iter().sum();
                p.iter_mut().for_each(|v| *v /= s);
                p
            }
        })
        .collect()
}

/// A 96-feature-independent teacher whose softmax output is `p` for every input.
fn constant_teacher(p: &[f64]) -> Result<ModelParameters, String> {
    let mut m = ok(ModelParameters::har(p.len(), InitScheme::GlorotUniform, 0))?;
    for param in m.parameters_mut() {
        if param.name == "har.output.weights" {
            param.value.fill(0.0);
        } else if param.name == "har.output.bias" {
            param.value.data_mut().iter_mut().zip(p).for_each(|(b, &v)| *b = v.ln());
        }
    }
    Ok(m)
}

fn selection_soundness() -> Check {
    let mut r = rng::seeded(4);
    let c = 0.5;
    let mut cases = 0;
    for family in 0..4 {
        for _ in 0..100 {
            let k = r.random_range(2..7usize);
            let n = r.random_range(1..150usize);
            let cap = r.random_range(1..20usize);
            let probs = adversarial_probs(&mut r, n, k, family);
            let policy = SelectionPolicy {
                confidence_threshold: c,
                per_class_cap: cap,
                allow_multiclass_selection: false,
            };
            let a = ok(select_confident(&probs, k, &policy))?;
            let b = ok(select_confident(&probs, k, &policy))?;
            ensure!(a == b, "selection is not deterministic");
            let got: Vec<(usize, usize)> = a.iter().map(|s| (s.index, s.class)).collect();
            ensure!(got == rescan(&probs, k, c, cap), "family {family}: selection differs from the rescan oracle");
            ensure!(a.iter().all(|s| s.confidence >= c), "selected below threshold");
            for class in 0..k {
                ensure!(a.iter().filter(|s| s.class == class).count() <= cap, "class {class} exceeds K");
            }
            cases += 1;
        }
    }

    // Whole self-labeling path over constant-output teachers.
    let synth = tiny_synth();
    let (_, pool) = ok(synthesize(&synth))?;
    let pool = ok(pool.strip_labels(Role::Mixed))?;
    let k = synth.classes;
    let outputs: Vec<Vec<f64>> = vec![
        vec![1.0 / 3.0; 3],
        vec![0.5 + 1e-9, 0.25 - 5e-10, 0.25 - 5e-10],
        vec![0.5 - 1e-9, 0.25 + 5e-10, 0.25 + 5e-10],
        vec![0.98, 0.01, 0.01],
    ];
    for p in outputs {
        let teacher = constant_teacher(&p)?;
        let policy = SelectionPolicy {
            per_class_cap: 7,
            ..SelectionPolicy::default()
        };
        let (sel, stats) = ok(self_label_and_select(&teacher, &pool, &policy))?;
        let (sel2, _) = ok(self_label_and_select(&teacher, &pool, &policy))?;
        ensure!(sel == sel2, "self-labeling is not deterministic");
        let probs: Vec<Vec<f64>> = pool
            .windows()
            .iter()
            .map(|w| teacher.predict(w.values()).map(|o| o.class_probs.unwrap()))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let expected = rescan(&probs, k, 0.5, 7);
        ensure!(sel.len() == expected.len(), "teacher {p:?}: {} selected, oracle {}", sel.len(), expected.len());
        ensure!(stats.total_selected() == sel.len(), "selection stats disagree with the selected set");
        for (w, &(i, _)) in sel.windows().iter().zip(&expected) {
            ensure!(w.values() == pool.windows()[i].values(), "selected window order differs from the oracle");
            let soft = w.soft_label.as_ref().ok_or("missing soft label")?;
            ensure!(soft.iter().cloned().fold(0.0, f64::max) >= 0.5, "soft label below threshold");
        }
    }
    Ok(format!("{cases} adversarial output sets and 4 constant teachers match the rescan oracle"))
}

// 5 ---------------------------------------------------------------------------

fn freezing_contract() -> Check {
    let mut r = rng::seeded(5);
    let reg = RegularizationConfig::default();
    let mut model = ok(ModelParameters::multitask(3, InitScheme::GlorotUniform, false, 5))?;
    model.detach_td_heads();
    model.freeze_for_finetune();
    let early = core_snapshot(&model, &["core.conv1.", "core.conv2."]);
    let conv3 = core_snapshot(&model, &["core.conv3."]);
    let mut state = AdamState::new(AdamConfig::default());
    let batch: Vec<(Vec<f64>, Vec<f64>)> = (0..8)
        .map(|i| {
            let mut t = vec![0.0; 3];
            t[i % 3] = 1.0;
            (random_values(&mut r, 80 * CHANNELS, 2.0), t)
        })
        .collect();
    for _ in 0..10 {
        let examples: Vec<Example> = batch
            .iter()
            .map(|(x, t)| Example {
                values: x,
                har: Some(t),
                td: None,
            })
            .collect();
        let (_, mut grads) = ok(model.batch_loss_and_gradients(&examples, true, &mut r))?;
        ok(grads.merge(&model.l2_penalty(&reg).1))?;
        ok(adam_step(model.parameters_mut(), &grads, &mut state))?;
    }
    ensure!(core_snapshot(&model, &["core.conv1.", "core.conv2."]) == early, "conv1-2 changed during fine-tuning");
    ensure!(core_snapshot(&model, &["core.conv3."]) != conv3, "conv3 did not train");

    // Same contract through the pipeline's fine-tuning and linear evaluation.
    let (labeled, _) = ok(synthesize(&tiny_synth()))?;
    let prepared = ok(prepare_datasets(&labeled, None, &SplitSpec {
        test_user_fraction: 0.25,
        ..SplitSpec::default()
    }))?;
    let mut cfg = PipelineConfig::default();
    cfg.schedule.batch_size = 8;
    let student = ok(ModelParameters::multitask(3, InitScheme::GlorotUniform, false, 6))?;
    let mut tuned = student.clone();
    let data = PipelineData {
        train: &prepared.train,
        validation: &prepared.validation,
        unlabeled: None,
    };
    ok(finetune_student(&cfg, &mut tuned, &data, false, 2, "finetune"))?;
    ensure!(
        core_snapshot(&tuned, &["core.conv1.", "core.conv2."]) == core_snapshot(&student, &["core.conv1.", "core.conv2."]),
        "pipeline fine-tuning changed conv1-2"
    );
    let opts = FitOptions::from_config(&cfg, 2, 9);
    let lin = ok(linear_evaluate(&tuned, &prepared.train, &prepared.validation, &prepared.test, &opts, 1, 50, 0))?;
    ensure!(lin.history.epochs.len() == 2, "linear evaluation did not train");
    ensure!(core_snapshot(&lin.model, &["core."]) == core_snapshot(&tuned, &["core."]), "linear evaluation changed the core");
    Ok("conv1-2 bitwise fixed after 10 steps and pipeline fine-tuning; core bitwise fixed after linear evaluation".into())
}

// 6 ---------------------------------------------------------------------------

fn trend_reproduction() -> Check {
    let start = Instant::now();
    let synth = SynthConfig::default();
    let (labeled, unlabeled) = ok(synthesize(&synth))?;
    let prepared = ok(prepare_datasets(&labeled, Some(&unlabeled), &SplitSpec::default()))?;
    let pool = prepared.unlabeled.as_ref().ok_or("no unlabeled pool")?;
    ensure!(
        prepared.train.num_classes() == 6 && pool.len() == 5000 && prepared.test.users().len() == 3,
        "benchmark shape: {} classes, {} test users, {} unlabeled",
        prepared.train.num_classes(),
        prepared.test.users().len(),
        pool.len()
    );
    let train_users = prepared.train.users().len();
    let data = SweepData {
        train_pool: &prepared.train,
        validation: &prepared.validation,
        test: &prepared.test,
        unlabeled: pool,
    };
    let confs = [Configuration::FullySupervised, Configuration::SelfHar];
    let rows = ok(limited_data_sweep(&benchmark_pipeline(), &data, &[10, 100], &[0, 1, 2, 3, 4], &confs, jobs()))?;
    let mean = |n: usize, c: Configuration| {
        rows.iter().find(|r| r.n_per_class == n && r.configuration == c).map(|r| (r.mean, r.scores.clone()))
    };
    let (fs10, fs10s) = mean(10, Configuration::FullySupervised).ok_or("missing cell")?;
    let (sh10, sh10s) = mean(10, Configuration::SelfHar).ok_or("missing cell")?;
    let (fs100, fs100s) = mean(100, Configuration::FullySupervised).ok_or("missing cell")?;
    let (sh100, sh100s) = mean(100, Configuration::SelfHar).ok_or("missing cell")?;
    let fmt = |v: &[f64]| v.iter().map(|s| format!("{s:.3}")).collect::<Vec<_>>().join(" ");
    println!("  benchmark: {train_users} train users, 3 test users, 5000 unlabeled windows");
    println!("  10/class  fully_supervised {fs10:.4} [{}]  selfhar {sh10:.4} [{}]", fmt(&fs10s), fmt(&sh10s));
    println!("  100/class fully_supervised {fs100:.4} [{}]  selfhar {sh100:.4} [{}]", fmt(&fs100s), fmt(&sh100s));
    let secs = start.elapsed().as_secs_f64();
    let summary = format!(
        "10/class {sh10:.4} vs {fs10:.4} (+{:.4}), 100/class {sh100:.4} vs {fs100:.4} (+{:.4}), {:.1} min on {} thread(s)",
        sh10 - fs10,
        sh100 - fs100,
        secs / 60.0,
        jobs()
    );
    ensure!(sh10 >= fs10 + 0.03, "10/class margin too small: {summary}");
    ensure!(sh100 >= fs100, "100/class: {summary}");
    Ok(summary)
}

// 7 ---------------------------------------------------------------------------

fn ablation_shape() -> Check {
    let dir = ok(tempfile::tempdir())?;
    let cfg = tiny_run_config(dir.path());
    let (out, table) = ok(cmd_ablate(&cfg, jobs()))?;
    ensure!(table.rows.len() == 10, "{} rows", table.rows.len());
    for conf in Configuration::ALL {
        for protocol in ["standard", "linear"] {
            let n = table.rows.iter().filter(|r| r.column == conf.name() && r.protocol == protocol).count();
            ensure!(n == 1, "{} / {protocol}: {n} rows", conf.name());
        }
    }
    for row in &table.rows {
        ensure!(row.seeds == cfg.seeds, "{}: seeds {:?}", row.column, row.seeds);
        ensure!(row.scores.len() == cfg.seeds.len(), "{}: {} scores", row.column, row.scores.len());
        let mean = row.scores.iter().sum::<f64>() / row.scores.len() as f64;
        ensure!((mean - row.mean).abs() < 1e-12, "{}: mean not recomputable", row.column);
        ensure!(row.ci_lo <= row.mean + 1e-12 && row.mean <= row.ci_hi + 1e-12, "{}: mean outside its CI", row.column);
    }
    let counts: Vec<usize> = table.cells.iter().map(|c| c.parameter_count).collect();
    ensure!(counts.windows(2).all(|w| w[0] == w[1]), "parameter counts differ: {counts:?}");
    let csv_rows = ok(std::fs::read_to_string(out.join("ablation.csv")))?.lines().count();
    ensure!(csv_rows == 11, "ablation.csv has {csv_rows} lines");
    let first = ok(std::fs::read(out.join("ablation.json")))?;
    let (out2, _) = ok(cmd_ablate(&cfg, jobs()))?;
    ensure!(out2 == out, "rerun wrote to a different directory");
    ensure!(ok(std::fs::read(out.join("ablation.json")))? == first, "rerun changed ablation.json");
    Ok(format!("5 configurations x 2 protocols over {} seeds, {} parameters each, rerun identical", cfg.seeds.len(), counts[0]))
}

// 8 ---------------------------------------------------------------------------

struct OracleMetrics {
    weighted: f64,
    macro_f1: f64,
    kappa: f64,
}

fn oracle_metrics(truth: &[usize], pred: &[usize], k: usize) -> OracleMetrics {
    let n = truth.len() as f64;
    let mut weighted = 0.0;
    let mut macro_sum = 0.0;
    let mut present = 0;
    let mut agree = 0.0;
    let mut chance = 0.0;
    for c in 0..k {
        let (mut tp, mut fp, mut fne) = (0.0, 0.0, 0.0);
        for (&t, &p) in truth.iter().zip(pred) {
            match (t == c, p == c) {
                (true, true) => tp += 1.0,
                (false, true) => fp += 1.0,
                (true, false) => fne += 1.0,
                _ => {}
            }
        }
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fne > 0.0 { tp / (tp + fne) } else { 0.0 };
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        let support = tp + fne;
        weighted += f1 * support / n;
        if support > 0.0 {
            macro_sum += f1;
            present += 1;
        }
        agree += tp;
        chance += (support / n) * ((tp + fp) / n);
    }
    let po = agree / n;
    OracleMetrics {
        weighted,
        macro_f1: if present > 0 { macro_sum / present as f64 } else { 0.0 },
        kappa: if (1.0 - chance).abs() < f64::EPSILON { 0.0 } else { (po - chance) / (1.0 - chance) },
    }
}

fn oracle_percentile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let i = h.floor() as usize;
    if i + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[i] + (h - i as f64) * (sorted[i + 1] - sorted[i])
}

fn metrics_oracles() -> Check {
    let mut r = rng::seeded(8);
    let mut worst: f64 = 0.0;
    let random_pair = |r: &mut rng::Rng| -> (Vec<usize>, Vec<usize>, usize) {
        let k = r.random_range(2..9usize);
        let n = r.random_range(1..200usize);
        let skew = r.random_range(0..3);
        let draw = |r: &mut rng::Rng| if skew == 0 { 0 } else { r.random_range(0..k.min(skew * 3)) };
        let truth: Vec<usize> = (0..n).map(|_| draw(r)).collect();
        let pred: Vec<usize> = truth
            .iter()
            .map(|&t| if r.random::<f64>() < 0.6 { t } else { r.random_range(0..k) })
            .collect();
        (truth, pred, k)
    };
    for case in 0..1000 {
        let (truth, pred, k) = random_pair(&mut r);
        let o = oracle_metrics(&truth, &pred, k);
        for (m, expected) in [(Metric::WeightedF1, o.weighted), (Metric::MacroF1, o.macro_f1), (Metric::CohensKappa, o.kappa)] {
            let got = ok(m.compute(&truth, &pred, k))?;
            let err = (got - expected).abs();
            worst = worst.max(err);
            ensure!(err <= 1e-12, "case {case}: {} {got} vs oracle {expected}", m.name());
        }
    }
    for case in 0..20u64 {
        let (truth, pred, k) = random_pair(&mut r);
        let log = resample_indices(truth.len(), 1000, case);
        let report = ok(MetricsReport::compute(&truth, &pred, k, 1000, case))?;
        for m in [Metric::WeightedF1, Metric::MacroF1, Metric::CohensKappa] {
            let mut values: Vec<f64> = log
                .iter()
                .map(|idx| {
                    let t: Vec<usize> = idx.iter().map(|&i| truth[i]).collect();
                    let p: Vec<usize> = idx.iter().map(|&i| pred[i]).collect();
                    let o = oracle_metrics(&t, &p, k);
                    match m {
                        Metric::WeightedF1 => o.weighted,
                        Metric::MacroF1 => o.macro_f1,
                        Metric::CohensKappa => o.kappa,
                    }
                })
                .collect();
            values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let (lo, hi) = (oracle_percentile(&values, 0.025), oracle_percentile(&values, 0.975));
            let ci = ok(bootstrap_ci(&truth, &pred, k, m, 1000, CONFIDENCE_LEVEL, case))?;
            let est = report.metric(m);
            for (got, want) in [(ci.lo, lo), (ci.hi, hi), (est.ci_lo, lo), (est.ci_hi, hi)] {
                ensure!((got - want).abs() <= 1e-12, "bootstrap case {case} {}: {got} vs {want}", m.name());
            }
        }
    }
    Ok(format!("1000 label pairs within {worst:.1e}; 20 bootstrap logs x 3 metrics reproduce both endpoints"))
}

// 9 ---------------------------------------------------------------------------

/// Hard shape checks plus the soft directional comparison.
fn intensity_study() -> (Check, Option<String>) {
    let run = || -> std::result::Result<(String, Option<String>), String> {
        let dir = ok(tempfile::tempdir())?;
        let spec = synth_spec(&SynthConfig::default());
        let mut cfg = RunConfig {
            labeled: Some(spec.clone()),
            unlabeled: Some(spec),
            labels_per_class: Some(10),
            out: dir.path().to_path_buf(),
            ..RunConfig::default()
        };
        cfg.pipeline = benchmark_pipeline();
        let (_, table) = ok(cmd_intensity_study(&cfg, jobs()))?;
        let expected: Vec<String> = [INTENSITY_BASELINE_COLUMN, "inactive", "balanced", "active"].map(String::from).to_vec();
        ensure!(table.columns == expected, "columns {:?}", table.columns);
        ensure!(table.rows.len() == 12, "{} rows", table.rows.len());
        for row in &table.rows {
            ensure!(row.scores.len() == 5 && row.ci_lo <= row.ci_hi, "{} {}: malformed row", row.column, row.metric.name());
        }
        let sizes: Vec<usize> = table.subset_sizes.iter().map(|(_, n)| *n).collect();
        ensure!(sizes.windows(2).all(|w| w[0] == w[1]), "subset sizes differ: {sizes:?}");
        for cell in &table.cells {
            let cm = ok(cell.report.confusion_matrix())?;
            ensure!((Metric::WeightedF1.of(&cm) - cell.report.weighted_f1.point).abs() < 1e-12, "metric not recomputable");
        }

        // Balanced subset: equal counts per intensity tercile of the pool.
        let prepared = ok(selfhar_cli::data::prepare(&cfg, true))?;
        let pool = prepared.unlabeled.as_ref().ok_or("no pool")?;
        let target = sizes[0];
        let balanced = ok(selfhar::datakit::subset_by_intensity(pool, selfhar::datakit::IntensityMode::Balanced, target))?;
        let mut proxies: Vec<(f64, usize)> = pool.windows().iter().enumerate().map(|(i, w)| (intensity_proxy(w), i)).collect();
        proxies.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let n = proxies.len();
        let mut rank_of = vec![0; n];
        for (rank, &(_, i)) in proxies.iter().enumerate() {
            rank_of[i] = rank;
        }
        let bits: BTreeMap<Vec<u64>, usize> = pool
            .windows()
            .iter()
            .enumerate()
            .map(|(i, w)| (w.values().iter().map(|v| v.to_bits()).collect(), i))
            .collect();
        let mut terciles = [0usize; 3];
        for w in balanced.windows() {
            let key: Vec<u64> = w.values().iter().map(|v| v.to_bits()).collect();
            let i = *bits.get(&key).ok_or("balanced window not in the pool")?;
            terciles[(rank_of[i] * 3 / n).min(2)] += 1;
        }
        ensure!(terciles[0] == terciles[1] && terciles[1] == terciles[2], "tercile counts {terciles:?}");

        let wf1 = |col: &str| {
            table
                .rows
                .iter()
                .find(|r| r.column == col && r.metric == Metric::WeightedF1)
                .map(|r| r.mean)
                .unwrap_or(f64::NAN)
        };
        let line = format!(
            "weighted F1 fully_supervised {:.4}, inactive {:.4}, balanced {:.4}, active {:.4}",
            wf1(INTENSITY_BASELINE_COLUMN),
            wf1("inactive"),
            wf1("balanced"),
            wf1("active")
        );
        let soft = (wf1("balanced") < wf1("inactive")).then(|| format!("balanced below inactive ({line})"));
        Ok((format!("4 columns, {target} windows per subset, terciles {terciles:?}; {line}"), soft))
    };
    match run() {
        Ok((msg, soft)) => (Ok(msg), soft),
        Err(e) => (Err(e), None),
    }
}

// 10 --------------------------------------------------------------------------

fn determinism() -> Check {
    let dir = ok(tempfile::tempdir())?;
    let mut cfg = tiny_run_config(&dir.path().join("unused"));
    cfg.pipeline.configuration = Configuration::SelfHar;
    cfg.protocol = selfhar_cli::Protocol::Both;
    cfg.baseline = Some(EnCoConfig::default());
    let cfg_path = dir.path().join("config.json");
    ok(std::fs::write(&cfg_path, ok(cfg.to_json())?))?;
    let mut outputs = Vec::new();
    for attempt in 0..2 {
        let out = dir.path().join(format!("out{attempt}"));
        let status = ok(Command::new(env!("CARGO_BIN_EXE_selfhar"))
            .args(["run", "--config"])
            .arg(&cfg_path)
            .arg("--out")
            .arg(&out)
            .env("SELFHAR_LOG", "error")
            .output())?;
        ensure!(status.status.success(), "run failed: {}", String::from_utf8_lossy(&status.stderr));
        let run_dir = String::from_utf8_lossy(&status.stdout).trim().to_string();
        outputs.push(std::path::PathBuf::from(run_dir));
    }
    let names = ["report.json", "linear_report.json", "baseline_report.json", "final.weights", "history.csv", "selection_stats.csv"];
    for name in names {
        let a = ok(std::fs::read(outputs[0].join(name)))?;
        let b = ok(std::fs::read(outputs[1].join(name)))?;
        ensure!(a == b, "{name} differs between reruns");
    }
    let report = ok(MetricsReport::from_json(&ok(std::fs::read_to_string(outputs[0].join("report.json")))?))?;
    ok(report.validate())?;
    ensure!(outputs[0].join("run.log").exists(), "timestamp log missing");
    Ok(format!("two `selfhar run` invocations: {} outputs byte-identical", names.len()))
}

// 11 --------------------------------------------------------------------------

fn oracle_features(w: &Window) -> Vec<f64> {
    let t = w.timesteps();
    let n = t as f64;
    let axes: Vec<Vec<f64>> = (0..3).map(|c| (0..t).map(|i| w.sample(i)[c]).collect()).collect();
    let mut stats = vec![[0.0; 3]; 7];
    for (a, x) in axes.iter().enumerate() {
        let mean = x.iter().sum::<f64>() / n;
        let mut s = x.clone();
        s.sort_by(|p, q| p.partial_cmp(q).unwrap());
        let iqr = oracle_percentile(&s, 0.75) - oracle_percentile(&s, 0.25);
        let mad = x.iter().map(|v| (v - mean).abs()).sum::<f64>() / n;
        let rms = (x.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        // Direct DFT, zero-frequency bin excluded.
        let mut energy = 0.0;
        for k in 1..t {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, v) in x.iter().enumerate() {
                let ang = -2.0 * PI * (k * j) as f64 / n;
                re += v * ang.cos();
                im += v * ang.sin();
            }
            energy += re * re + im * im;
        }
        for (s, v) in [mean, iqr, mad, rms, var.sqrt(), var, energy / n].into_iter().enumerate() {
            stats[s][a] = v;
        }
    }
    let corr = |a: &[f64], b: &[f64]| {
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        if va == 0.0 || vb == 0.0 {
            0.0
        } else {
            cov / (va * vb).sqrt()
        }
    };
    let mut out: Vec<f64> = stats.into_iter().flatten().collect();
    out.extend([corr(&axes[0], &axes[1]), corr(&axes[0], &axes[2]), corr(&axes[1], &axes[2]), 0.0, 0.0, 0.0]);
    out
}

fn en_co_training() -> Check {
    let mut r = rng::seeded(11);
    let mut worst: f64 = 0.0;
    for case in 0..60 {
        let t = [64, 100, 128, 400][case % 4];
        let w = ok(Window::new(random_values(&mut r, t * CHANNELS, 2.0), "u", None))?;
        let got = ok(extract_features(&w))?;
        let want = oracle_features(&w);
        ensure!(got.len() == FEATURE_COUNT, "{} features", got.len());
        for (i, (g, e)) in got.iter().zip(&want).enumerate() {
            let err = (g - e).abs() / e.abs().max(1.0);
            worst = worst.max(err);
            ensure!(err <= 1e-9, "case {case} feature {i}: {g} vs {e}");
        }
    }

    let (labeled, unlabeled) = ok(synthesize(&tiny_synth()))?;
    let feats = |d: &Dataset| -> std::result::Result<Vec<Vec<f64>>, String> {
        d.windows().iter().map(|w| ok(extract_features(w)).map(|f| f.to_vec())).collect()
    };
    let labeled = ok(labeled.select(&(0..labeled.len()).step_by(6).collect::<Vec<_>>()))?;
    let (lx, ly, ux) = (feats(&labeled)?, labeled.labels(), feats(&unlabeled)?);
    let cfg = EnCoConfig::default();
    ensure!(cfg.iterations == 20, "default iterations {}", cfg.iterations);
    let outcome = ok(en_co_train(&lx, &ly, &ux, 3, &cfg))?;
    let sizes = &outcome.pool_sizes;
    ensure!(!sizes.is_empty() && sizes.len() <= 20, "{} iterations", sizes.len());
    ensure!(sizes[0] >= lx.len() && sizes.windows(2).all(|w| w[0] <= w[1]), "pool sizes not monotone: {sizes:?}");
    ensure!(outcome.labels[..ly.len()] == ly[..], "original labels changed");

    let ensemble = ok(Ensemble::fit(&lx, &ly, 3, &cfg))?;
    // Interpolations between unrelated samples plus noise leave the data
    // manifold, where the three classifiers often disagree.
    let mut probes: Vec<Vec<f64>> = ux.iter().chain(&lx).cloned().collect();
    for _ in 0..3000 {
        let a = &ux[r.random_range(0..ux.len())];
        let b = &lx[r.random_range(0..lx.len())];
        let t: f64 = r.random_range(-1.0..2.0);
        probes.push(a.iter().zip(b).map(|(p, q)| p + t * (q - p) + r.random_range(-0.5..0.5) * p.abs()).collect());
    }
    let (mut majority, mut fallback) = (0, 0);
    for x in &probes {
        let votes = ensemble.votes(x);
        let pred = ensemble.predict(x);
        ensure!(pred < 3, "prediction outside the label set");
        let winner = (0..3).find(|&c| votes.iter().filter(|&&v| v == c).count() >= 2);
        match winner {
            Some(c) => {
                majority += 1;
                ensure!(pred == c, "majority {c} overruled by {pred} (votes {votes:?})");
            }
            None => {
                fallback += 1;
                let mut summed = [0.0; 3];
                for p in [ensemble.tree.predict_proba(x), ensemble.bayes.predict_proba(x), ensemble.knn.predict_proba(x)] {
                    for (s, v) in summed.iter_mut().zip(p) {
                        *s += v;
                    }
                }
                let best = (0..3).fold(0, |b, c| if summed[c] > summed[b] { c } else { b });
                ensure!(pred == best, "three-way split not resolved by summed posteriors");
            }
        }
    }
    Ok(format!(
        "60 windows within {worst:.1e} of direct formulas; pool {} -> {} over {} iterations; {majority} majority and {fallback} split votes decided",
        sizes[0],
        sizes[sizes.len() - 1],
        sizes.len()
    ))
}

// ---------------------------------------------------------------------------

fn guarded(f: impl FnOnce() -> Check) -> Check {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}

fn main() -> ExitCode {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let run = |id: usize| wanted.is_empty() || wanted.contains(&id);
    let criteria: [(usize, &str, fn() -> Check); 10] = [
        (1, "gradient correctness", gradient_correctness),
        (2, "layer oracle equivalence", layer_oracles),
        (3, "transformation properties", transformation_properties),
        (4, "selection soundness", selection_soundness),
        (5, "freezing contract", freezing_contract),
        (6, "trend reproduction", trend_reproduction),
        (7, "ablation harness shape", ablation_shape),
        (8, "metrics oracle equivalence", metrics_oracles),
        (10, "determinism", determinism),
        (11, "En-Co-Training correctness", en_co_training),
    ];
    let mut failed = 0;
    let report = |id: usize, name: &str, result: &Check, secs: f64| match result {
        Ok(msg) => println!("criterion {id:>2} {name}: PASS ({secs:.1}s) {msg}"),
        Err(msg) => println!("criterion {id:>2} {name}: FAIL ({secs:.1}s) {msg}"),
    };
    for (id, name, f) in criteria {
        if id == 10 && run(9) {
            let start = Instant::now();
            let (result, soft) = match panic::catch_unwind(intensity_study) {
                Ok(pair) => pair,
                Err(_) => (Err("panicked".to_string()), None),
            };
            report(9, "intensity study", &result, start.elapsed().as_secs_f64());
            if let Some(s) = soft {
                println!("criterion  9 intensity study (soft direction): SOFT FAIL {s}");
            } else if result.is_ok() {
                println!("criterion  9 intensity study (soft direction): PASS balanced >= inactive");
            }
            failed += usize::from(result.is_err());
        }
        if !run(id) {
            continue;
        }
        let start = Instant::now();
        let result = guarded(f);
        report(id, name, &result, start.elapsed().as_secs_f64());
        failed += usize::from(result.is_err());
    }
    if failed > 0 {
        println!("acceptance: {failed} criterion(s) failed");
        ExitCode::FAILURE
    } else {
        println!("acceptance: all requested criteria passed");
        ExitCode::SUCCESS
    }
}
