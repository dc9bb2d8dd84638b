use std::path::Path;

use anyhow::Result;
use proxyfit_core::data::{
    load_csv, split, synth_bodyfat_like, synth_friedman1, synth_smooth_1d, write_csv,
};
use proxyfit_core::evaluation::{
    local_fidelity, paired_bootstrap_ci, rmse, stability as run_stability, sweep as run_sweep,
    LocalFitter, NeighborhoodTemplate, StabilityConfig, SweepConfig,
};
use proxyfit_core::projection::{explain_global, explain_local};
use proxyfit_core::rng::derive_seed;
use proxyfit_core::{
    Dataset, Error, ExplanationReport, Matrix, NeighborhoodSpec, ProxyTree, ReferenceConfig,
    ReferenceModel, SplitSpec, Target, Task,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::output::{resolve_dir, write_atomic, OutDir};
use crate::Mode;

// Streams of the master seed.
const SPLIT_STREAM: u64 = 0;
const REFERENCE_STREAM: u64 = 1;
const CV_STREAM: u64 = 2;
const NEIGHBORHOOD_STREAM: u64 = 3;
const FIDELITY_STREAM: u64 = 4;

pub enum Center {
    Row(usize),
    Point(Vec<f64>),
}

#[derive(Serialize)]
struct Echo<'a> {
    command: &'a str,
    config: &'a RunConfig,
    details: Value,
}

fn prepare(cfg: &RunConfig, command: &str) -> Result<OutDir> {
    cfg.validate()?;
    OutDir::create(resolve_dir(cfg.output.as_deref(), command))
}

fn echo(out: &OutDir, command: &str, cfg: &RunConfig, details: Value) -> Result<()> {
    out.write_json(
        "config.json",
        &Echo {
            command,
            config: cfg,
            details,
        },
    )?;
    Ok(())
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    Ok(load_csv(cfg.data_path()?, cfg.target()?, cfg.data.task)?)
}

fn train_test(cfg: &RunConfig, ds: &Dataset) -> Result<(Dataset, Dataset)> {
    let spec = SplitSpec::new(cfg.data.train_fraction, derive_seed(cfg.seed, SPLIT_STREAM))?;
    Ok(split(ds, &spec)?)
}

fn fit_reference_model(cfg: &RunConfig, train: &Dataset) -> Result<ReferenceModel> {
    Ok(cfg
        .reference
        .with_seed(derive_seed(cfg.seed, REFERENCE_STREAM))
        .fit(train)?)
}

fn load_model(path: &Path, ds: &Dataset) -> Result<ReferenceModel> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let model = ReferenceModel::from_json(&text)?;
    if model.feature_names() != ds.feature_names.as_slice() {
        return Err(Error::InvalidConfig(format!(
            "model features {:?} do not match dataset features {:?}",
            model.feature_names(),
            ds.feature_names
        ))
        .into());
    }
    if model.task() != ds.task() {
        return Err(Error::TaskMismatch("model and dataset tasks differ".into()).into());
    }
    Ok(model)
}

/// RMSE for regression, accuracy for classification.
fn score(model: &ReferenceModel, ds: &Dataset) -> Result<Option<Value>> {
    if ds.is_empty() {
        return Ok(None);
    }
    let pred = model.predict_point(&ds.features)?;
    Ok(Some(match &ds.target {
        Target::Regression(y) => json!({ "rmse": rmse(&pred, y)? }),
        Target::Classification { labels, .. } => {
            let hits = pred
                .iter()
                .zip(labels)
                .filter(|(p, &l)| **p as usize + 1 == l)
                .count();
            json!({ "accuracy": hits as f64 / labels.len() as f64 })
        }
    }))
}

fn selected_parameters(model: &ReferenceModel) -> Value {
    match model {
        ReferenceModel::Gp(m) => json!({
            "hyper": m.hyper(),
            "cv_mse": m.state().cv_mse,
        }),
        ReferenceModel::Ensemble(m) => json!({
            "n_trees": m.trees.len(),
            "noise_variance": m.noise_variance,
        }),
    }
}

pub fn fit_reference(cfg: &RunConfig) -> Result<()> {
    let out = prepare(cfg, "fit-reference")?;
    let ds = load_dataset(cfg)?;
    let (train, test) = train_test(cfg, &ds)?;
    let model = fit_reference_model(cfg, &train)?;
    let report = json!({
        "kind": match cfg.reference { ReferenceConfig::Gp(_) => "gp", ReferenceConfig::Ensemble(_) => "ensemble" },
        "task": model.task(),
        "n_train": train.len(),
        "n_test": test.len(),
        "train": score(&model, &train)?,
        "test": score(&model, &test)?,
        "selected": selected_parameters(&model),
        "fingerprint": model.fingerprint()?,
    });
    out.write("model.json", &model.to_json()?)?;
    out.write_json("fit_report.json", &report)?;
    echo(&out, "fit-reference", cfg, json!({}))?;
    Ok(())
}

pub fn explain(
    cfg: &RunConfig,
    model_path: &Path,
    mode: Mode,
    center: Option<Center>,
) -> Result<()> {
    let out = prepare(cfg, "explain")?;
    let ds = load_dataset(cfg)?;
    let (train, test) = train_test(cfg, &ds)?;
    let model = load_model(model_path, &ds)?;
    let opts = cfg.proxy.options(derive_seed(cfg.seed, CV_STREAM));
    let (explanation, details) = match mode {
        Mode::Global => {
            let heldout = (!test.is_empty()).then_some(&test.features);
            (
                explain_global(&model, &train.features, heldout, &opts)?,
                json!({ "mode": "global", "model": model.fingerprint()? }),
            )
        }
        Mode::Local => {
            let (point, row) = match center {
                Some(Center::Row(r)) => {
                    if r >= test.len() {
                        return Err(Error::InvalidConfig(format!(
                            "--center-row {r} is out of range for a test split of {} rows",
                            test.len()
                        ))
                        .into());
                    }
                    (test.features.row(r).to_vec(), Some(r))
                }
                Some(Center::Point(v)) => {
                    if v.len() != ds.n_features() {
                        return Err(Error::DimensionMismatch {
                            expected: ds.n_features(),
                            got: v.len(),
                        }
                        .into());
                    }
                    (v, None)
                }
                None => {
                    return Err(Error::InvalidConfig(
                        "local mode needs --center-row or --center".into(),
                    )
                    .into());
                }
            };
            let nb = NeighborhoodSpec {
                center: point,
                sd: cfg.neighborhood.sd,
                n_samples: cfg.neighborhood.samples,
                seed: derive_seed(cfg.seed, NEIGHBORHOOD_STREAM),
                scale: cfg.neighborhood.scaled.then(|| train.feature_scales()),
            };
            (
                explain_local(&model, &nb, &opts)?,
                json!({ "mode": "local", "center_row": row, "model": model.fingerprint()? }),
            )
        }
    };
    out.write_json("report.json", &explanation.report)?;
    out.write("tree.dot", &explanation.tree.to_dot())?;
    echo(&out, "explain", cfg, details)?;
    Ok(())
}

pub fn sweep(cfg: &RunConfig) -> Result<()> {
    let out = prepare(cfg, "sweep")?;
    let ds = load_dataset(cfg)?;
    let sc = SweepConfig {
        reference: cfg.reference.clone(),
        grow: cfg.proxy.grow(),
        sizes: cfg.evaluation.sizes.clone(),
        runs: cfg.evaluation.runs,
        train_fraction: cfg.data.train_fraction,
        seed: cfg.seed,
        ci_level: cfg.evaluation.ci_level,
        ci_resamples: cfg.evaluation.ci_resamples,
    };
    let result = run_sweep(&ds, &sc)?;
    out.write("sweep.csv", &result.to_csv())?;
    out.write_json("sweep.json", &result)?;
    echo(&out, "sweep", cfg, json!({}))?;
    Ok(())
}

pub fn stability(cfg: &RunConfig) -> Result<()> {
    let out = prepare(cfg, "stability")?;
    let ds = load_dataset(cfg)?;
    let sc = StabilityConfig {
        reference: cfg.reference.clone(),
        proxy: cfg.proxy.options(derive_seed(cfg.seed, CV_STREAM)),
        resamples: cfg.evaluation.resamples,
        refit_reference: cfg.evaluation.refit_reference,
        weighting: cfg.evaluation.weighting,
    };
    let result = run_stability(cfg.evaluation.approach, &ds, &sc, cfg.seed)?;
    out.write("pairs.csv", &result.to_csv())?;
    out.write_json("stability.json", &result)?;
    echo(&out, "stability", cfg, json!({}))?;
    Ok(())
}

pub fn fidelity(cfg: &RunConfig, model_path: Option<&Path>) -> Result<()> {
    let out = prepare(cfg, "fidelity")?;
    let ds = load_dataset(cfg)?;
    if ds.task() != Task::Regression {
        return Err(Error::TaskMismatch("fidelity needs a regression target".into()).into());
    }
    let (train, test) = train_test(cfg, &ds)?;
    if test.is_empty() {
        return Err(Error::InvalidConfig("fidelity needs a nonempty test split".into()).into());
    }
    let model = match model_path {
        Some(p) => load_model(p, &ds)?,
        None => fit_reference_model(cfg, &train)?,
    };
    let n = cfg
        .evaluation
        .test_points
        .map_or(test.len(), |k| k.min(test.len()));
    let points: Matrix = test.features.select_rows(&(0..n).collect::<Vec<_>>());
    let template = NeighborhoodTemplate {
        sd: cfg.neighborhood.sd,
        n_samples: cfg.neighborhood.samples,
        scale: cfg.neighborhood.scaled.then(|| train.feature_scales()),
        seed: derive_seed(cfg.seed, FIDELITY_STREAM),
    };
    let opts = cfg.proxy.options(derive_seed(cfg.seed, CV_STREAM));
    let utility = local_fidelity(&model, &points, &template, LocalFitter::Utility, &opts)?;
    let prior = local_fidelity(
        &model,
        &points,
        &template,
        LocalFitter::Prior {
            train: &train,
            n_local: cfg.evaluation.n_local,
        },
        &opts,
    )?;
    let ci = if n >= 2 {
        Some(paired_bootstrap_ci(
            &prior.per_point,
            &utility.per_point,
            cfg.evaluation.ci_level,
            cfg.evaluation.ci_resamples,
            derive_seed(cfg.seed, FIDELITY_STREAM + 1),
        )?)
    } else {
        None
    };

    let mut csv = String::from("approach,point,fidelity,leaves,features_used\n");
    for (name, r) in [("utility", &utility), ("prior", &prior)] {
        for (i, f) in r.per_point.iter().enumerate() {
            csv.push_str(&format!(
                "{name},{i},{f},{},{}\n",
                r.leaves[i], r.features_used[i]
            ));
        }
        csv.push_str(&format!("{name},mean,{},,\n", r.mean));
        csv.push_str(&format!("{name},sd,{},,\n", r.sd));
    }
    out.write("fidelity.csv", &csv)?;
    out.write_json(
        "fidelity.json",
        &json!({
            "n_points": n,
            "utility": utility,
            "prior": prior,
            "prior_minus_utility": ci,
        }),
    )?;
    let details = match model_path {
        Some(_) => json!({ "model": model.fingerprint()? }),
        None => json!({}),
    };
    echo(&out, "fidelity", cfg, details)?;
    Ok(())
}

pub fn export_dot(report_path: &Path, output: Option<&Path>) -> Result<()> {
    let text = std::fs::read_to_string(report_path).map_err(|source| Error::Io {
        path: report_path.to_path_buf(),
        source,
    })?;
    let report: ExplanationReport = serde_json::from_str(&text).map_err(Error::from)?;
    let tree = ProxyTree::from_document(&report.proxy)?;
    let target = match output {
        Some(p) => p.to_path_buf(),
        None => report_path.with_file_name("tree.dot"),
    };
    write_atomic(&target, &tree.to_dot())
}

pub fn synth(dir: &Path, seed: u64) -> Result<()> {
    let out = OutDir::create(dir.to_path_buf())?;
    let sets = [
        ("bodyfat_like.csv", synth_bodyfat_like(seed)?),
        ("friedman1.csv", synth_friedman1(300, 1.0, seed)?),
        ("smooth_1d.csv", synth_smooth_1d(200, 0.1, seed)?.0),
    ];
    for (name, ds) in sets {
        let tmp = out.path(&format!(".{name}.tmp"));
        write_csv(&ds, &tmp)?;
        std::fs::rename(&tmp, out.path(name))?;
    }
    Ok(())
}
