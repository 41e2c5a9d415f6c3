//! Downstream-utility benchmark: train classifiers on real or synthetic
//! data, score them on held-out real data, and aggregate best-of scores
//! over a grid of generators and synthetic samples.
//!
//! Setting A trains on the real training split; setting B trains on
//! synthetic data sampled from a generator fit to that split. Both test on
//! the real test split. For each (classifier, epsilon) cell the report keeps
//! every run plus the best and the mean with its standard error.

use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::classifiers::{fit, predict_scores, ClassifierConfig, ClassifierKind};
use crate::data::{
    scale_minmax, scale_minmax_unchecked, BoundsProvenance, ColumnSpec, Dataset, Metadata,
    ScaleDirection,
};
use crate::engine::{generate_seeded, train, FaultProfile, PateGanConfig};
use crate::error::{Error, Result};
use crate::exec::map_indexed;
use crate::metrics::{auprc, auroc};
use crate::rng::{derive_seed, rng_from};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Setting {
    A,
    B,
}

/// Benchmark configuration: which classifiers, how many generator fits and
/// synthetic samples per fit, and the privacy grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchConfig {
    pub classifiers: Vec<ClassifierKind>,
    /// Generator fits per epsilon.
    pub n_models: usize,
    /// Synthetic datasets drawn from each fit.
    pub n_synth_per_model: usize,
    pub epsilon_grid: Vec<f64>,
    pub preset_name: String,
    pub pategan: PateGanConfig,
    pub profile: FaultProfile,
    pub train_fraction: f64,
    pub workers: usize,
    pub seed: u64,
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classifiers.is_empty() {
            return Err(Error::Config("need at least one classifier".into()));
        }
        if self.n_models < 1 || self.n_synth_per_model < 1 {
            return Err(Error::Config("need at least one model and one sample".into()));
        }
        if self.epsilon_grid.is_empty() || self.epsilon_grid.iter().any(|&e| e <= 0.0) {
            return Err(Error::Config("epsilon grid must be positive and non-empty".into()));
        }
        Ok(())
    }
}

/// Scores for one classifier evaluation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Scores {
    pub auroc: f64,
    pub auprc: f64,
    /// Set when the training labels were single-class and the model scored
    /// constant.
    pub degenerate: bool,
}

/// One report cell: a (classifier, epsilon) pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchCell {
    pub classifier: String,
    pub epsilon: f64,
    pub setting_a: Scores,
    pub setting_b_best: Scores,
    pub setting_b_mean_auroc: f64,
    pub setting_b_se_auroc: f64,
    pub setting_b_mean_auprc: f64,
    pub setting_b_se_auprc: f64,
    pub runs: Vec<Scores>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub preset: String,
    pub n_models: usize,
    pub n_synth_per_model: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub cells: Vec<BenchCell>,
}

fn split_features(ds: &Dataset) -> (Vec<Vec<f64>>, Vec<f64>) {
    let li = ds.meta.label_index;
    let mut x = Vec::with_capacity(ds.len());
    let mut y = Vec::with_capacity(ds.len());
    for row in &ds.rows {
        let mut features = Vec::with_capacity(row.len() - 1);
        for (c, &v) in row.iter().enumerate() {
            if c != li {
                features.push(v);
            }
        }
        x.push(features);
        y.push(row[li]);
    }
    (x, y)
}

/// Fit one classifier on the designated training source and score it on the
/// real test set.
pub fn run_setting(
    setting: Setting,
    train_real: &Dataset,
    test_real: &Dataset,
    synthetic: Option<&Dataset>,
    kind: ClassifierKind,
    seed: u64,
) -> Result<Scores> {
    let train_source = match setting {
        Setting::A => train_real,
        Setting::B => synthetic.ok_or_else(|| {
            Error::Config("setting B needs a synthetic dataset".into())
        })?,
    };
    let (train_x, train_y) = split_features(train_source);
    let (test_x, test_y) = split_features(test_real);
    let model = fit(kind, &train_x, &train_y, &ClassifierConfig::default(), seed)?;
    let scores = predict_scores(&model, &test_x)?;
    Ok(Scores {
        auroc: auroc(&test_y, &scores)?,
        auprc: auprc(&test_y, &scores)?,
        degenerate: model.degenerate_constant.is_some(),
    })
}

/// The full protocol. `data` is unscaled; the scaler is fit on the training
/// split only and applied to the test split without re-fitting.
pub fn run_benchmark(cfg: &BenchConfig, data: &Dataset) -> Result<BenchReport> {
    cfg.validate()?;
    let (train_raw, test_raw) = crate::data::split_train_test(data, cfg.train_fraction, cfg.seed)?;
    let train_meta = Arc::new(train_raw.meta.with_empirical_bounds(&train_raw)?);
    let train_scaled = scale_minmax(
        &Dataset::new(train_raw.rows.clone(), Arc::clone(&train_meta))?,
        ScaleDirection::Forward,
    )?;
    let test_scaled = scale_minmax_unchecked(
        &Dataset::new(test_raw.rows.clone(), Arc::clone(&train_meta))?,
        ScaleDirection::Forward,
    );

    let mut cells = Vec::new();
    for (ei, &epsilon) in cfg.epsilon_grid.iter().enumerate() {
        // train generators and sample synthetic datasets for this epsilon
        let grid = cfg.n_models * cfg.n_synth_per_model;
        let synth_sets: Vec<Result<Dataset>> = map_indexed(grid, cfg.workers, |cell| {
            let model_idx = cell / cfg.n_synth_per_model;
            let synth_idx = cell % cfg.n_synth_per_model;
            let mut gan_cfg = cfg.pategan.clone();
            gan_cfg.epsilon_budget = epsilon;
            gan_cfg.seed = derive_seed(cfg.seed, &[0xbe, ei as u64, model_idx as u64]);
            let model = train(&train_scaled, &gan_cfg, &cfg.profile)?;
            generate_seeded(
                &model,
                train_scaled.len(),
                derive_seed(cfg.seed, &[0x5a, ei as u64, model_idx as u64, synth_idx as u64]),
            )
        });
        let synth_sets: Result<Vec<Dataset>> = synth_sets.into_iter().collect();
        let synth_sets = synth_sets?;

        for &kind in &cfg.classifiers {
            let clf_seed = derive_seed(cfg.seed, &[0xc1f, ei as u64, kind as u64]);
            let setting_a = run_setting(
                Setting::A,
                &train_scaled,
                &test_scaled,
                None,
                kind,
                clf_seed,
            )?;
            let runs: Result<Vec<Scores>> = synth_sets
                .iter()
                .map(|synth| {
                    run_setting(Setting::B, &train_scaled, &test_scaled, Some(synth), kind, clf_seed)
                })
                .collect();
            let runs = runs?;
            let best = runs
                .iter()
                .copied()
                .max_by(|a, b| a.auroc.partial_cmp(&b.auroc).unwrap())
                .expect("at least one run");
            let (mean_roc, se_roc) = mean_and_se(runs.iter().map(|r| r.auroc));
            let (mean_prc, se_prc) = mean_and_se(runs.iter().map(|r| r.auprc));
            cells.push(BenchCell {
                classifier: kind.name().to_string(),
                epsilon,
                setting_a,
                setting_b_best: best,
                setting_b_mean_auroc: mean_roc,
                setting_b_se_auroc: se_roc,
                setting_b_mean_auprc: mean_prc,
                setting_b_se_auprc: se_prc,
                runs,
            });
        }
    }
    Ok(BenchReport {
        preset: cfg.preset_name.clone(),
        n_models: cfg.n_models,
        n_synth_per_model: cfg.n_synth_per_model,
        train_rows: train_scaled.len(),
        test_rows: test_scaled.len(),
        cells,
    })
}

fn mean_and_se(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Desk-scale dataset generators for tests and demos. The real evaluation
/// corpora are external; these are small stand-ins with known structure.
pub mod datasets {
    use super::*;

    /// Two well-separated Gaussian blobs; the label is the blob.
    pub fn separable(n: usize, seed: u64) -> Result<Dataset> {
        let meta = Arc::new(Metadata::new(
            vec![
                ColumnSpec::numerical("x0", -8.0, 8.0),
                ColumnSpec::numerical("x1", -8.0, 8.0),
                ColumnSpec::binary("y"),
            ],
            2,
            BoundsProvenance::Public,
        )?);
        let mut rng = rng_from(seed, &[0xb10b5]);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let label = f64::from(i % 2 == 0);
                let center = if label > 0.5 { 3.0 } else { -3.0 };
                vec![
                    (center + gauss(&mut rng)).clamp(-8.0, 8.0),
                    (center + gauss(&mut rng)).clamp(-8.0, 8.0),
                    label,
                ]
            })
            .collect();
        Dataset::new(rows, meta)
    }

    /// One dominant cluster plus a small positive cluster (~10% prevalence).
    pub fn imbalanced(n: usize, seed: u64) -> Result<Dataset> {
        let meta = Arc::new(Metadata::new(
            vec![
                ColumnSpec::numerical("x0", -10.0, 10.0),
                ColumnSpec::numerical("x1", -10.0, 10.0),
                ColumnSpec::binary("y"),
            ],
            2,
            BoundsProvenance::Public,
        )?);
        let mut rng = rng_from(seed, &[0x1b5]);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let label = f64::from(i % 10 == 0);
                let center = if label > 0.5 { 4.0 } else { -1.0 };
                vec![
                    (center + gauss(&mut rng)).clamp(-10.0, 10.0),
                    (center + 0.5 * gauss(&mut rng)).clamp(-10.0, 10.0),
                    label,
                ]
            })
            .collect();
        Dataset::new(rows, meta)
    }

    /// Three binary columns with correlated structure; the label is the
    /// third bit.
    pub fn three_bit(n: usize, seed: u64) -> Result<Dataset> {
        let meta = Arc::new(Metadata::new(
            vec![
                ColumnSpec::binary("a"),
                ColumnSpec::binary("b"),
                ColumnSpec::binary("y"),
            ],
            2,
            BoundsProvenance::Public,
        )?);
        let mut rng = rng_from(seed, &[0x3b17]);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let a = f64::from(rng.gen_bool(0.5));
                let b = f64::from(rng.gen_bool(0.3));
                // label correlates with a
                let y = if rng.gen_bool(0.8) { a } else { 1.0 - a };
                vec![a, b, y]
            })
            .collect();
        Dataset::new(rows, meta)
    }

    fn gauss(rng: &mut impl Rng) -> f64 {
        // Box-Muller, one draw per call
        let u1: f64 = rng.gen::<f64>().max(1e-12);
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}
