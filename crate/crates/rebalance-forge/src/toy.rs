//! Desk-scale stand-ins for the GPU components: a seeded imbalanced
//! dataset generator, a per-class Gaussian synthesizer playing the role
//! of the trained generator networks, and a small multinomial logistic
//! classifier whose validation loss is the optimizer objective.

use std::collections::HashMap;
use std::collections::HashSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{
    aggregate_folds, confusion_matrix, metrics_from_confusion, plan_folds, CrossValSummary,
};
use crate::manifest::{Manifest, ManifestRecord, Source};
use crate::rebalance::{
    build_injection_plan, complementary_frequencies, injection_weights, InjectionConfig,
    InjectionPlan,
};
use crate::sma::{optimize, OptimizationResult, SmaConfig};

const VAR_FLOOR: f64 = 1e-9;

/// One class of the synthetic dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub label: String,
    pub count: usize,
}

/// Generator parameters for the toy dataset: per-class record counts,
/// feature dimension, how far apart class means sit, and the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyDatasetConfig {
    pub classes: Vec<ClassSpec>,
    pub feature_dim: usize,
    pub separation: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ToyDatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 {
            return Err(Error::config("need at least 2 classes"));
        }
        let mut seen = HashSet::new();
        for class in &self.classes {
            if class.label.is_empty() {
                return Err(Error::config("class labels must be non-empty"));
            }
            if !seen.insert(class.label.as_str()) {
                return Err(Error::config(format!("duplicate class label `{}`", class.label)));
            }
            if class.count < 10 {
                return Err(Error::config(format!(
                    "class `{}` needs at least 10 records (got {})",
                    class.label, class.count
                )));
            }
        }
        if self.feature_dim == 0 || self.feature_dim > 4096 {
            return Err(Error::config("feature_dim must lie in 1..=4096"));
        }
        if !self.separation.is_finite() || self.separation < 0.0 {
            return Err(Error::config("separation must be a non-negative real"));
        }
        Ok(())
    }
}

/// A dataset row: id, label, provenance, and the feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub id: String,
    pub label: String,
    pub source: Source,
    pub features: Vec<f64>,
}

/// Per-class diagonal Gaussian fitted from real features; the desk-scale
/// counterpart of a trained per-class generator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianSynthesizer {
    pub label: String,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

/// Classifier targets searched by the optimizer. Defaults are the
/// optimizer-found values shipped with the tool: learning rate 7.26e-5,
/// dropout 0.17, SIIR 0.20.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub learning_rate: f64,
    pub dropout_rate: f64,
    pub siir: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            learning_rate: 7.26e-5,
            dropout_rate: 0.17,
            siir: 0.20,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::config("learning_rate must be a non-negative real"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config("dropout_rate must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.siir) {
            return Err(Error::RatioOutOfRange(self.siir));
        }
        Ok(())
    }

    pub fn from_position(position: &[f64]) -> Result<Hyperparameters> {
        if position.len() != 3 {
            return Err(Error::config(format!(
                "hyperparameter vector must have 3 entries (got {})",
                position.len()
            )));
        }
        let hp = Hyperparameters {
            learning_rate: position[0],
            dropout_rate: position[1],
            siir: position[2].min(1.0 - 1e-9),
        };
        hp.validate()?;
        Ok(hp)
    }
}

/// Samples per-class Gaussian blobs. Class means are `separation` times a
/// seeded standard-normal direction, so separation 0 collapses every
/// class onto one distribution. All records are marked real.
pub fn generate_toy_dataset(config: &ToyDatasetConfig) -> Result<Vec<FeatureRecord>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut records = Vec::new();
    for class in &config.classes {
        let mean: Vec<f64> = (0..config.feature_dim)
            .map(|_| config.separation * rng.sample::<f64, _>(StandardNormal))
            .collect();
        for i in 0..class.count {
            let features: Vec<f64> = mean
                .iter()
                .map(|&m| m + rng.sample::<f64, _>(StandardNormal))
                .collect();
            records.push(FeatureRecord {
                id: format!("{}-r{}", class.label, i),
                label: class.label.clone(),
                source: Source::Real,
                features,
            });
        }
    }
    Ok(records)
}

/// Fits per-dimension mean and (floored) variance from the real records
/// of one label.
pub fn fit_synthesizer(records: &[FeatureRecord], label: &str) -> Result<GaussianSynthesizer> {
    let rows: Vec<&FeatureRecord> = records
        .iter()
        .filter(|r| r.source == Source::Real && r.label == label)
        .collect();
    if rows.len() < 2 {
        return Err(Error::config(format!(
            "need at least 2 real records of label `{label}` to fit a synthesizer (got {})",
            rows.len()
        )));
    }
    let dim = rows[0].features.len();
    if rows.iter().any(|r| r.features.len() != dim) {
        return Err(Error::config("inconsistent feature dimensions"));
    }
    let n = rows.len() as f64;
    let mut means = vec![0.0; dim];
    for row in &rows {
        for (m, &x) in means.iter_mut().zip(&row.features) {
            *m += x;
        }
    }
    for m in means.iter_mut() {
        *m /= n;
    }
    let mut variances = vec![0.0; dim];
    for row in &rows {
        for ((v, &m), &x) in variances.iter_mut().zip(&means).zip(&row.features) {
            *v += (x - m) * (x - m);
        }
    }
    for v in variances.iter_mut() {
        *v = (*v / n).max(VAR_FLOOR);
    }
    Ok(GaussianSynthesizer {
        label: label.to_string(),
        means,
        variances,
    })
}

/// Draws `n` synthetic records from the fitted Gaussian. Ids embed the
/// label and seed so merged pools stay collision-free.
pub fn sample_synthetic(synth: &GaussianSynthesizer, n: usize, seed: u64) -> Vec<FeatureRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let features: Vec<f64> = synth
                .means
                .iter()
                .zip(&synth.variances)
                .map(|(&m, &v)| m + v.sqrt() * rng.sample::<f64, _>(StandardNormal))
                .collect();
            FeatureRecord {
                id: format!("syn-{}-{}-{}", synth.label, seed, i),
                label: synth.label.clone(),
                source: Source::Synthetic,
                features,
            }
        })
        .collect()
}

/// Multinomial logistic regression model: one weight row and bias per
/// class, labels in training first-appearance order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogisticModel {
    pub labels: Vec<String>,
    pub dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LogisticModel {
    fn logits(&self, features: &[f64]) -> Vec<f64> {
        let classes = self.labels.len();
        let mut out = self.bias.clone();
        for (c, slot) in out.iter_mut().enumerate().take(classes) {
            let row = &self.weights[c * self.dim..(c + 1) * self.dim];
            *slot += row.iter().zip(features).map(|(w, x)| w * x).sum::<f64>();
        }
        out
    }

    pub fn predict(&self, features: &[f64]) -> &str {
        let logits = self.logits(features);
        let mut best = 0;
        for (c, &v) in logits.iter().enumerate() {
            if v > logits[best] {
                best = c;
            }
        }
        &self.labels[best]
    }

    /// Mean cross-entropy over a record set.
    pub fn mean_cross_entropy(&self, records: &[&FeatureRecord]) -> Result<f64> {
        if records.is_empty() {
            return Err(Error::config("cannot score an empty record set"));
        }
        let mut total = 0.0;
        for rec in records {
            let class = self
                .labels
                .iter()
                .position(|l| l == &rec.label)
                .ok_or_else(|| Error::config(format!("label `{}` unseen in training", rec.label)))?;
            let logits = self.logits(&rec.features);
            total += cross_entropy(&logits, class);
        }
        Ok(total / records.len() as f64)
    }
}

fn cross_entropy(logits: &[f64], class: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum: f64 = logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln() + max;
    log_sum - logits[class]
}

/// Result of a training run: validation loss (infinite when training
/// diverged), the fitted model, and an optional warning.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub val_loss: f64,
    pub model: LogisticModel,
    pub warning: Option<String>,
}

/// Trains the logistic classifier by seeded mini-batch gradient descent
/// with input dropout (training only) and returns the mean validation
/// cross-entropy. Divergence to non-finite parameters yields an infinite
/// loss and a warning instead of an error.
pub fn train_classifier(
    train: &[&FeatureRecord],
    val: &[&FeatureRecord],
    hp: &Hyperparameters,
    epochs: usize,
    batch_size: usize,
    seed: u64,
) -> Result<TrainOutcome> {
    hp.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::config("train and validation sets must be non-empty"));
    }
    if batch_size == 0 {
        return Err(Error::config("batch_size must be >= 1"));
    }
    let dim = train[0].features.len();
    let mut labels: Vec<String> = Vec::new();
    for rec in train {
        if rec.features.len() != dim {
            return Err(Error::config("inconsistent feature dimensions"));
        }
        if !labels.iter().any(|l| l == &rec.label) {
            labels.push(rec.label.clone());
        }
    }
    if labels.len() < 2 {
        return Err(Error::config("training set must cover at least 2 labels"));
    }
    let classes = labels.len();
    let mut model = LogisticModel {
        labels,
        dim,
        weights: vec![0.0; classes * dim],
        bias: vec![0.0; classes],
    };
    let class_of: HashMap<String, usize> = model
        .labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.clone(), i))
        .collect();
    for rec in val {
        if !class_of.contains_key(rec.label.as_str()) {
            return Err(Error::config(format!(
                "validation label `{}` unseen in training",
                rec.label
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = 1.0 - hp.dropout_rate;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut dropped = vec![0.0; dim];
    let mut diverged = false;

    'training: for _epoch in 0..epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        for batch in order.chunks(batch_size) {
            let mut grad_w = vec![0.0; classes * dim];
            let mut grad_b = vec![0.0; classes];
            for &idx in batch {
                let rec = train[idx];
                for (slot, &x) in dropped.iter_mut().zip(&rec.features) {
                    *slot = if hp.dropout_rate > 0.0 && rng.random::<f64>() < hp.dropout_rate {
                        0.0
                    } else {
                        x / keep
                    };
                }
                let logits = model.logits(&dropped);
                let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
                let sum: f64 = exps.iter().sum();
                let target = class_of[rec.label.as_str()];
                for c in 0..classes {
                    let p = exps[c] / sum;
                    let delta = p - if c == target { 1.0 } else { 0.0 };
                    grad_b[c] += delta;
                    let row = &mut grad_w[c * dim..(c + 1) * dim];
                    for (g, &x) in row.iter_mut().zip(&dropped) {
                        *g += delta * x;
                    }
                }
            }
            let scale = hp.learning_rate / batch.len() as f64;
            for (w, g) in model.weights.iter_mut().zip(&grad_w) {
                *w -= scale * g;
            }
            for (b, g) in model.bias.iter_mut().zip(&grad_b) {
                *b -= scale * g;
            }
        }
        if model.weights.iter().chain(&model.bias).any(|v| !v.is_finite()) {
            diverged = true;
            break 'training;
        }
    }

    if diverged {
        return Ok(TrainOutcome {
            val_loss: f64::INFINITY,
            model,
            warning: Some("training diverged to non-finite parameters".into()),
        });
    }
    let val_loss = model.mean_cross_entropy(val)?;
    let (val_loss, warning) = if val_loss.is_finite() {
        (val_loss, None)
    } else {
        (
            f64::INFINITY,
            Some("validation loss is non-finite".into()),
        )
    };
    Ok(TrainOutcome {
        val_loss,
        model,
        warning,
    })
}

/// The function handed to the optimizer: plan injection at the candidate
/// SIIR, synthesize, merge into train/validation only, train, and return
/// the validation loss. Any internal failure ranks as worst fitness.
pub struct PipelineObjective<'a> {
    records: &'a [FeatureRecord],
    train_ids: Vec<String>,
    val_ids: Vec<String>,
    pub epochs: usize,
    pub batch_size: usize,
    pub train_seed: u64,
    pub synth_seed: u64,
    pub val_ratio: f64,
}

impl<'a> PipelineObjective<'a> {
    /// Objective over a fixed train/validation id split. Training runs at
    /// the published objective constants (15 epochs, batch 128) unless
    /// overridden through the public fields.
    pub fn new(
        records: &'a [FeatureRecord],
        train_ids: Vec<String>,
        val_ids: Vec<String>,
        seed: u64,
    ) -> PipelineObjective<'a> {
        PipelineObjective {
            records,
            train_ids,
            val_ids,
            epochs: 15,
            batch_size: 128,
            train_seed: seed,
            synth_seed: seed.wrapping_add(0x9E3779B97F4A7C15),
            val_ratio: 0.15,
        }
    }

    pub fn eval(&self, hp: &Hyperparameters) -> f64 {
        self.try_eval(hp).unwrap_or(f64::INFINITY)
    }

    fn try_eval(&self, hp: &Hyperparameters) -> Result<f64> {
        hp.validate()?;
        let by_id: HashMap<&str, &FeatureRecord> =
            self.records.iter().map(|r| (r.id.as_str(), r)).collect();
        let resolve = |ids: &[String]| -> Result<Vec<&FeatureRecord>> {
            ids.iter()
                .map(|id| {
                    by_id
                        .get(id.as_str())
                        .copied()
                        .ok_or_else(|| Error::config(format!("unknown record id `{id}`")))
                })
                .collect()
        };
        let train_real: Vec<&FeatureRecord> = resolve(&self.train_ids)?
            .into_iter()
            .filter(|r| r.source == Source::Real)
            .collect();
        let val_real: Vec<&FeatureRecord> = resolve(&self.val_ids)?
            .into_iter()
            .filter(|r| r.source == Source::Real)
            .collect();

        let pool: Vec<&FeatureRecord> = train_real.iter().chain(&val_real).copied().collect();
        let synthetic = synthesize_for_pool(&pool, &train_real, hp.siir, self.synth_seed)?;

        let n_val_syn = (self.val_ratio * synthetic.len() as f64).round() as usize;
        let mut train: Vec<&FeatureRecord> = train_real;
        let mut val: Vec<&FeatureRecord> = val_real;
        for (i, rec) in synthetic.iter().enumerate() {
            if i < n_val_syn {
                val.push(rec);
            } else {
                train.push(rec);
            }
        }
        let outcome = train_classifier(&train, &val, hp, self.epochs, self.batch_size, self.train_seed)?;
        Ok(outcome.val_loss)
    }
}

/// Plans injection over the real pool and samples synthetic records per
/// label, fitting each synthesizer on the designated fitting records.
/// A perfectly balanced pool or zero SIIR yields no synthetic records.
fn synthesize_for_pool(
    stats_pool: &[&FeatureRecord],
    fit_pool: &[&FeatureRecord],
    siir: f64,
    seed: u64,
) -> Result<Vec<FeatureRecord>> {
    if siir == 0.0 {
        return Ok(Vec::new());
    }
    let (labels, counts) = label_census(stats_pool);
    let stats = crate::manifest::LabelStats::new(labels, counts)?;
    let cf = complementary_frequencies(&stats);
    let weights = match injection_weights(&cf, &InjectionConfig::new(siir)) {
        Ok(w) => w,
        Err(Error::NothingToInject) => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    let plan = build_injection_plan(&weights, siir, stats.total())?;
    sample_plan(&plan, fit_pool, seed)
}

/// Fulfills an injection plan: fits one synthesizer per label with a
/// nonzero quota and samples exactly the planned counts.
pub fn sample_plan(
    plan: &InjectionPlan,
    fit_pool: &[&FeatureRecord],
    seed: u64,
) -> Result<Vec<FeatureRecord>> {
    let owned: Vec<FeatureRecord> = fit_pool.iter().map(|&r| r.clone()).collect();
    let mut synthetic = Vec::new();
    for (i, (label, &count)) in plan.labels.iter().zip(&plan.counts).enumerate() {
        if count == 0 {
            continue;
        }
        let synth = fit_synthesizer(&owned, label)?;
        synthetic.extend(sample_synthetic(&synth, count as usize, seed.wrapping_add(i as u64)));
    }
    Ok(synthetic)
}

fn label_census(records: &[&FeatureRecord]) -> (Vec<String>, Vec<u64>) {
    let mut labels: Vec<String> = Vec::new();
    let mut counts: Vec<u64> = Vec::new();
    for rec in records {
        match labels.iter().position(|l| l == &rec.label) {
            Some(i) => counts[i] += 1,
            None => {
                labels.push(rec.label.clone());
                counts.push(1);
            }
        }
    }
    (labels, counts)
}

fn manifest_of(records: &[FeatureRecord]) -> Result<Manifest> {
    Manifest::from_records(
        records
            .iter()
            .map(|r| ManifestRecord {
                id: r.id.clone(),
                label: r.label.clone(),
                source: r.source,
            })
            .collect(),
        |i| i as u64 + 2,
    )
}

/// Runs the full cross-validation protocol on feature records:
/// optionally plan-and-inject synthetic records at `hp.siir`, stratify
/// folds with synthetic records confined to train/validation, train one
/// classifier per fold, and aggregate test metrics.
#[allow(clippy::too_many_arguments)]
pub fn cross_validate(
    records: &[FeatureRecord],
    hp: &Hyperparameters,
    inject: bool,
    k: usize,
    val_ratio: f64,
    epochs: usize,
    batch_size: usize,
    seed: u64,
) -> Result<CrossValSummary> {
    let real: Vec<&FeatureRecord> = records.iter().filter(|r| r.source == Source::Real).collect();
    if real.is_empty() {
        return Err(Error::EmptyPopulation);
    }

    let mut plan: Option<InjectionPlan> = None;
    let mut combined: Vec<FeatureRecord> = real.iter().map(|&r| r.clone()).collect();
    if inject && hp.siir > 0.0 {
        let (labels, counts) = label_census(&real);
        let stats = crate::manifest::LabelStats::new(labels, counts)?;
        let cf = complementary_frequencies(&stats);
        match injection_weights(&cf, &InjectionConfig::new(hp.siir)) {
            Ok(weights) => {
                let built = build_injection_plan(&weights, hp.siir, stats.total())?;
                combined.extend(sample_plan(&built, &real, seed.wrapping_add(101))?);
                plan = Some(built);
            }
            Err(Error::NothingToInject) => {}
            Err(e) => return Err(e),
        }
    }

    let manifest = manifest_of(&combined)?;
    let fold_plan = plan_folds(&manifest, k, val_ratio, seed, plan.as_ref())?;
    let by_id: HashMap<&str, &FeatureRecord> =
        combined.iter().map(|r| (r.id.as_str(), r)).collect();
    let labels = manifest.label_set().to_vec();

    let mut reports = Vec::new();
    let mut matrices = Vec::new();
    for (f, fold) in fold_plan.folds.iter().enumerate() {
        let resolve = |ids: &[String]| -> Vec<&FeatureRecord> {
            ids.iter().map(|id| by_id[id.as_str()]).collect()
        };
        let train = resolve(&fold.train);
        let val = resolve(&fold.val);
        let test = resolve(&fold.test);
        if test.iter().any(|r| r.source == Source::Synthetic) {
            return Err(Error::FoldPlanning(format!(
                "fold {f}: synthetic record leaked into the test split"
            )));
        }
        let outcome = train_classifier(
            &train,
            &val,
            hp,
            epochs,
            batch_size,
            seed.wrapping_add(7919 * (f as u64 + 1)),
        )?;
        let truths: Vec<String> = test.iter().map(|r| r.label.clone()).collect();
        let preds: Vec<String> = test
            .iter()
            .map(|r| outcome.model.predict(&r.features).to_string())
            .collect();
        let cm = confusion_matrix(&truths, &preds, &labels)?;
        reports.push(metrics_from_confusion(&cm)?);
        matrices.push(cm);
    }
    aggregate_folds(&reports, &matrices)
}

/// End-to-end demo configuration. Dataset fields sit at the top level;
/// optimizer and training knobs have published defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyRunConfig {
    #[serde(flatten)]
    pub dataset: ToyDatasetConfig,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_val_ratio")]
    pub val_ratio: f64,
    #[serde(default = "default_cv_epochs")]
    pub cv_epochs: usize,
    #[serde(default = "default_cv_batch")]
    pub cv_batch_size: usize,
    #[serde(default = "default_objective_epochs")]
    pub objective_epochs: usize,
    #[serde(default = "default_objective_batch")]
    pub objective_batch_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sma: Option<SmaConfig>,
}

fn default_folds() -> usize {
    10
}

fn default_val_ratio() -> f64 {
    0.15
}

fn default_cv_epochs() -> usize {
    120
}

fn default_cv_batch() -> usize {
    128
}

fn default_objective_epochs() -> usize {
    15
}

fn default_objective_batch() -> usize {
    128
}

impl ToyRunConfig {
    pub fn from_json(text: &str) -> Result<ToyRunConfig> {
        let config: ToyRunConfig =
            serde_json::from_str(text).map_err(|e| Error::InvalidDocument {
                what: "toy run config",
                message: e.to_string(),
            })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        if self.folds < 2 {
            return Err(Error::config("folds must be >= 2"));
        }
        if !(self.val_ratio > 0.0 && self.val_ratio < 1.0) {
            return Err(Error::config("val_ratio must lie in (0, 1)"));
        }
        if self.cv_epochs == 0 || self.objective_epochs == 0 {
            return Err(Error::config("epoch counts must be >= 1"));
        }
        if self.cv_batch_size == 0 || self.objective_batch_size == 0 {
            return Err(Error::config("batch sizes must be >= 1"));
        }
        if let Some(sma) = &self.sma {
            sma.validate()?;
            if sma.dimensions() != 3 {
                return Err(Error::config(
                    "optimizer config for the toy pipeline must have 3 dimensions",
                ));
            }
        }
        Ok(())
    }
}

/// Full demo output: label statistics, the injection plan actually used,
/// the optimization trace, and cross-validation summaries for the
/// optimized-and-injected arm versus the no-injection baseline.
#[derive(Debug, Clone, Serialize)]
pub struct ToyReport {
    pub labels: Vec<String>,
    pub real_counts: Vec<u64>,
    pub optimization: OptimizationResult,
    pub optimized_hp: Hyperparameters,
    pub plan: Option<InjectionPlanEcho>,
    pub optimized_cv: CrossValSummary,
    pub baseline_cv: CrossValSummary,
}

/// Flat echo of an injection plan for the report.
#[derive(Debug, Clone, Serialize)]
pub struct InjectionPlanEcho {
    pub siir: f64,
    pub n_f_total: u64,
    pub labels: Vec<String>,
    pub counts: Vec<u64>,
}

/// One seeded shuffle of all record ids into (train, val) at `val_ratio`;
/// the fixed split the optimizer objective evaluates against.
pub fn objective_split(
    records: &[FeatureRecord],
    val_ratio: f64,
    seed: u64,
) -> (Vec<String>, Vec<String>) {
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(55));
    let mut ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    ids.shuffle(&mut rng);
    let n_val = ((val_ratio * ids.len() as f64).round() as usize)
        .max(1)
        .min(ids.len().saturating_sub(1));
    let (val_ids, train_ids) = ids.split_at(n_val);
    (train_ids.to_vec(), val_ids.to_vec())
}

/// Generates (or adopts) the dataset, optimizes the classifier targets
/// with the slime mould algorithm, then cross-validates the optimized
/// configuration with weighted injection against the no-injection
/// baseline at default hyperparameters.
pub fn run_toy_pipeline(
    config: &ToyRunConfig,
    supplied: Option<Vec<FeatureRecord>>,
) -> Result<ToyReport> {
    config.validate()?;
    let records = match supplied {
        Some(rows) => {
            let real: Vec<FeatureRecord> = rows
                .into_iter()
                .filter(|r| r.source == Source::Real)
                .collect();
            if real.is_empty() {
                return Err(Error::EmptyPopulation);
            }
            real
        }
        None => generate_toy_dataset(&config.dataset)?,
    };

    let (labels, real_counts) = {
        let refs: Vec<&FeatureRecord> = records.iter().collect();
        label_census(&refs)
    };

    let (train_ids, val_ids) = objective_split(&records, config.val_ratio, config.dataset.seed);
    let mut objective = PipelineObjective::new(&records, train_ids, val_ids, config.dataset.seed);
    objective.epochs = config.objective_epochs;
    objective.batch_size = config.objective_batch_size;
    objective.val_ratio = config.val_ratio;

    let sma_config = config
        .sma
        .clone()
        .unwrap_or_else(|| SmaConfig::classifier_targets(config.dataset.seed));
    let optimization = optimize(
        |x| match Hyperparameters::from_position(x) {
            Ok(hp) => objective.eval(&hp),
            Err(_) => f64::INFINITY,
        },
        &sma_config,
    )?;
    let optimized_hp = Hyperparameters::from_position(&optimization.best_position)?;

    let plan_echo = if optimized_hp.siir > 0.0 {
        let stats = crate::manifest::LabelStats::new(labels.clone(), real_counts.clone())?;
        let cf = complementary_frequencies(&stats);
        match injection_weights(&cf, &InjectionConfig::new(optimized_hp.siir)) {
            Ok(weights) => {
                let plan = build_injection_plan(&weights, optimized_hp.siir, stats.total())?;
                Some(InjectionPlanEcho {
                    siir: plan.siir,
                    n_f_total: plan.n_f_total,
                    labels: plan.labels,
                    counts: plan.counts,
                })
            }
            Err(Error::NothingToInject) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };

    let optimized_cv = cross_validate(
        &records,
        &optimized_hp,
        true,
        config.folds,
        config.val_ratio,
        config.cv_epochs,
        config.cv_batch_size,
        config.dataset.seed,
    )?;
    let baseline_hp = Hyperparameters {
        siir: 0.0,
        ..Hyperparameters::default()
    };
    let baseline_cv = cross_validate(
        &records,
        &baseline_hp,
        false,
        config.folds,
        config.val_ratio,
        config.cv_epochs,
        config.cv_batch_size,
        config.dataset.seed,
    )?;

    Ok(ToyReport {
        labels,
        real_counts,
        optimization,
        optimized_hp,
        plan: plan_echo,
        optimized_cv,
        baseline_cv,
    })
}

/// Parses a feature CSV: header `id,label,source,f0,f1,...` with a
/// consistent column count and finite feature values.
pub fn parse_feature_records(text: &str) -> Result<Vec<FeatureRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let dim;
    {
        let headers = match reader.headers() {
            Ok(h) => h.clone(),
            Err(e) => return Err(Error::parse(1, e.to_string())),
        };
        let got: Vec<&str> = headers.iter().map(|h| h.trim()).collect();
        if got.len() < 4 || got[0] != "id" || got[1] != "label" || got[2] != "source" {
            return Err(Error::parse(
                1,
                "expected header `id,label,source,f0,...` with at least one feature column",
            ));
        }
        dim = got.len() - 3;
    }
    let mut records = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for row in reader.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                return Err(Error::parse(line, e.to_string()));
            }
        };
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != dim + 3 {
            return Err(Error::parse(
                line,
                format!("expected {} fields, found {}", dim + 3, row.len()),
            ));
        }
        if row[0].is_empty() || row[1].is_empty() {
            return Err(Error::parse(line, "id and label must be non-empty"));
        }
        if !seen.insert(row[0].to_string()) {
            return Err(Error::parse(line, format!("duplicate id `{}`", &row[0])));
        }
        let source = Source::parse(&row[2])
            .ok_or_else(|| Error::parse(line, format!("unknown source `{}`", &row[2])))?;
        let mut features = Vec::with_capacity(dim);
        for field in row.iter().skip(3) {
            let value: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::parse(line, format!("`{field}` is not a number")))?;
            if !value.is_finite() {
                return Err(Error::parse(line, "feature values must be finite"));
            }
            features.push(value);
        }
        records.push(FeatureRecord {
            id: row[0].to_string(),
            label: row[1].to_string(),
            source,
            features,
        });
    }
    Ok(records)
}

/// Serializes records to the feature CSV format.
pub fn write_feature_csv(records: &[FeatureRecord]) -> String {
    let dim = records.first().map_or(0, |r| r.features.len());
    let mut out = String::from("id,label,source");
    for d in 0..dim {
        out.push_str(&format!(",f{d}"));
    }
    out.push('\n');
    for rec in records {
        out.push_str(&format!("{},{},{}", rec.id, rec.label, rec.source));
        for &x in &rec.features {
            out.push_str(&format!(",{x}"));
        }
        out.push('\n');
    }
    out
}
