//! Cross-validation planning and multi-class metrics.
//!
//! Test folds are stratified over the real records only; synthetic records
//! are confined to the train/validation side so test metrics always
//! describe real data. Metrics are macro-averaged one-vs-rest, aggregated
//! over folds as mean plus population standard deviation.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::manifest::{Manifest, Source};
use crate::rebalance::InjectionPlan;

/// Train/validation/test id assignment for one fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Fold {
    pub test: Vec<String>,
    pub train: Vec<String>,
    pub val: Vec<String>,
}

/// A complete k-fold assignment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldPlan {
    pub k: usize,
    pub val_ratio: f64,
    pub seed: u64,
    pub folds: Vec<Fold>,
}

/// Square count matrix; rows are true labels, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }
}

/// The five macro metrics of one fold. Zero-denominator per-class terms
/// count as 0 and are listed in `flags`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub recall: f64,
    pub specificity: f64,
    pub f1: f64,
    pub precision: f64,
    pub accuracy: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl MetricsReport {
    fn metric(&self, name: &str) -> f64 {
        match name {
            "recall" => self.recall,
            "specificity" => self.specificity,
            "f1" => self.f1,
            "precision" => self.precision,
            "accuracy" => self.accuracy,
            _ => unreachable!("unknown metric {name}"),
        }
    }
}

/// Mean and population standard deviation of one metric over folds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricValue {
    pub mean: f64,
    pub std: f64,
}

/// Cross-fold aggregation: per-metric mean/std, the element-wise averaged
/// confusion matrix, and its row-normalized form (zero-support rows stay
/// all-zero).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossValSummary {
    pub labels: Vec<String>,
    pub recall: MetricValue,
    pub specificity: MetricValue,
    pub f1: MetricValue,
    pub precision: MetricValue,
    pub accuracy: MetricValue,
    pub averaged_matrix: Vec<Vec<f64>>,
    pub normalized_matrix: Vec<Vec<f64>>,
    pub fold_reports: Vec<MetricsReport>,
}

/// Stratified k-fold assignment. Real records are shuffled per label and
/// dealt round-robin with a rotating start offset, which bounds per-label
/// and whole-fold test-size skew by one. The remaining real records and
/// all synthetic records are each split into train/validation at
/// `val_ratio` per fold. When an injection plan is supplied, the
/// manifest's synthetic census must match it exactly.
pub fn plan_folds(
    manifest: &Manifest,
    k: usize,
    val_ratio: f64,
    seed: u64,
    plan: Option<&InjectionPlan>,
) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::FoldPlanning("k must be >= 2".into()));
    }
    if !(val_ratio > 0.0 && val_ratio < 1.0) {
        return Err(Error::FoldPlanning(format!(
            "val_ratio must lie in (0, 1), got {val_ratio}"
        )));
    }

    let mut real_by_label: Vec<Vec<&str>> = vec![Vec::new(); manifest.label_set().len()];
    let mut synthetic_ids: Vec<&str> = Vec::new();
    let mut synthetic_by_label: HashMap<&str, u64> = HashMap::new();
    for rec in manifest.records() {
        match rec.source {
            Source::Real => {
                let idx = manifest
                    .label_set()
                    .iter()
                    .position(|l| l == &rec.label)
                    .expect("label in label set");
                real_by_label[idx].push(&rec.id);
            }
            Source::Synthetic => {
                synthetic_ids.push(&rec.id);
                *synthetic_by_label.entry(rec.label.as_str()).or_insert(0) += 1;
            }
        }
    }

    if let Some(plan) = plan {
        for (label, &want) in plan.labels.iter().zip(&plan.counts) {
            let have = synthetic_by_label.get(label.as_str()).copied().unwrap_or(0);
            if have != want {
                return Err(Error::FoldPlanning(format!(
                    "manifest carries {have} synthetic records for label `{label}`, plan requires {want}"
                )));
            }
        }
        for (label, &have) in &synthetic_by_label {
            if !plan.labels.iter().any(|l| l == label) {
                return Err(Error::FoldPlanning(format!(
                    "manifest carries {have} synthetic records for label `{label}` not covered by the plan"
                )));
            }
        }
    }

    for (label, ids) in manifest.label_set().iter().zip(&real_by_label) {
        if ids.len() < k {
            return Err(Error::FoldPlanning(format!(
                "label `{label}` has {} real records, fewer than k = {k}",
                ids.len()
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test_sets: Vec<Vec<String>> = vec![Vec::new(); k];
    let mut offset = 0usize;
    for ids in &mut real_by_label {
        ids.shuffle(&mut rng);
        for (j, id) in ids.iter().enumerate() {
            test_sets[(offset + j) % k].push((*id).to_string());
        }
        offset = (offset + ids.len()) % k;
    }

    let all_real: Vec<&str> = real_by_label.iter().flatten().copied().collect();
    let mut folds = Vec::with_capacity(k);
    for test in test_sets {
        let held: HashSet<&str> = test.iter().map(|s| s.as_str()).collect();
        let mut remaining: Vec<&str> = all_real
            .iter()
            .copied()
            .filter(|id| !held.contains(id))
            .collect();
        remaining.shuffle(&mut rng);
        let mut synthetic = synthetic_ids.clone();
        synthetic.shuffle(&mut rng);

        // Round the combined validation size first so the overall ratio
        // deviates by at most half a record, then give the synthetic pool
        // its own rounded share of it.
        let pool = remaining.len() + synthetic.len();
        let n_val_total = ((val_ratio * pool as f64).round() as usize).min(pool);
        let n_val_syn = ((val_ratio * synthetic.len() as f64).round() as usize)
            .min(synthetic.len())
            .min(n_val_total);
        let n_val_real = (n_val_total - n_val_syn).min(remaining.len());
        let mut val: Vec<String> = remaining[..n_val_real]
            .iter()
            .map(|s| s.to_string())
            .collect();
        val.extend(synthetic[..n_val_syn].iter().map(|s| s.to_string()));
        let mut train: Vec<String> = remaining[n_val_real..]
            .iter()
            .map(|s| s.to_string())
            .collect();
        train.extend(synthetic[n_val_syn..].iter().map(|s| s.to_string()));

        folds.push(Fold { test, train, val });
    }

    Ok(FoldPlan {
        k,
        val_ratio,
        seed,
        folds,
    })
}

/// Tabulates truth/prediction pairs into counts over `labels`.
pub fn confusion_matrix(
    truths: &[String],
    predictions: &[String],
    labels: &[String],
) -> Result<ConfusionMatrix> {
    if truths.len() != predictions.len() {
        return Err(Error::Metrics(format!(
            "{} truths vs {} predictions",
            truths.len(),
            predictions.len()
        )));
    }
    let index: HashMap<&str, usize> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let mut counts = vec![vec![0u64; labels.len()]; labels.len()];
    for (truth, pred) in truths.iter().zip(predictions) {
        let ti = *index
            .get(truth.as_str())
            .ok_or_else(|| Error::Metrics(format!("unknown label `{truth}`")))?;
        let pi = *index
            .get(pred.as_str())
            .ok_or_else(|| Error::Metrics(format!("unknown label `{pred}`")))?;
        counts[ti][pi] += 1;
    }
    Ok(ConfusionMatrix {
        labels: labels.to_vec(),
        counts,
    })
}

/// Macro one-vs-rest metrics from a confusion matrix.
pub fn metrics_from_confusion(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let n = cm.labels.len();
    let total = cm.total();
    if n == 0 || total == 0 {
        return Err(Error::Metrics("confusion matrix has no observations".into()));
    }
    let mut flags = Vec::new();
    let mut recall_sum = 0.0;
    let mut specificity_sum = 0.0;
    let mut precision_sum = 0.0;
    let mut f1_sum = 0.0;
    for c in 0..n {
        let tp = cm.counts[c][c] as f64;
        let row: u64 = cm.counts[c].iter().sum();
        let col: u64 = (0..n).map(|r| cm.counts[r][c]).sum();
        let fn_ = row as f64 - tp;
        let fp = col as f64 - tp;
        let tn = total as f64 - tp - fn_ - fp;
        let label = &cm.labels[c];

        let mut ratio = |num: f64, den: f64, what: &str| -> f64 {
            if den == 0.0 {
                flags.push(format!("{what} undefined for label `{label}`; counted as 0"));
                0.0
            } else {
                num / den
            }
        };
        let recall = ratio(tp, tp + fn_, "recall");
        let specificity = ratio(tn, tn + fp, "specificity");
        let precision = ratio(tp, tp + fp, "precision");
        let f1 = if precision + recall == 0.0 {
            flags.push(format!("f1 undefined for label `{label}`; counted as 0"));
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        recall_sum += recall;
        specificity_sum += specificity;
        precision_sum += precision;
        f1_sum += f1;
    }
    Ok(MetricsReport {
        recall: recall_sum / n as f64,
        specificity: specificity_sum / n as f64,
        f1: f1_sum / n as f64,
        precision: precision_sum / n as f64,
        accuracy: cm.trace() as f64 / total as f64,
        flags,
    })
}

fn mean_std(values: &[f64]) -> MetricValue {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    MetricValue {
        mean,
        std: var.sqrt(),
    }
}

/// Aggregates per-fold reports and matrices: per-metric mean and
/// population standard deviation, element-wise matrix average, and the
/// row-normalized average.
pub fn aggregate_folds(
    reports: &[MetricsReport],
    matrices: &[ConfusionMatrix],
) -> Result<CrossValSummary> {
    if reports.is_empty() {
        return Err(Error::Metrics("need at least one fold report".into()));
    }
    if reports.len() != matrices.len() {
        return Err(Error::Metrics(format!(
            "{} reports vs {} matrices",
            reports.len(),
            matrices.len()
        )));
    }
    let labels = matrices[0].labels.clone();
    for m in matrices {
        if m.labels != labels {
            return Err(Error::Metrics("matrices have mismatched label orders".into()));
        }
    }

    let n = labels.len();
    let mut averaged = vec![vec![0.0f64; n]; n];
    for m in matrices {
        for (row_sum, row) in averaged.iter_mut().zip(&m.counts) {
            for (slot, &v) in row_sum.iter_mut().zip(row) {
                *slot += v as f64;
            }
        }
    }
    for row in averaged.iter_mut() {
        for slot in row.iter_mut() {
            *slot /= matrices.len() as f64;
        }
    }
    let normalized = averaged
        .iter()
        .map(|row| {
            let sum: f64 = row.iter().sum();
            if sum > 0.0 {
                row.iter().map(|v| v / sum).collect()
            } else {
                vec![0.0; n]
            }
        })
        .collect();

    let collect = |name: &str| -> MetricValue {
        let values: Vec<f64> = reports.iter().map(|r| r.metric(name)).collect();
        mean_std(&values)
    };

    Ok(CrossValSummary {
        labels,
        recall: collect("recall"),
        specificity: collect("specificity"),
        f1: collect("f1"),
        precision: collect("precision"),
        accuracy: collect("accuracy"),
        averaged_matrix: averaged,
        normalized_matrix: normalized,
        fold_reports: reports.to_vec(),
    })
}

/// One row of a predictions CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionRow {
    pub fold: u32,
    pub id: String,
    pub truth: String,
    pub predicted: String,
}

/// Parses predictions CSV text with header `fold,id,true_label,predicted_label`.
pub fn parse_predictions(text: &str) -> Result<Vec<PredictionRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    {
        let headers = match reader.headers() {
            Ok(h) => h.clone(),
            Err(e) => return Err(Error::parse(1, e.to_string())),
        };
        if !text.is_empty() {
            crate::manifest::expect_header(&headers, &["fold", "id", "true_label", "predicted_label"])?;
        }
    }
    let mut rows = Vec::new();
    for row in reader.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                return Err(Error::parse(line, e.to_string()));
            }
        };
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != 4 {
            return Err(Error::parse(
                line,
                format!("expected 4 fields, found {}", row.len()),
            ));
        }
        let fold: u32 = row[0]
            .trim()
            .parse()
            .map_err(|_| Error::parse(line, format!("fold `{}` is not a non-negative integer", &row[0])))?;
        if row[2].is_empty() || row[3].is_empty() {
            return Err(Error::parse(line, "labels must be non-empty"));
        }
        rows.push(PredictionRow {
            fold,
            id: row[1].to_string(),
            truth: row[2].to_string(),
            predicted: row[3].to_string(),
        });
    }
    Ok(rows)
}

/// Builds per-fold confusion matrices from prediction rows (labels in
/// first-appearance order, folds ascending) and aggregates them.
pub fn evaluate_predictions(rows: &[PredictionRow]) -> Result<CrossValSummary> {
    if rows.is_empty() {
        return Err(Error::Metrics("no prediction rows".into()));
    }
    let mut labels: Vec<String> = Vec::new();
    for row in rows {
        for l in [&row.truth, &row.predicted] {
            if !labels.iter().any(|k| k == l) {
                labels.push(l.clone());
            }
        }
    }
    let mut by_fold: BTreeMap<u32, (Vec<String>, Vec<String>)> = BTreeMap::new();
    for row in rows {
        let entry = by_fold.entry(row.fold).or_default();
        entry.0.push(row.truth.clone());
        entry.1.push(row.predicted.clone());
    }
    let mut reports = Vec::new();
    let mut matrices = Vec::new();
    for (truths, preds) in by_fold.values() {
        let cm = confusion_matrix(truths, preds, &labels)?;
        reports.push(metrics_from_confusion(&cm)?);
        matrices.push(cm);
    }
    aggregate_folds(&reports, &matrices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::{Manifest, ManifestRecord};

    fn manifest(real: &[(&str, usize)], synthetic: &[(&str, usize)]) -> Manifest {
        let mut records = Vec::new();
        for (label, n) in real {
            for i in 0..*n {
                records.push(ManifestRecord {
                    id: format!("r-{label}-{i}"),
                    label: label.to_string(),
                    source: Source::Real,
                });
            }
        }
        for (label, n) in synthetic {
            for i in 0..*n {
                records.push(ManifestRecord {
                    id: format!("s-{label}-{i}"),
                    label: label.to_string(),
                    source: Source::Synthetic,
                });
            }
        }
        Manifest::from_records(records, |i| i as u64 + 2).unwrap()
    }

    fn labels(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn fold_sizes_differ_by_at_most_one_globally_and_per_label() {
        let m = manifest(&[("A", 63), ("B", 40)], &[]);
        let plan = plan_folds(&m, 5, 0.15, 9, None).unwrap();
        let mut sizes: Vec<usize> = plan.folds.iter().map(|f| f.test.len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, [20, 20, 21, 21, 21]); // 103 = 5 * 20 + 3
        for label in ["A", "B"] {
            let per_fold: Vec<usize> = plan
                .folds
                .iter()
                .map(|f| {
                    f.test
                        .iter()
                        .filter(|id| id.starts_with(&format!("r-{label}-")))
                        .count()
                })
                .collect();
            let max = per_fold.iter().max().unwrap();
            let min = per_fold.iter().min().unwrap();
            assert!(max - min <= 1, "label {label}: {per_fold:?}");
        }
    }

    #[test]
    fn test_sets_partition_the_real_records() {
        let m = manifest(&[("A", 30), ("B", 25)], &[("A", 7)]);
        let plan = plan_folds(&m, 4, 0.2, 3, None).unwrap();
        let mut seen = HashSet::new();
        for fold in &plan.folds {
            for id in &fold.test {
                assert!(seen.insert(id.clone()), "duplicate test id {id}");
                assert!(id.starts_with("r-"), "synthetic id {id} in test");
            }
        }
        assert_eq!(seen.len(), 55);
    }

    #[test]
    fn fold_covers_everything_and_keeps_ratio() {
        let m = manifest(&[("A", 40), ("B", 30)], &[("B", 20)]);
        let plan = plan_folds(&m, 5, 0.15, 1, None).unwrap();
        for fold in &plan.folds {
            let train: HashSet<_> = fold.train.iter().collect();
            let val: HashSet<_> = fold.val.iter().collect();
            assert!(train.is_disjoint(&val));
            let covered = fold.test.len() + fold.train.len() + fold.val.len();
            assert_eq!(covered, 90);
            let n = (fold.train.len() + fold.val.len()) as f64;
            let ratio = fold.val.len() as f64 / n;
            assert!((ratio - 0.15).abs() <= 1.0 / n, "ratio {ratio}");
        }
    }

    #[test]
    fn k_below_two_is_rejected() {
        let m = manifest(&[("A", 10)], &[]);
        let err = plan_folds(&m, 1, 0.15, 0, None).unwrap_err();
        assert!(err.to_string().contains("k must be >= 2"));
    }

    #[test]
    fn scarce_label_is_named_in_error() {
        let m = manifest(&[("A", 20), ("Rare", 3)], &[]);
        let err = plan_folds(&m, 5, 0.15, 0, None).unwrap_err();
        assert!(err.to_string().contains("Rare"), "{err}");
    }

    #[test]
    fn plan_census_mismatch_is_rejected() {
        let m = manifest(&[("A", 20), ("B", 12)], &[("B", 4)]);
        let plan = InjectionPlan {
            siir: 0.2,
            n_f_total: 6,
            labels: vec!["A".into(), "B".into()],
            counts: vec![0, 6],
        };
        let err = plan_folds(&m, 2, 0.15, 0, Some(&plan)).unwrap_err();
        assert!(err.to_string().contains("plan requires 6"), "{err}");

        let matching = InjectionPlan {
            siir: 0.2,
            n_f_total: 4,
            labels: vec!["A".into(), "B".into()],
            counts: vec![0, 4],
        };
        plan_folds(&m, 2, 0.15, 0, Some(&matching)).unwrap();
    }

    #[test]
    fn same_seed_same_plan() {
        let m = manifest(&[("A", 30), ("B", 18)], &[("B", 6)]);
        let a = plan_folds(&m, 3, 0.15, 77, None).unwrap();
        let b = plan_folds(&m, 3, 0.15, 77, None).unwrap();
        assert_eq!(a, b);
        let c = plan_folds(&m, 3, 0.15, 78, None).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn confusion_matches_hand_counts() {
        let t = labels(&["A", "B", "A"]);
        let cm = confusion_matrix(&t, &t, &labels(&["A", "B"])).unwrap();
        assert_eq!(cm.counts, [[2, 0], [0, 1]]);

        let truths = labels(&["A", "A", "B", "B"]);
        let preds = labels(&["A", "B", "B", "B"]);
        let cm = confusion_matrix(&truths, &preds, &labels(&["A", "B"])).unwrap();
        assert_eq!(cm.counts, [[1, 1], [0, 2]]);
    }

    #[test]
    fn empty_inputs_give_zero_matrix() {
        let cm = confusion_matrix(&[], &[], &labels(&["A", "B"])).unwrap();
        assert_eq!(cm.counts, [[0, 0], [0, 0]]);
        assert!(metrics_from_confusion(&cm).is_err());
    }

    #[test]
    fn unknown_label_is_an_error() {
        let err = confusion_matrix(&labels(&["C"]), &labels(&["C"]), &labels(&["A"])).unwrap_err();
        assert!(err.to_string().contains("unknown label"));
    }

    #[test]
    fn perfect_diagonal_scores_one_everywhere() {
        let cm = ConfusionMatrix {
            labels: labels(&["A", "B"]),
            counts: vec![vec![50, 0], vec![0, 50]],
        };
        let m = metrics_from_confusion(&cm).unwrap();
        assert_eq!(
            [m.recall, m.specificity, m.f1, m.precision, m.accuracy],
            [1.0; 5]
        );
        assert!(m.flags.is_empty());
    }

    #[test]
    fn hand_computed_two_class_metrics() {
        let cm = ConfusionMatrix {
            labels: labels(&["A", "B"]),
            counts: vec![vec![8, 2], vec![3, 7]],
        };
        let m = metrics_from_confusion(&cm).unwrap();
        assert!((m.accuracy - 0.75).abs() < 1e-12);
        assert!((m.recall - 0.75).abs() < 1e-12);
        assert!((m.specificity - 0.75).abs() < 1e-12);
        assert!((m.precision - 0.7525).abs() < 1e-4);
        assert!((m.f1 - 0.7494).abs() < 1e-4);
    }

    #[test]
    fn binary_macro_recall_equals_macro_specificity() {
        for seed in 0..20u64 {
            let a = seed.wrapping_mul(7) % 13 + 1;
            let b = seed.wrapping_mul(11) % 9;
            let c = seed.wrapping_mul(5) % 7;
            let d = seed.wrapping_mul(3) % 15 + 1;
            let cm = ConfusionMatrix {
                labels: labels(&["P", "N"]),
                counts: vec![vec![a, b], vec![c, d]],
            };
            let m = metrics_from_confusion(&cm).unwrap();
            assert!(
                (m.recall - m.specificity).abs() < 1e-12,
                "seed {seed}: {} vs {}",
                m.recall,
                m.specificity
            );
        }
    }

    #[test]
    fn aggregate_two_folds() {
        let reports = vec![
            MetricsReport {
                recall: 0.9,
                specificity: 0.9,
                f1: 0.9,
                precision: 0.9,
                accuracy: 0.9,
                flags: vec![],
            },
            MetricsReport {
                recall: 1.0,
                specificity: 1.0,
                f1: 1.0,
                precision: 1.0,
                accuracy: 1.0,
                flags: vec![],
            },
        ];
        let cm = ConfusionMatrix {
            labels: labels(&["A"]),
            counts: vec![vec![5]],
        };
        let summary = aggregate_folds(&reports, &[cm.clone(), cm]).unwrap();
        assert!((summary.accuracy.mean - 0.95).abs() < 1e-12);
        assert!((summary.accuracy.std - 0.05).abs() < 1e-12);
        assert_eq!(summary.normalized_matrix, [[1.0]]);
    }

    #[test]
    fn single_fold_has_zero_std() {
        let report = MetricsReport {
            recall: 0.8,
            specificity: 0.7,
            f1: 0.6,
            precision: 0.5,
            accuracy: 0.4,
            flags: vec![],
        };
        let cm = ConfusionMatrix {
            labels: labels(&["A", "B"]),
            counts: vec![vec![3, 1], vec![0, 2]],
        };
        let summary = aggregate_folds(&[report], &[cm]).unwrap();
        assert_eq!(summary.recall.std, 0.0);
        assert_eq!(summary.accuracy.mean, 0.4);
    }

    #[test]
    fn aggregate_matches_brute_force_summation() {
        let mut reports = Vec::new();
        let mut matrices = Vec::new();
        for i in 0..10u64 {
            let v = |k: u64| ((i * 13 + k * 7) % 100) as f64 / 100.0;
            reports.push(MetricsReport {
                recall: v(1),
                specificity: v(2),
                f1: v(3),
                precision: v(4),
                accuracy: v(5),
                flags: vec![],
            });
            matrices.push(ConfusionMatrix {
                labels: labels(&["A", "B"]),
                counts: vec![vec![i + 1, i % 3], vec![i % 2, 2 * i + 1]],
            });
        }
        let summary = aggregate_folds(&reports, &matrices).unwrap();
        // Independent recomputation.
        let accs: Vec<f64> = reports.iter().map(|r| r.accuracy).collect();
        let mean = accs.iter().sum::<f64>() / 10.0;
        let std = (accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / 10.0).sqrt();
        assert!((summary.accuracy.mean - mean).abs() < 1e-12);
        assert!((summary.accuracy.std - std).abs() < 1e-12);
        let avg00: f64 = matrices.iter().map(|m| m.counts[0][0] as f64).sum::<f64>() / 10.0;
        assert!((summary.averaged_matrix[0][0] - avg00).abs() < 1e-12);
        for row in &summary.normalized_matrix {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn mismatched_label_orders_are_rejected() {
        let r = MetricsReport {
            recall: 1.0,
            specificity: 1.0,
            f1: 1.0,
            precision: 1.0,
            accuracy: 1.0,
            flags: vec![],
        };
        let a = ConfusionMatrix {
            labels: labels(&["A", "B"]),
            counts: vec![vec![1, 0], vec![0, 1]],
        };
        let b = ConfusionMatrix {
            labels: labels(&["B", "A"]),
            counts: vec![vec![1, 0], vec![0, 1]],
        };
        assert!(aggregate_folds(&[r.clone(), r], &[a, b]).is_err());
    }

    #[test]
    fn predictions_round_trip_through_evaluate() {
        let csv = "fold,id,true_label,predicted_label\n\
                   0,x1,A,A\n0,x2,B,B\n1,y1,A,B\n1,y2,B,B\n";
        let rows = parse_predictions(csv).unwrap();
        assert_eq!(rows.len(), 4);
        let summary = evaluate_predictions(&rows).unwrap();
        assert_eq!(summary.labels, ["A", "B"]);
        assert_eq!(summary.fold_reports.len(), 2);
        assert!((summary.accuracy.mean - 0.75).abs() < 1e-12);
    }

    #[test]
    fn predictions_parse_errors_name_lines() {
        let err = parse_predictions("fold,id,true_label,predicted_label\nnope,x,A,B\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = parse_predictions("fold,id,oops\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }
}
