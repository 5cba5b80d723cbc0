//! Weighted synthetic-injection arithmetic.
//!
//! Starting from real per-label frequencies, each label's gap to the most
//! frequent label (its complementary frequency) determines its share of the
//! synthetic budget. The budget itself comes from the synthetic-images
//! injection ratio SIIR = N_f / (N_f + N_r), so N_f = SIIR * N_r / (1 - SIIR).
//! Fractional per-label quotas are integerized by largest-remainder
//! apportionment so the quotas always sum to the budget exactly.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::manifest::LabelStats;

/// Injection parameters: the overall synthetic ratio and an optional
/// per-label fine-tuning factor (default 1.0).
#[derive(Debug, Clone)]
pub struct InjectionConfig {
    pub siir: f64,
    pub tuning: HashMap<String, f64>,
}

impl InjectionConfig {
    pub fn new(siir: f64) -> InjectionConfig {
        InjectionConfig {
            siir,
            tuning: HashMap::new(),
        }
    }

    pub fn with_tuning(mut self, label: impl Into<String>, a: f64) -> InjectionConfig {
        self.tuning.insert(label.into(), a);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.siir) || !self.siir.is_finite() {
            return Err(Error::RatioOutOfRange(self.siir));
        }
        for (label, a) in &self.tuning {
            if !a.is_finite() || *a <= 0.0 {
                return Err(Error::config(format!(
                    "tuning factor for `{label}` must be a positive real (got {a})"
                )));
            }
        }
        Ok(())
    }

    fn tuning_for(&self, label: &str) -> f64 {
        self.tuning.get(label).copied().unwrap_or(1.0)
    }
}

/// Gap of every label to the reference (maximum-frequency) label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CfTable {
    pub reference_label: String,
    pub labels: Vec<String>,
    pub cf: Vec<u64>,
    pub total_cf: u64,
}

/// Per-label injection weights: cf share times the tuning factor.
/// With all tuning factors at 1 the weights sum to 1 and the reference
/// label contributes 0.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    pub labels: Vec<String>,
    pub weights: Vec<f64>,
}

/// Integer synthetic counts per label, summing to the total budget.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionPlan {
    pub siir: f64,
    pub n_f_total: u64,
    pub labels: Vec<String>,
    pub counts: Vec<u64>,
}

impl InjectionPlan {
    pub fn count_of(&self, label: &str) -> Option<u64> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.counts[i])
    }
}

/// Computes each label's gap to the most frequent label. Frequency ties
/// for the reference break by label-set order.
pub fn complementary_frequencies(stats: &LabelStats) -> CfTable {
    let (ref_idx, &ref_count) = stats
        .counts()
        .iter()
        .enumerate()
        .max_by_key(|&(i, &n)| (n, std::cmp::Reverse(i)))
        .expect("stats has at least one label");
    let cf: Vec<u64> = stats.counts().iter().map(|&n| ref_count - n).collect();
    let total_cf = cf.iter().sum();
    CfTable {
        reference_label: stats.labels()[ref_idx].clone(),
        labels: stats.labels().to_vec(),
        cf,
        total_cf,
    }
}

/// w_label = (cf_label / total_cf) * a_label. Errors when every label is
/// already at the reference frequency (total_cf = 0): there is nothing
/// to inject and callers should know.
pub fn injection_weights(cf: &CfTable, config: &InjectionConfig) -> Result<WeightTable> {
    config.validate()?;
    if cf.total_cf == 0 {
        return Err(Error::NothingToInject);
    }
    let weights = cf
        .labels
        .iter()
        .zip(&cf.cf)
        .map(|(label, &n)| (n as f64 / cf.total_cf as f64) * config.tuning_for(label))
        .collect();
    Ok(WeightTable {
        labels: cf.labels.clone(),
        weights,
    })
}

/// Total synthetic budget N_f = round(siir * n_real / (1 - siir)),
/// rounding half away from zero.
pub fn total_synthetic_count(siir: f64, n_real: u64) -> Result<u64> {
    if !siir.is_finite() || !(0.0..1.0).contains(&siir) {
        return Err(Error::RatioOutOfRange(siir));
    }
    if n_real == 0 {
        return Err(Error::config("real population must be positive"));
    }
    let exact = siir * n_real as f64 / (1.0 - siir);
    if !exact.is_finite() || exact > u64::MAX as f64 {
        return Err(Error::config(format!(
            "synthetic budget overflows for siir={siir}, n_real={n_real}"
        )));
    }
    Ok(exact.round() as u64)
}

/// Builds the per-label plan: ideal quota N_f * w_label, integerized by
/// largest-remainder apportionment. With untuned weights the counts sum
/// to N_f exactly; with tuning the target is round(N_f * sum(w)).
pub fn build_injection_plan(
    weights: &WeightTable,
    siir: f64,
    n_real: u64,
) -> Result<InjectionPlan> {
    let n_f = total_synthetic_count(siir, n_real)?;
    let weight_sum: f64 = weights.weights.iter().sum();
    let scaled = n_f as f64 * weight_sum;
    if !scaled.is_finite() || scaled > 1e15 {
        return Err(Error::config(format!(
            "injection plan total {scaled} is not a usable count"
        )));
    }
    let target = scaled.round() as u64;
    let quotas: Vec<f64> = weights.weights.iter().map(|&w| n_f as f64 * w).collect();
    let counts = largest_remainder(&quotas, target);
    Ok(InjectionPlan {
        siir,
        n_f_total: target,
        labels: weights.labels.clone(),
        counts,
    })
}

/// Largest-remainder apportionment: floor every quota, then hand the
/// remaining units to the largest fractional parts (ties by position).
/// The result always sums to `target`.
fn largest_remainder(quotas: &[f64], target: u64) -> Vec<u64> {
    let mut counts: Vec<u64> = quotas.iter().map(|&q| q.max(0.0).floor() as u64).collect();
    let mut leftover = target.saturating_sub(counts.iter().sum::<u64>());
    // Floors can only undershoot the rounded target by less than one unit
    // per label, but guard the loop so it terminates for any input.
    while leftover > 0 {
        let mut order: Vec<usize> = (0..quotas.len()).collect();
        order.sort_by(|&a, &b| {
            let fa = quotas[a] - quotas[a].floor();
            let fb = quotas[b] - quotas[b].floor();
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        for idx in order {
            if leftover == 0 {
                break;
            }
            counts[idx] += 1;
            leftover -= 1;
        }
    }
    // Floors may also overshoot the target when tuned weights shrink it;
    // trim from the smallest fractional parts.
    let mut excess = counts.iter().sum::<u64>().saturating_sub(target);
    while excess > 0 {
        let mut order: Vec<usize> = (0..quotas.len()).collect();
        order.sort_by(|&a, &b| {
            let fa = quotas[a] - quotas[a].floor();
            let fb = quotas[b] - quotas[b].floor();
            fa.total_cmp(&fb).then(a.cmp(&b))
        });
        for idx in order {
            if excess == 0 {
                break;
            }
            if counts[idx] > 0 {
                counts[idx] -= 1;
                excess -= 1;
            }
        }
    }
    counts
}
