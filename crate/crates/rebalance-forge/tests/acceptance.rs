//! Acceptance suite: one test per shipped criterion. Each test prints a
//! `criterion N: PASS` line with its measured values (visible under
//! `cargo test -- --nocapture`); the test name itself is the pass/fail
//! line in the default report.

use std::cell::RefCell;
use std::collections::HashSet;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rebalance_forge::evaluation::{
    confusion_matrix, metrics_from_confusion, plan_folds, ConfusionMatrix,
};
use rebalance_forge::manifest::{LabelStats, Manifest, ManifestRecord, Source};
use rebalance_forge::progan::{
    builtin_critic_spec, builtin_generator_spec, stage_schedule, validate_network, wgan_gp_loss,
    TensorShape,
};
use rebalance_forge::rebalance::{
    build_injection_plan, complementary_frequencies, injection_weights, InjectionConfig,
};
use rebalance_forge::sma::{optimize, SmaConfig};
use rebalance_forge::toy::{
    cross_validate, generate_toy_dataset, ClassSpec, Hyperparameters, ToyDatasetConfig,
};

const REFERENCE_FREQUENCIES: [(&str, u64); 4] = [
    ("COVID-19", 3616),
    ("Normal", 10192),
    ("Viral Pneumonia", 1345),
    ("Lung Opacity", 6012),
];

fn reference_stats() -> LabelStats {
    LabelStats::new(
        REFERENCE_FREQUENCIES.iter().map(|(l, _)| l.to_string()).collect(),
        REFERENCE_FREQUENCIES.iter().map(|&(_, n)| n).collect(),
    )
    .unwrap()
}

fn shape(c: u32, h: u32, w: u32) -> TensorShape {
    TensorShape::new(c, h, w).unwrap()
}

#[test]
fn criterion_01_injection_weight_table_reproduction() {
    let stats = reference_stats();
    let start = Instant::now();
    let cf = complementary_frequencies(&stats);
    let weights = injection_weights(&cf, &InjectionConfig::new(0.2)).unwrap();
    let elapsed = start.elapsed();

    assert_eq!(cf.cf, [6576, 0, 8847, 4180]);
    let expected = [(0, 0.3355, 0.34), (2, 0.4513, 0.45), (3, 0.2132, 0.21)];
    for (idx, full, two_dp) in expected {
        let w = weights.weights[idx];
        assert!((w - full).abs() <= 1e-4, "weight[{idx}] = {w}, want {full}");
        assert!(
            ((w * 100.0).round() / 100.0 - two_dp).abs() < 1e-12,
            "weight[{idx}] rounds to {}, want {two_dp}",
            (w * 100.0).round() / 100.0
        );
    }
    assert!(
        elapsed.as_micros() < 1000,
        "computation took {elapsed:?}, budget 1 ms"
    );
    println!(
        "criterion 1: PASS (cf 6576/8847/4180, weights {:.4}/{:.4}/{:.4}, {elapsed:?})",
        weights.weights[0], weights.weights[2], weights.weights[3]
    );
}

#[test]
fn criterion_02_label_ratio_reproduction() {
    let stats = reference_stats();
    let expected = [0.1708, 0.4815, 0.0635, 0.2841];
    for (got, want) in stats.ratios().iter().zip(expected) {
        assert!(
            (got - want).abs() <= 1e-4,
            "ratio {got} deviates from {want}"
        );
    }
    println!("criterion 2: PASS (ratios within 1e-4 of 0.1708/0.4815/0.0635/0.2841)");
}

/// Independent exact-rational largest-remainder oracle over u128
/// arithmetic; no floating point anywhere.
fn exact_apportionment(cf: &[u64], total_cf: u64, n_f: u64) -> Vec<u64> {
    let mut counts = Vec::with_capacity(cf.len());
    let mut remainders: Vec<(u128, usize)> = Vec::with_capacity(cf.len());
    for (i, &c) in cf.iter().enumerate() {
        let numerator = n_f as u128 * c as u128;
        counts.push((numerator / total_cf as u128) as u64);
        remainders.push((numerator % total_cf as u128, i));
    }
    let leftover = n_f - counts.iter().sum::<u64>();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, idx) in remainders.iter().take(leftover as usize) {
        counts[idx] += 1;
    }
    counts
}

#[test]
fn criterion_03_plan_at_published_ratio() {
    let stats = reference_stats();
    let cf = complementary_frequencies(&stats);
    let weights = injection_weights(&cf, &InjectionConfig::new(0.20)).unwrap();
    let plan = build_injection_plan(&weights, 0.20, 21165).unwrap();

    assert_eq!(plan.n_f_total, 5291);
    assert_eq!(plan.counts, [1775, 0, 2388, 1128]);
    assert_eq!(plan.counts.iter().sum::<u64>(), 5291);
    let oracle = exact_apportionment(&cf.cf, cf.total_cf, 5291);
    assert_eq!(plan.counts, oracle, "implementation disagrees with exact-rational oracle");
    println!("criterion 3: PASS (N_f 5291 split 1775/2388/1128/0, oracle-confirmed)");
}

#[test]
fn criterion_04_progressive_shape_contract() {
    for stage in 1..=6u32 {
        let resolution = 7 * (1 << (stage - 1));
        let generator = builtin_generator_spec(stage, false).unwrap();
        let gen_report = validate_network(&generator).unwrap();
        assert!(gen_report.ok, "stage {stage} generator: {:?}", gen_report.findings);
        assert_eq!(
            *gen_report.trace.last().unwrap(),
            shape(3, resolution, resolution),
            "stage {stage} generator output"
        );

        let critic = builtin_critic_spec(stage, false).unwrap();
        assert_eq!(critic.input_shape, shape(3, resolution, resolution));
        let critic_report = validate_network(&critic).unwrap();
        assert!(critic_report.ok, "stage {stage} critic: {:?}", critic_report.findings);
        assert_eq!(*critic_report.trace.last().unwrap(), shape(1, 1, 1));
    }

    let schedule = stage_schedule();
    assert_eq!(schedule.resolutions(), [7, 14, 28, 56, 112, 224]);
    assert_eq!(schedule.batch_sizes(), [256, 128, 32, 16, 16, 8]);
    assert_eq!(schedule.epochs(), [250, 300, 350, 400, 450, 500]);
    println!("criterion 4: PASS (stages 1..6 dual-consistent, schedule constants exact)");
}

#[test]
fn criterion_05_verbatim_table_audit_is_regression_locked() {
    let generator = builtin_generator_spec(6, true).unwrap();
    let gen_report = validate_network(&generator).unwrap();
    assert_eq!(gen_report.findings.len(), 1, "{:?}", gen_report.findings);
    let f = &gen_report.findings[0];
    assert_eq!(f.layer_index, 6);
    assert_eq!(f.expected_shape, Some(shape(224, 28, 28)));
    assert_eq!(f.declared_shape, Some(shape(56, 28, 28)));
    assert!(f.note.contains("input chain break"), "{}", f.note);

    let critic = builtin_critic_spec(6, true).unwrap();
    let critic_report = validate_network(&critic).unwrap();
    assert_eq!(critic_report.findings.len(), 2, "{:?}", critic_report.findings);
    let first = &critic_report.findings[0];
    assert_eq!(first.layer_index, 0);
    assert_eq!(first.expected_shape, Some(shape(14, 218, 218)));
    assert_eq!(first.declared_shape, Some(shape(14, 224, 224)));
    assert!(first.note.contains("does not match computed"), "{}", first.note);
    let second = &critic_report.findings[1];
    assert_eq!(second.layer_index, 17);
    assert_eq!(second.declared_shape, Some(shape(224, 1, 1)));
    assert!(second.note.contains("even spatial dims"), "{}", second.note);
    println!("criterion 5: PASS (generator: 1 locked finding; critic: 2 locked findings)");
}

#[test]
fn criterion_06_sma_sphere_benchmark() {
    let start = Instant::now();
    let run = |seeds: std::ops::Range<u64>, epochs: usize| -> Vec<f64> {
        let mut finals = Vec::new();
        for seed in seeds {
            let mut config = SmaConfig::new(vec![-10.0; 3], vec![10.0; 3]);
            config.population_size = 15;
            config.epochs = epochs;
            config.seed = seed;
            let lo = config.lower_bounds.clone();
            let hi = config.upper_bounds.clone();
            let out_of_bounds = RefCell::new(0u32);
            let result = optimize(
                |x| {
                    for (d, &v) in x.iter().enumerate() {
                        if v < lo[d] || v > hi[d] {
                            *out_of_bounds.borrow_mut() += 1;
                        }
                    }
                    x.iter().map(|v| v * v).sum()
                },
                &config,
            )
            .unwrap();
            assert_eq!(*out_of_bounds.borrow(), 0, "seed {seed}: evaluation left the box");
            for pair in result.history.windows(2) {
                assert!(pair[1] <= pair[0], "seed {seed}: history increased");
            }
            finals.push(result.best_fitness);
        }
        finals.sort_by(f64::total_cmp);
        finals
    };

    let finals_250 = run(0..11, 250);
    let median_250 = finals_250[5];
    assert!(
        median_250 <= 1e-4,
        "median over 11 seeds is {median_250:e}, target 1e-4"
    );

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}, budget 5 s");
    println!("criterion 6: PASS (median {median_250:.3e} over 11 seeds, {elapsed:?})");
}

fn reference_manifest_with_synthetic() -> Manifest {
    let mut records = Vec::new();
    for (label, n) in REFERENCE_FREQUENCIES {
        for i in 0..n {
            records.push(ManifestRecord {
                id: format!("{label}-{i}"),
                label: label.to_string(),
                source: Source::Real,
            });
        }
    }
    // Synthetic census per the published-ratio plan (criterion 3).
    for (label, n) in [("COVID-19", 1775u64), ("Viral Pneumonia", 2388), ("Lung Opacity", 1128)] {
        for i in 0..n {
            records.push(ManifestRecord {
                id: format!("syn-{label}-{i}"),
                label: label.to_string(),
                source: Source::Synthetic,
            });
        }
    }
    Manifest::from_records(records, |i| i as u64 + 2).unwrap()
}

#[test]
fn criterion_07_fold_plan_invariants_at_reference_scale() {
    let manifest = reference_manifest_with_synthetic();

    let plan = plan_folds(&manifest, 10, 0.15, 0, None).unwrap();
    let mut sizes: Vec<usize> = plan.folds.iter().map(|f| f.test.len()).collect();
    sizes.sort_unstable();
    assert_eq!(sizes, [2116, 2116, 2116, 2116, 2116, 2117, 2117, 2117, 2117, 2117]);

    // Pairwise-disjoint test sets covering exactly the real records.
    let mut seen: HashSet<&str> = HashSet::new();
    for fold in &plan.folds {
        for id in &fold.test {
            assert!(seen.insert(id), "id {id} appears in two test folds");
        }
    }
    assert_eq!(seen.len(), 21165);
    assert!(seen.iter().all(|id| !id.starts_with("syn-")));

    // Per-label test counts within +-1 across folds.
    for (label, _) in REFERENCE_FREQUENCIES {
        let prefix = format!("{label}-");
        let per: Vec<usize> = plan
            .folds
            .iter()
            .map(|f| f.test.iter().filter(|id| id.starts_with(&prefix)).count())
            .collect();
        let spread = per.iter().max().unwrap() - per.iter().min().unwrap();
        assert!(spread <= 1, "label {label}: {per:?}");
    }

    // Synthetic exclusion across 100 random seeds.
    for seed in 0..100u64 {
        let plan = plan_folds(&manifest, 10, 0.15, seed, None).unwrap();
        for fold in &plan.folds {
            assert!(
                fold.test.iter().all(|id| !id.starts_with("syn-")),
                "seed {seed}: synthetic id in test"
            );
        }
    }
    println!("criterion 7: PASS (sizes 2117x5/2116x5, disjoint cover, +-1 balance, 100-seed exclusion)");
}

/// Brute-force macro metrics straight from (truth, prediction) pairs,
/// independent of the confusion-matrix path.
fn brute_force_metrics(truths: &[usize], preds: &[usize], classes: usize) -> [f64; 5] {
    let mut recall = 0.0;
    let mut specificity = 0.0;
    let mut precision = 0.0;
    let mut f1 = 0.0;
    let total = truths.len() as f64;
    let mut correct = 0.0;
    for (&t, &p) in truths.iter().zip(preds) {
        if t == p {
            correct += 1.0;
        }
    }
    for c in 0..classes {
        let mut tp = 0.0;
        let mut fp = 0.0;
        let mut fn_ = 0.0;
        let mut tn = 0.0;
        for (&t, &p) in truths.iter().zip(preds) {
            match (t == c, p == c) {
                (true, true) => tp += 1.0,
                (false, true) => fp += 1.0,
                (true, false) => fn_ += 1.0,
                (false, false) => tn += 1.0,
            }
        }
        let rec = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        let spe = if tn + fp > 0.0 { tn / (tn + fp) } else { 0.0 };
        let pre = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        recall += rec;
        specificity += spe;
        precision += pre;
        f1 += if pre + rec > 0.0 {
            2.0 * pre * rec / (pre + rec)
        } else {
            0.0
        };
    }
    let n = classes as f64;
    [recall / n, specificity / n, f1 / n, precision / n, correct / total]
}

#[test]
fn criterion_08_metrics_match_brute_force_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    for trial in 0..1000 {
        let classes = rng.random_range(1..=4usize);
        let samples = rng.random_range(1..=200usize);
        let labels: Vec<String> = (0..classes).map(|c| format!("L{c}")).collect();
        let truths_idx: Vec<usize> = (0..samples).map(|_| rng.random_range(0..classes)).collect();
        let preds_idx: Vec<usize> = (0..samples).map(|_| rng.random_range(0..classes)).collect();
        let truths: Vec<String> = truths_idx.iter().map(|&i| labels[i].clone()).collect();
        let preds: Vec<String> = preds_idx.iter().map(|&i| labels[i].clone()).collect();

        let cm = confusion_matrix(&truths, &preds, &labels).unwrap();
        let report = metrics_from_confusion(&cm).unwrap();
        let oracle = brute_force_metrics(&truths_idx, &preds_idx, classes);
        for (name, got, want) in [
            ("recall", report.recall, oracle[0]),
            ("specificity", report.specificity, oracle[1]),
            ("f1", report.f1, oracle[2]),
            ("precision", report.precision, oracle[3]),
            ("accuracy", report.accuracy, oracle[4]),
        ] {
            assert!(
                (got - want).abs() <= 1e-12,
                "trial {trial}: {name} {got} vs oracle {want}"
            );
        }
    }

    for classes in 2..=4usize {
        let labels: Vec<String> = (0..classes).map(|c| format!("L{c}")).collect();
        let counts: Vec<Vec<u64>> = (0..classes)
            .map(|i| (0..classes).map(|j| if i == j { 17 } else { 0 }).collect())
            .collect();
        let report = metrics_from_confusion(&ConfusionMatrix {
            labels,
            counts,
        })
        .unwrap();
        for metric in [
            report.recall,
            report.specificity,
            report.f1,
            report.precision,
            report.accuracy,
        ] {
            assert_eq!(metric, 1.0);
        }
    }
    println!("criterion 8: PASS (1000 random sets within 1e-12 of oracle; diagonals score 1.0)");
}

#[test]
fn criterion_09_toy_pipeline_mirrors_injection_improvement() {
    let start = Instant::now();
    let optimized = Hyperparameters::default();
    assert_eq!(
        (optimized.learning_rate, optimized.dropout_rate, optimized.siir),
        (7.26e-5, 0.17, 0.20)
    );
    let baseline = Hyperparameters { siir: 0.0, ..optimized };

    let mut injected_f1 = Vec::new();
    let mut baseline_f1 = Vec::new();
    for seed in 0..5u64 {
        let config = ToyDatasetConfig {
            classes: [("A", 480usize), ("B", 120), ("C", 60), ("D", 40)]
                .iter()
                .map(|&(l, n)| ClassSpec {
                    label: l.to_string(),
                    count: n,
                })
                .collect(),
            feature_dim: 8,
            separation: 1.2,
            seed,
        };
        let records = generate_toy_dataset(&config).unwrap();
        let injected = cross_validate(&records, &optimized, true, 10, 0.15, 120, 128, seed).unwrap();
        let base = cross_validate(&records, &baseline, false, 10, 0.15, 120, 128, seed).unwrap();
        injected_f1.push(injected.f1.mean);
        baseline_f1.push(base.f1.mean);
    }
    injected_f1.sort_by(f64::total_cmp);
    baseline_f1.sort_by(f64::total_cmp);
    let median_injected = injected_f1[2];
    let median_baseline = baseline_f1[2];
    assert!(
        median_injected >= median_baseline,
        "median macro-F1 with injection {median_injected} < baseline {median_baseline}"
    );

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}, budget 60 s");
    println!(
        "criterion 9: PASS (median macro-F1 {median_injected:.4} injected vs {median_baseline:.4} baseline, {elapsed:?})"
    );
}

#[test]
fn criterion_10_wgan_gp_loss_identities() {
    let zero = wgan_gp_loss(&[0.0], &[0.0], &[1.0], 10.0).unwrap();
    assert_eq!((zero.critic_loss, zero.generator_loss), (0.0, 0.0));

    let arithmetic = wgan_gp_loss(&[2.0, 4.0], &[1.0, 1.0], &[1.0, 1.0], 10.0).unwrap();
    assert_eq!((arithmetic.critic_loss, arithmetic.generator_loss), (-2.0, -1.0));

    let real = [1.5, -0.5, 2.0];
    let fake = [0.75, 0.25];
    let norms = [2.0, 0.0, 3.0];
    let penalized = wgan_gp_loss(&real, &fake, &norms, 0.0).unwrap();
    let mean_real: f64 = real.iter().sum::<f64>() / real.len() as f64;
    let mean_fake: f64 = fake.iter().sum::<f64>() / fake.len() as f64;
    assert_eq!(penalized.critic_loss, mean_fake - mean_real);
    assert_eq!(penalized.generator_loss, -mean_fake);
    println!("criterion 10: PASS (zero case, arithmetic case, lambda-0 reduction all exact)");
}
