//! Data splitting properties and end-to-end benchmark runs on small configs.

use std::collections::BTreeSet;
use std::fs;

use cdwce_core::data::{class_counts_for, generate_synthetic, split};
use cdwce_core::experiments::{
    emit_report, run_alpha_sweep, run_benchmark, run_margin_sweep, trials_csv, DatasetSource,
    Sweep, TrialStatus,
};
use cdwce_core::{
    AggregateReport, Error, ExperimentConfig, LossKind, ReportFormat, SplitSpec, SyntheticParams,
    TrainConfig,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn stratified_split_partitions_and_keeps_proportions(
        n in 80usize..600,
        seed in any::<u64>(),
        train in 0.5f64..0.9,
    ) {
        let params = SyntheticParams { n_samples: n, input_dim: 2, ..Default::default() };
        let ds = generate_synthetic(&params, seed).unwrap();
        let val = (1.0 - train) / 2.0;
        let spec = SplitSpec { train, val, test: 1.0 - train - val, stratified: true, seed };
        let parts = split(&ds, &spec).unwrap();

        let mut seen: Vec<usize> = parts.train.iter().chain(&parts.val).chain(&parts.test).copied().collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());

        let counts = ds.class_counts();
        for (k, &total) in counts.iter().enumerate() {
            let in_train = parts.train.iter().filter(|&&i| ds.labels()[i] == k).count() as f64;
            let target = total as f64 * train;
            // Tiny classes give a sample to any part whose rounded share is zero.
            let (rt, rv) = (target.round(), (total as f64 * val).round());
            let bumps = usize::from(rv == 0.0) + usize::from(total as f64 - rt - rv <= 0.0);
            prop_assert!(
                (in_train - target).abs() <= 1.0 + bumps as f64 + 1e-9,
                "class {k}: {in_train} vs {target}"
            );
        }
        prop_assert_eq!(&split(&ds, &spec).unwrap(), &parts);
    }

    #[test]
    fn class_counts_sum_to_n(n in 4usize..5000, raw in prop::collection::vec(0.01f64..1.0, 2..7)) {
        let total: f64 = raw.iter().sum();
        let props: Vec<f64> = raw.iter().map(|p| p / total).collect();
        let counts = class_counts_for(n, &props);
        prop_assert_eq!(counts.iter().sum::<usize>(), n);
        if n >= props.len() {
            prop_assert!(counts.iter().all(|&c| c >= 1));
        }
    }
}

fn small_config(losses: Vec<LossKind>, trials: usize) -> ExperimentConfig {
    ExperimentConfig {
        dataset: DatasetSource::Synthetic {
            params: SyntheticParams {
                n_samples: 400,
                input_dim: 4,
                ..Default::default()
            },
        },
        train: TrainConfig {
            epochs: 8,
            ..Default::default()
        },
        losses,
        n_trials: trials,
        master_seed: 42,
        ..Default::default()
    }
}

#[test]
fn separable_data_gives_perfect_accuracy() {
    let mut cfg = small_config(vec![LossKind::Ce], 1);
    cfg.dataset = DatasetSource::Synthetic {
        params: SyntheticParams {
            n_samples: 400,
            input_dim: 4,
            noise_sigma: 0.0,
            class_center_spacing: 3.0,
            ..Default::default()
        },
    };
    cfg.train.epochs = 50;
    let report = run_benchmark(&cfg).unwrap();
    let m = report.trials[0].metrics.as_ref().unwrap();
    assert_eq!(m.accuracy, 1.0);
}

#[test]
fn report_files_round_trip_and_follow_the_layout() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(
        vec![LossKind::Ce, LossKind::Corn, LossKind::MseReg, LossKind::CdwCe { alpha: 5.0 }],
        3,
    );
    cfg.output_dir = Some(dir.path().to_path_buf());
    let report = run_benchmark(&cfg).unwrap();

    let reread = AggregateReport::load(&dir.path().join("aggregate.json")).unwrap();
    assert_eq!(reread, report);

    let csv = fs::read_to_string(dir.path().join("trials.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4 * 3);
    assert_eq!(trials_csv(&report), csv);

    for slug in ["ce", "corn", "mse", "cdw_ce_a5"] {
        assert!(dir.path().join(format!("confusion_{slug}.csv")).exists());
        for t in 0..3 {
            assert!(dir.path().join(format!("trials/{slug}_trial{t}.json")).exists());
        }
    }
    for k in 0..4 {
        assert!(dir.path().join(format!("roc_ce_class{k}.csv")).exists());
        assert!(dir.path().join(format!("roc_corn_class{k}.csv")).exists());
        assert!(!dir.path().join(format!("roc_mse_class{k}.csv")).exists());
    }
    assert!(fs::read_to_string(dir.path().join("summary.md")).unwrap().contains("| QWK |"));

    // Emission is a pure function of the report.
    let again = tempfile::tempdir().unwrap();
    for format in [ReportFormat::Json, ReportFormat::Csv, ReportFormat::Markdown] {
        for path in emit_report(&report, format, again.path()).unwrap() {
            let name = path.strip_prefix(again.path()).unwrap();
            assert_eq!(fs::read(&path).unwrap(), fs::read(dir.path().join(name)).unwrap());
        }
    }
}

#[test]
fn markdown_has_four_metric_rows_for_two_losses() {
    let report = run_benchmark(&small_config(vec![LossKind::Ce, LossKind::CdwCe { alpha: 5.0 }], 2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_report(&report, ReportFormat::Markdown, dir.path()).unwrap();
    let md = fs::read_to_string(dir.path().join("summary.md")).unwrap();
    let first: Vec<&str> = md
        .lines()
        .skip_while(|l| !l.starts_with('|'))
        .take_while(|l| l.starts_with('|'))
        .skip(2)
        .collect();
    assert_eq!(first.len(), 4);
    assert!(first.iter().all(|row| row.matches(" ± ").count() == 2));
}

#[test]
fn losses_share_splits_and_seeds_and_confusions_conserve_counts() {
    let report = run_benchmark(&small_config(
        vec![LossKind::Ce, LossKind::co2_default(), LossKind::Corn],
        3,
    ))
    .unwrap();
    for t in 0..3 {
        let seeds: BTreeSet<u64> = report.trials.iter().filter(|r| r.trial == t).map(|r| r.seed).collect();
        assert_eq!(seeds.len(), 1);
        let sizes: BTreeSet<u64> = report
            .trials
            .iter()
            .filter(|r| r.trial == t)
            .map(|r| r.confusion.as_ref().unwrap().total())
            .collect();
        assert_eq!(sizes.len(), 1);
    }
    let test_size = report.trials[0].confusion.as_ref().unwrap().total() as f64;
    for agg in &report.losses {
        let total: f64 = agg.mean_confusion.as_ref().unwrap().iter().flatten().sum();
        assert!((total - test_size).abs() < 1e-9);
        let q = agg.metric("qwk").unwrap();
        let (mean, std) = cdwce_core::numerics::mean_std(&q.values);
        assert_eq!((q.mean, q.std), (mean, std));
    }
}

#[test]
fn worker_count_does_not_change_results() {
    let mut cfg = small_config(vec![LossKind::Ce, LossKind::CdwCe { alpha: 2.0 }], 3);
    let serial = run_benchmark(&cfg).unwrap();
    cfg.jobs = Some(3);
    let parallel = run_benchmark(&cfg).unwrap();
    assert_eq!(serial.to_json().unwrap(), parallel.to_json().unwrap());
}

#[test]
fn single_alpha_sweep_equals_benchmark() {
    let alpha = 3.0;
    let cfg = small_config(vec![LossKind::CdwCe { alpha }], 2);
    let bench = run_benchmark(&cfg).unwrap();
    let sweep = run_alpha_sweep(&cfg, &[alpha]).unwrap();
    assert_eq!(sweep.trials, bench.trials);
    match sweep.sweep {
        Some(Sweep::Alpha { rows }) => {
            assert_eq!(rows.len(), 1);
            assert_eq!(rows[0].mean_qwk, bench.losses[0].metric("qwk").unwrap().mean);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn zero_margin_sweep_equals_plain_cdw_ce() {
    let cfg = small_config(vec![LossKind::CdwCe { alpha: 4.0 }], 2);
    let bench = run_benchmark(&cfg).unwrap();
    let sweep = run_margin_sweep(&cfg, 4.0, &[0.0, 0.025]).unwrap();
    let zero: Vec<_> = sweep.trials.iter().filter(|t| t.loss == LossKind::CdwCeMargin { alpha: 4.0, margin: 0.0 }).collect();
    assert_eq!(zero.len(), 2);
    for (a, b) in zero.iter().zip(&bench.trials) {
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.confusion, b.confusion);
    }
    let dir = tempfile::tempdir().unwrap();
    emit_report(&sweep, ReportFormat::Csv, dir.path()).unwrap();
    let csv = fs::read_to_string(dir.path().join("sweep_margin.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn divergent_trials_are_recorded_and_flagged() {
    let mut cfg = small_config(vec![LossKind::Ce], 2);
    cfg.train.learning_rate = 1e200;
    let report = run_benchmark(&cfg).unwrap();
    assert!(report
        .trials
        .iter()
        .all(|t| matches!(t.status, TrialStatus::Failed { .. }) && t.metrics.is_none()));
    assert!(report.losses[0].flagged);
    assert_eq!(report.losses[0].failed, 2);
}

#[test]
fn unwritable_output_dir_is_an_io_error() {
    let file = tempfile::NamedTempFile::new().unwrap();
    let mut cfg = small_config(vec![LossKind::Ce], 1);
    cfg.output_dir = Some(file.path().join("sub"));
    assert!(matches!(run_benchmark(&cfg), Err(Error::Io { .. })));
}

#[test]
fn csv_datasets_drive_benchmarks() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    let params = SyntheticParams { n_samples: 300, input_dim: 3, ..Default::default() };
    generate_synthetic(&params, 5).unwrap().write_csv(&path).unwrap();
    let mut cfg = small_config(vec![LossKind::Ce], 1);
    cfg.dataset = DatasetSource::Csv { path, label_column: "label".into(), num_classes: Some(4) };
    let report = run_benchmark(&cfg).unwrap();
    assert_eq!(report.num_classes, 4);
    assert!(report.trials[0].is_completed());
}
