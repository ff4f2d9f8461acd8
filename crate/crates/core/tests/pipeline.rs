use bindiff_core::eval::{ml_efficiency, split_dataset, steps_sweep, sweep_csv, DownstreamParams, EvalConfig, Metric};
use bindiff_core::infer::{infer_schema, TypeHints};
use bindiff_core::sampler::{sample, SampleConfig};
use bindiff_core::schema::{LabeledRecord, Value};
use bindiff_core::table::RawTable;
use bindiff_core::trainer::{fit, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn table(n: usize) -> RawTable {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let rows = (0..n)
        .map(|_| {
            let x: f64 = rng.random_range(0.0..10.0);
            let c = ["a", "b", "c"][rng.random_range(0..3)];
            let y = if x > 5.0 && c != "c" { "yes" } else { "no" };
            vec![format!("{x:.3}"), c.to_owned(), y.to_owned()]
        })
        .collect();
    RawTable::new(vec!["x".into(), "c".into(), "label".into()], rows).unwrap()
}

fn small_train() -> TrainConfig {
    TrainConfig {
        width: 32,
        n_blocks: 1,
        batch_size: 64,
        train_steps: 150,
        learning_rate: 1e-3,
        ..TrainConfig::default()
    }
}

fn small_eval() -> EvalConfig {
    EvalConfig {
        n_synthetic_sets: 2,
        downstream: DownstreamParams {
            rf_n_estimators: 5,
            ..DownstreamParams::default()
        },
        ..EvalConfig::default()
    }
}

#[test]
fn train_sample_evaluate() {
    let raw = table(200);
    let schema = infer_schema(&raw, "label", &TypeHints::new()).unwrap();
    assert_eq!(schema.total_bits, 32 + 2);
    let records = schema.parse_table(&raw).unwrap();
    let split = split_dataset(&records, &schema.target, 0.8, 0).unwrap();
    let pick = |idx: &[usize]| idx.iter().map(|&i| records[i].clone()).collect::<Vec<_>>();
    let (train, test) = (pick(&split.train), pick(&split.test));
    assert_eq!((train.len(), test.len()), (160, 40));

    let ckpt = fit(&train, &schema, &small_train(), None).unwrap().checkpoint;
    let rows = sample(&ckpt, &Value::Category("yes".into()), 7, &SampleConfig::default()).unwrap();
    assert_eq!(rows.len(), 7);
    assert!(rows.iter().all(|r| r.features.len() == 2));

    let cfg = small_eval();
    let report = ml_efficiency(&ckpt, "toy", &train, &test, &cfg).unwrap();
    assert_eq!(report.metric, Metric::Accuracy);
    assert!(report.higher_is_better);
    assert_eq!(report.n_train, 160);
    assert_eq!(report.rows.len(), 3);
    for r in &report.rows {
        assert_eq!(r.scores.len(), 2);
        assert!(r.std >= 0.0);
        assert!((0.0..=100.0).contains(&r.mean) && (0.0..=100.0).contains(&r.real));
    }
    // The real-data reference must learn the rule well.
    assert!(report.row("DT").unwrap().real > 90.0);

    let again = ml_efficiency(&ckpt, "toy", &train, &test, &cfg).unwrap();
    assert_eq!(report, again);
    assert!(report.to_table().contains("LR"));

    let (sweep, reports) = steps_sweep(&ckpt, "toy", &train, &test, &[5], &cfg).unwrap();
    assert_eq!(sweep.len(), 3);
    assert_eq!(reports[0], report);
    let csv = String::from_utf8(sweep_csv(&sweep).unwrap()).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn schema_mismatch_is_rejected() {
    let raw = table(50);
    let schema = infer_schema(&raw, "label", &TypeHints::new()).unwrap();
    let records = schema.parse_table(&raw).unwrap();
    let cfg = TrainConfig {
        train_steps: 2,
        ..small_train()
    };
    let ckpt = fit(&records, &schema, &cfg, None).unwrap().checkpoint;
    let bad = vec![LabeledRecord {
        features: vec![Value::Number(1.0)],
        label: Value::Category("yes".into()),
    }];
    assert!(ml_efficiency(&ckpt, "toy", &bad, &records, &small_eval()).is_err());
    let unknown = vec![LabeledRecord {
        features: records[0].features.clone(),
        label: Value::Category("maybe".into()),
    }];
    assert!(ml_efficiency(&ckpt, "toy", &records, &unknown, &small_eval()).is_err());
}
