use optics_tcn::dataset::{apply_scaler, fit_scaler, generate_flat, make_frequency_grid, SplitSpec};
use optics_tcn::evaluation::{
    arch_entry, compare_models, evaluate_model, percent_above, r2, stability_protocol, ArchSearchResult,
    R2Report, R2Sample, StabilityCriterion, StabilityTable, StabilityVerdict, SCALED_REPRESENTATION,
    TABLE_THRESHOLDS,
};
use optics_tcn::neural::{build_model, ModelSpec};
use optics_tcn::spin::{SpinChainConfig, TimeGrid};
use optics_tcn::training::{BatchPhase, TrainConfig};
use proptest::prelude::*;

fn report_of(values: &[f64]) -> R2Report {
    R2Report::from_samples(
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| R2Sample { sample_id: i, omega: 0.1 * i as f64, amplitude: 1.0, r2: Some(v) })
            .collect(),
    )
}

#[test]
fn injected_run_at_77_percent_is_unstable() {
    let mut runs = vec![100.0; 10];
    runs[2] = 77.0;
    let v = StabilityVerdict::from_percentages(&runs, StabilityCriterion::default());
    assert!(!v.stable);
    assert_eq!(v.per_run_pass.iter().filter(|p| !**p).count(), 1);
    assert!(StabilityVerdict::from_percentages(&[100.0; 10], StabilityCriterion::default()).stable);
}

#[test]
fn verdict_is_reproducible_from_stored_r2_lists() {
    let reports: Vec<R2Report> = (0..4)
        .map(|k| report_of(&(0..40).map(|i| 0.8 + 0.005 * ((i * 7 + k * 3) % 40) as f64).collect::<Vec<_>>()))
        .collect();
    let c = StabilityCriterion::default();
    let a = StabilityVerdict::from_reports(&reports, c);
    let stored: Vec<Vec<f64>> = reports.iter().map(|r| r.values()).collect();
    let p: Vec<f64> = stored.iter().map(|v| percent_above(v, c.threshold)).collect();
    assert_eq!(a, StabilityVerdict::from_percentages(&p, c));
}

#[test]
fn paper_grid_orders_by_parameter_count() {
    let labels = ["(5-5-3)", "(3-3-2)", "(5-5-2)", "(4-4-3)"];
    let entries = labels
        .iter()
        .map(|l| {
            let spec = ModelSpec::tcn(&ModelSpec::parse_widths(l).unwrap(), 512);
            let count = build_model(&spec, 0).unwrap().parameter_count();
            let table = StabilityTable {
                label: l.to_string(),
                parameter_count: count,
                thresholds: TABLE_THRESHOLDS.to_vec(),
                rows: vec![vec![99.0, 100.0, 100.0]; 3],
            };
            let v = StabilityVerdict::from_percentages(&[99.0; 3], StabilityCriterion::default());
            arch_entry(table, v, 0.98, vec![]).unwrap()
        })
        .collect();
    let res = ArchSearchResult::from_entries(entries, 0.98);
    let order: Vec<&str> = res.entries.iter().map(|e| e.label.as_str()).collect();
    assert_eq!(order, ["(3-3-2)", "(4-4-3)", "(5-5-2)", "(5-5-3)"]);
    assert_eq!(res.minimum_stable.as_deref(), Some("(3-3-2)"));
    let dir = tempfile::tempdir().unwrap();
    res.write_boxplot_csv(&dir.path().join("boxplot.csv")).unwrap();
    let text = std::fs::read_to_string(dir.path().join("boxplot.csv")).unwrap();
    assert!(text.starts_with("spec,min,q1,median,q3,max,mean\n(3-3-2),99,"));
}

#[test]
fn identical_report_sets_give_identical_stats() {
    let set: Vec<R2Report> = (0..3).map(|k| report_of(&[0.91, 0.95, 0.99, 0.5 + 0.1 * k as f64])).collect();
    let c = compare_models(&[("a".into(), set.clone()), ("b".into(), set)], 0.9).unwrap();
    assert_eq!(c.rows[0].per_run, c.rows[1].per_run);
    assert_eq!(c.rows[0].boxplot, c.rows[1].boxplot);
    assert!(!c.mismatched_runs);
}

#[test]
fn protocol_end_to_end_on_a_small_chain() {
    let chain = SpinChainConfig::transverse(vec![-1.0, -1.0]).unwrap();
    let grid = TimeGrid::new(32, 0.1).unwrap();
    let mut ds = generate_flat(&chain, &grid, 1.0, &make_frequency_grid(0.2, 5.0, 16).unwrap()).unwrap();
    let split = ds.split(&SplitSpec { train_fraction: 0.75, seed: 4 }).unwrap();
    let scaler = fit_scaler(&ds, &split.train).unwrap();
    ds.scaler = Some(scaler);
    let scaled = apply_scaler(&ds, &scaler);
    let spec = ModelSpec::tcn(&[3, 2], 32);
    let cfg = TrainConfig {
        epochs: 3,
        batch_schedule: vec![BatchPhase { start_epoch: 1, batch_size: 4 }],
        ..TrainConfig::default()
    };
    let out = stability_protocol(&spec, &ds, &scaled, &split, &cfg, 2, 9, StabilityCriterion::default()).unwrap();
    assert!(out.failures.is_empty());
    assert_eq!(out.table.rows.len(), 2);
    assert_eq!(out.verdict.runs, 2);
    for (r, m) in out.reports.iter().zip(&out.models) {
        assert_eq!(r.samples.len(), split.test.len());
        assert_eq!(r.representation, SCALED_REPRESENTATION);
        assert_eq!(*r, evaluate_model(m, &ds, &split).unwrap());
        let ids: Vec<usize> = r.samples.iter().map(|s| s.sample_id).collect();
        assert_eq!(ids, split.test);
    }
    let again = stability_protocol(&spec, &ds, &scaled, &split, &cfg, 2, 9, StabilityCriterion::default()).unwrap();
    assert_eq!(again.table, out.table);
    assert!(stability_protocol(&spec, &ds, &scaled, &split, &cfg, 1, 9, StabilityCriterion::default()).is_err());

    let dir = tempfile::tempdir().unwrap();
    out.write_json(&dir.path().join("stability.json")).unwrap();
    out.reports[0].write_csv(&dir.path().join("r2_report.csv")).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("r2_report.csv")).unwrap();
    assert!(csv.starts_with("sample_id,omega,amplitude,r2\n"));
    assert_eq!(csv.lines().count(), split.test.len() + 1);

    let wrong = build_model(&ModelSpec::tcn(&[3, 2], 64), 0).unwrap();
    assert!(evaluate_model(&wrong, &ds, &split).is_err());
}

proptest! {
    #[test]
    fn r2_never_exceeds_one(y in prop::collection::vec(-10.0f64..10.0, 2..50), noise in prop::collection::vec(-1.0f64..1.0, 50)) {
        let y_hat: Vec<f64> = y.iter().zip(&noise).map(|(a, b)| a + b).collect();
        if let Some(v) = r2(&y, &y_hat).unwrap() {
            prop_assert!(v <= 1.0);
        }
    }

    #[test]
    fn r2_is_invariant_under_a_shared_affine_map(
        y in prop::collection::vec(-10.0f64..10.0, 3..40),
        noise in prop::collection::vec(-1.0f64..1.0, 40),
        scale in 0.1f64..10.0,
        shift in -5.0f64..5.0,
    ) {
        let y_hat: Vec<f64> = y.iter().zip(&noise).map(|(a, b)| a + b).collect();
        let Some(base) = r2(&y, &y_hat).unwrap() else { return Ok(()) };
        let f = |v: &f64| scale * v + shift;
        let moved = r2(&y.iter().map(f).collect::<Vec<_>>(), &y_hat.iter().map(f).collect::<Vec<_>>()).unwrap().unwrap();
        prop_assert!((base - moved).abs() <= 1e-9 * (1.0 + base.abs()));
    }

    #[test]
    fn threshold_percentages_are_monotone(values in prop::collection::vec(-1.0f64..1.0, 1..100)) {
        let r = report_of(&values);
        let p: Vec<f64> = r.thresholds.iter().map(|t| t.percent).collect();
        prop_assert!(p.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(p.iter().all(|v| (0.0..=100.0).contains(v)));
    }

    #[test]
    fn stable_iff_every_run_passes(p in prop::collection::vec(0.0f64..100.0, 2..12)) {
        let v = StabilityVerdict::from_percentages(&p, StabilityCriterion::default());
        prop_assert_eq!(v.stable, p.iter().all(|&x| x > 85.0));
        prop_assert_eq!(v.stable, v.per_run_pass.iter().all(|&x| x));
    }
}
