use coxmic::fit::{fit, MicConfig};
use coxmic::sim::{
    bench_grid, generate, write_bench_tsv, BenchMethod, SimSpec, CENSORING_TOLERANCE,
};

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn null_model_hits_censoring_and_correlation() {
    let spec = SimSpec {
        n: 2000,
        p: 4,
        true_beta: vec![0.0; 4],
        rho: 0.5,
        target_censoring: 0.25,
        seed: 21,
    };
    let ds = generate(&spec).unwrap();
    let cens = 1.0 - ds.n_events() as f64 / ds.n() as f64;
    assert!((0.22..=0.28).contains(&cens), "censoring {cens}");
    let z = ds.covariates();
    let cols: Vec<Vec<f64>> = (0..4).map(|j| z.column(j).iter().copied().collect()).collect();
    for j in 0..3 {
        let r = correlation(&cols[j], &cols[j + 1]);
        assert!((r - 0.5).abs() < 0.1, "lag-1 correlation {r}");
    }
    let r2 = correlation(&cols[0], &cols[2]);
    assert!((r2 - 0.25).abs() < 0.1, "lag-2 correlation {r2}");
}

#[test]
fn both_censoring_targets_are_met() {
    for (seed, target) in [(1, 0.25), (2, 0.40)] {
        let ds = generate(&SimSpec::sparse(200, 10, target, seed)).unwrap();
        let cens = 1.0 - ds.n_events() as f64 / 200.0;
        assert!((cens - target).abs() <= CENSORING_TOLERANCE);
        assert!(ds.status().iter().all(|&s| s <= 1));
        assert!(ds.time().iter().all(|&t| t > 0.0));
    }
}

#[test]
fn smallest_table_cell_fits_end_to_end() {
    let ds = generate(&SimSpec::sparse(200, 10, 0.25, 1)).unwrap();
    let r = fit(&ds, &MicConfig::default()).unwrap();
    assert_eq!(r.beta.len(), 10);
    assert!(r.support().contains(&0) && r.support().contains(&1));
}

#[test]
fn recovery_improves_with_sample_size() {
    let rate = |n: usize| {
        (0..20u64)
            .map(|seed| {
                let ds = generate(&SimSpec::sparse(n, 10, 0.25, 500 + seed)).unwrap();
                let r = fit(&ds, &MicConfig::default()).unwrap();
                r.support().iter().filter(|&&j| j < 2).count() as f64 / 2.0
            })
            .sum::<f64>()
            / 20.0
    };
    assert!(rate(2000) >= rate(200));
}

#[test]
fn bench_rows_carry_recovery_for_selectors() {
    let grid = [SimSpec::sparse(200, 10, 0.25, 818)];
    let rows = bench_grid(
        &grid,
        &[BenchMethod::Mic, BenchMethod::Mple, BenchMethod::Stepwise],
        &MicConfig::default(),
    );
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.runs == 3 && r.mean_seconds > 0.0));
    assert!(rows[0].true_positives.is_some());
    assert!(rows[1].true_positives.is_none());
    let mut out = Vec::new();
    write_bench_tsv(&rows, &mut out).unwrap();
    assert_eq!(String::from_utf8(out).unwrap().lines().count(), 4);
}

#[test]
fn failing_cell_is_recorded() {
    let mut bad = SimSpec::sparse(200, 10, 0.25, 1);
    bad.true_beta.pop();
    let rows = bench_grid(
        &[bad, SimSpec::sparse(100, 3, 0.25, 1)],
        &[BenchMethod::Mic],
        &MicConfig::default(),
    );
    assert!(rows[0].error.is_some());
    assert!(rows[1].error.is_none());
}

#[test]
fn sparse_spec_shape() {
    let spec = SimSpec::sparse(200, 3, 0.4, 5);
    assert_eq!(spec.true_beta, vec![1.0, 1.0, 0.0]);
    assert!(spec.validate().is_ok());
}
