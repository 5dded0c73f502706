use swhawkes::study::{write_study_csv, Quartiles, STUDY_HEADER};
use swhawkes::{
    compare_models, run_study, sample_discrete, summarize, BinnedSeries, DiscreteParams, EMConfig, ModelKind,
    StudyConfig,
};

fn tiny() -> StudyConfig {
    StudyConfig {
        q_stars: vec![1],
        intensities: vec![0.5],
        coefs: vec![1.0],
        replicates: 1,
        q_max: 2,
        seed: 5,
        ..StudyConfig::desk()
    }
}

#[test]
fn one_cell_gives_q_max_rows() {
    let rows = run_study(&tiny()).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows.iter().map(|r| r.q_fit).collect::<Vec<_>>(), vec![1, 2]);
    for r in &rows {
        assert!(r.is_ok(), "{}", r.status);
        assert_eq!(r.mu_hat.len(), r.q_fit);
        assert_eq!(r.n_bins, r.n_events);
        assert!(r.cpu_seconds.is_none());
    }
    // Only one state at Q = 1, so decoding is perfect.
    assert_eq!(rows[0].acc_map, 1.0);
}

#[test]
fn grid_arithmetic_and_determinism() {
    let cfg = StudyConfig {
        q_stars: vec![1, 2],
        intensities: vec![0.5, 1.0],
        coefs: vec![0.5, 1.0],
        replicates: 2,
        q_max: 2,
        ..tiny()
    };
    let rows = run_study(&cfg).unwrap();
    assert_eq!(rows.len(), cfg.n_rows());
    assert_eq!(rows.len(), 2 * 2 * 2 * 2 * 2);
    let mut a = Vec::new();
    write_study_csv(&mut a, &rows).unwrap();
    let mut b = Vec::new();
    write_study_csv(&mut b, &run_study(&cfg).unwrap()).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().next().unwrap(), STUDY_HEADER);
    assert_eq!(text.lines().count(), rows.len() + 1);
    // A path is shared by every coefficient of its cell.
    for r in &rows {
        let same_path: Vec<_> = rows
            .iter()
            .filter(|s| s.q_star == r.q_star && s.l == r.l && s.rep == r.rep)
            .collect();
        assert!(same_path.iter().all(|s| s.seed == r.seed && s.n_events == r.n_events));
    }
    // Different cells use different seeds.
    let mut seeds: Vec<u64> = rows.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    assert_eq!(seeds.len(), 2 * 2 * 2);
}

#[test]
fn summary_counts_and_single_row_quartiles() {
    let rows = run_study(&StudyConfig { replicates: 3, ..tiny() }).unwrap();
    let s = summarize(&rows);
    let total: usize = s.q_hat.iter().map(|r| r.count).sum();
    assert_eq!(total, 3);
    let alpha: Vec<_> = s.bias.iter().filter(|r| r.label == "alpha").collect();
    assert_eq!(alpha.len(), 1);
    assert_eq!(alpha[0].stats.n, 3);
    assert!(s.cpu.is_empty());

    let one = summarize(&rows[..1]);
    for r in one.bias.iter().chain(&one.accuracy) {
        let q: Quartiles = r.stats;
        assert_eq!(q.n, 1);
        assert!(q.min == q.q1 && q.q1 == q.median && q.median == q.q3 && q.q3 == q.max);
    }
    let dir = tempfile::tempdir().unwrap();
    let files = s.write_csvs(dir.path()).unwrap();
    assert_eq!(files.len(), 4);
    let svgs = s.write_svgs(&dir.path().join("plots")).unwrap();
    assert!(svgs.iter().all(|p| std::fs::read_to_string(p).unwrap().starts_with("<svg")));
}

#[test]
fn bias_uses_alignment() {
    let mut rows = run_study(&StudyConfig { q_stars: vec![2], intensities: vec![1.0], ..tiny() }).unwrap();
    rows.retain(|r| r.q_fit == 2);
    let r = rows[0].clone();
    // Swapping the fitted labels together with the alignment leaves the bias unchanged.
    let mut swapped = r.clone();
    swapped.mu_hat.reverse();
    swapped.alignment.reverse();
    let a = summarize(&[r]);
    let b = summarize(&[swapped]);
    assert_eq!(a.bias, b.bias);
}

#[test]
fn comparison_prefers_poisson_on_poisson_data() {
    let theta = DiscreteParams::homogeneous(2.0, 0.0, 0.0);
    let (counts, _) = sample_discrete(&theta, 1000, 1).unwrap();
    let y = BinnedSeries::new(counts, 1.0).unwrap();
    let cmp = compare_models(&y, 2, &EMConfig::default()).unwrap();
    assert_eq!(cmp.fits.len(), 4);
    let kinds: Vec<ModelKind> = cmp.fits.iter().map(|f| f.kind).collect();
    assert_eq!(kinds, ModelKind::ALL.to_vec());
    assert_eq!(cmp.best, ModelKind::PoissonHomog);
    let mean = y.mean();
    let ll: f64 = y
        .counts()
        .iter()
        .map(|&c| c as f64 * mean.ln() - mean - (1..=c).map(|i| (i as f64).ln()).sum::<f64>())
        .sum();
    assert!((cmp.fits[0].log_lik - ll).abs() < 1e-8);
    let mut out = Vec::new();
    cmp.write_csv(&mut out).unwrap();
    assert!(String::from_utf8(out).unwrap().ends_with("# winner=PoissonHomog\n"));
}

#[test]
fn comparison_with_one_state_skips_switching_models() {
    let y = BinnedSeries::new(vec![1, 0, 2, 1, 0, 3], 1.0).unwrap();
    let cmp = compare_models(&y, 1, &EMConfig::default()).unwrap();
    assert!(cmp.fits[1].status.starts_with("skipped"));
    assert!(cmp.fits[3].status.starts_with("skipped"));
    assert!(matches!(cmp.best, ModelKind::PoissonHomog | ModelKind::HawkesHomog));
}
