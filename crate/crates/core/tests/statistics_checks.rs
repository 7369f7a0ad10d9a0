use lfmimo::evaluate::bound_low;
use lfmimo::harness::{cell_gamma, find_record, run_experiment, ExperimentConfig};
use lfmimo::numerics::SeedStream;
use lfmimo::precoders::Scheme;
use lfmimo::statistics::{gap_vs_empirical, FeedbackSource};

#[test]
fn cross_block_and_omega_bound() {
    for bits in [4u32, 8] {
        let r = gap_vs_empirical(
            8,
            2,
            4,
            FeedbackSource::Rvq(bits),
            3000,
            SeedStream::new(11, bits as u64),
        )
        .unwrap();
        assert!(
            r.cross_block_vanishes(),
            "B={bits}: chi2/dof {}",
            r.cross_chi2_per_dof
        );
        assert!(
            r.omega_mean <= r.omega_bound() + 3.0 * r.omega_stderr,
            "B={bits}: {} vs {}",
            r.omega_mean,
            r.omega_bound()
        );
        assert!(r.gap < 0.05, "B={bits}: gap {}", r.gap);
    }
}

#[test]
fn exact_feedback_has_no_distortion() {
    let r = gap_vs_empirical(8, 2, 4, FeedbackSource::Exact, 2000, SeedStream::new(12, 0)).unwrap();
    assert!(r.gamma_hat.abs() < 1e-12);
    assert!(r.gap < 0.05, "{}", r.gap);
}

#[test]
fn mmse_matches_low_snr_form() {
    let cfg = ExperimentConfig {
        snr_db: vec![-20.0],
        schemes: vec![Scheme::Mmse],
        trials: 1000,
        root_seed: 13,
        ..Default::default()
    };
    let recs = run_experiment(&cfg).unwrap();
    let per_user = find_record(&recs, "mmse", -20.0, 10, 4)
        .unwrap()
        .sum_rate_mean
        / 4.0;
    let approx = bound_low(0.01, 4, 2, cell_gamma(&cfg, 4, 10).unwrap());
    assert!(
        (per_user - approx).abs() / approx <= 0.10,
        "{per_user} vs {approx}"
    );
}
