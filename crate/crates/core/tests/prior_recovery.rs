use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use spkg_core::linalg::min_eigenvalue;
use spkg_core::prior::{
    build_prior, build_prior_covariance, fit_exponential_decay, parse_footprinting, sample_autocorrelation,
    FootprintingProfile, PriorBundle, PriorOptions, DEFAULT_KAPPA,
};

#[test]
fn noiseless_decay_is_recovered() {
    for &kappa in &[0.05, 0.2, DEFAULT_KAPPA, 1.0, 2.5] {
        let acf: Vec<f64> = (0..=100).map(|k| (-kappa * k as f64).exp()).collect();
        let fit = fit_exponential_decay(&acf).unwrap();
        assert!((fit - kappa).abs() <= 1e-6, "κ={kappa} fit={fit}");
    }
}

#[test]
fn noisy_decay_is_recovered_within_ten_percent() {
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kappa = rng.random_range(0.1..1.5);
        let acf: Vec<f64> = (0..=100)
            .map(|k| {
                let z: f64 = rng.sample(StandardNormal);
                let clean = (-kappa * k as f64).exp();
                if k == 0 {
                    1.0
                } else {
                    clean * (1.0 + 0.05 * z)
                }
            })
            .collect();
        let fit = fit_exponential_decay(&acf).unwrap();
        assert!((fit - kappa).abs() <= 0.1 * kappa, "seed {seed}: κ={kappa} fit={fit}");
    }
}

#[test]
fn autocorrelation_of_ar1_path_decays_geometrically() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rho: f64 = 0.6;
    let mut x = 0.0;
    let values: Vec<f64> = (0..50_000)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            x = rho * x + (1.0 - rho * rho).sqrt() * z;
            x
        })
        .collect();
    let acf = sample_autocorrelation(&values, 5).unwrap();
    assert_eq!(acf[0], 1.0);
    for (k, r) in acf.iter().enumerate() {
        assert!((r - rho.powi(k as i32)).abs() < 0.03, "lag {k}: {r}");
    }
    let fit = fit_exponential_decay(&acf).unwrap();
    assert!((fit + rho.ln()).abs() < 0.1 * -rho.ln());
}

#[test]
fn prior_covariance_is_psd_for_random_profiles() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let p = rng.random_range(2..120);
        let values: Vec<f64> = (0..p)
            .map(|_| {
                if rng.random::<f64>() < 0.4 {
                    0.0
                } else {
                    rng.random_range(0.0..10.0)
                }
            })
            .collect();
        if values.iter().all(|&v| v == 0.0) {
            continue;
        }
        let prof = FootprintingProfile::new(values, "random").unwrap();
        let r = rng.random_range(0.05..1.0);
        let kappa = rng.random_range(0.01..3.0);
        let c = build_prior_covariance(&prof, r, kappa).unwrap();
        let scale = c.amax();
        assert!(min_eigenvalue(&c) >= -1e-8 * scale.max(1.0));
        for i in 0..p {
            for j in 0..p {
                assert_eq!(c[(i, j)], c[(j, i)]);
            }
        }
    }
}

#[test]
fn prior_bundle_round_trips_through_json() {
    let text = "position,value\n1,0.5\n2,0\n3,1.25\n4,2\n5,0\n6,0.75\n";
    let loaded = parse_footprinting(text, "inline").unwrap();
    assert!(loaded.gaps.is_empty());
    let bundle = build_prior(
        &loaded.profile,
        &PriorOptions {
            kappa: Some(0.4),
            ..PriorOptions::default()
        },
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("prior.json");
    bundle.write(&path).unwrap();
    let back = PriorBundle::read(&path).unwrap();
    assert_eq!(back, bundle);
    assert_eq!(back.belief.xi, vec![11.0, 1.0, 11.0, 11.0, 1.0, 11.0]);
    assert_eq!(back.belief.eta, vec![1.0, 11.0, 1.0, 1.0, 11.0, 1.0]);
}
