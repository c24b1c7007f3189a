mod common;

use common::{kappa_grid, oracle, order_grid, scaled_err};
use fvmf_core::specfn::{
    log_bessel_i, log_vmf_normalizer, mean_resultant_length, BesselOrder, DEBYE_MIN_ORDER,
    HANKEL_MIN_ARG,
};

#[test]
fn oracle_self_checks() {
    // I_{1/2}(κ) = √(2/(πκ)) sinh κ
    for &k in &[0.01f64, 1.0, 30.0, 600.0] {
        let log_sinh = k + (-(-2.0 * k).exp()).ln_1p() - std::f64::consts::LN_2;
        let want = 0.5 * (2.0 / (std::f64::consts::PI * k)).ln() + log_sinh;
        assert!(scaled_err(oracle::log_bessel_i(0.5, k), want) < 1e-14);
    }
    // Γ(11) = 10!
    assert!((oracle::log_gamma_plus_one(10.0) - 3628800f64.ln()).abs() < 1e-14);
}

#[test]
fn log_bessel_matches_oracle_dense() {
    let mut worst = (0.0, 0.0, 0.0);
    for nu in order_grid(121) {
        for k in kappa_grid(121).into_iter().chain([1000.0]) {
            let got = log_bessel_i(BesselOrder::new(nu).unwrap(), k).unwrap();
            let want = oracle::log_bessel_i(nu, k);
            let e = scaled_err(got, want);
            if e > worst.0 {
                worst = (e, nu, k);
            }
        }
    }
    println!("worst log I error {:e} at ν={} κ={}", worst.0, worst.1, worst.2);
    assert!(worst.0 <= 1e-10);
}

#[test]
fn branch_neighbourhoods_match_oracle() {
    let mut worst = 0.0f64;
    for nu in [0.0, 0.5, 1.0, 4.5, 9.0, 9.5, DEBYE_MIN_ORDER, 10.5, 11.0, 14.5] {
        for k in [1e-6, 0.3, 9.9, 50.0, 99.5, HANKEL_MIN_ARG, 100.5, 180.0, 999.0] {
            let got = log_bessel_i(BesselOrder::new(nu).unwrap(), k).unwrap();
            worst = worst.max(scaled_err(got, oracle::log_bessel_i(nu, k)));
        }
    }
    assert!(worst <= 1e-10, "{worst:e}");
}

#[test]
fn normalizer_and_resultant_length_spot_values() {
    let c = log_vmf_normalizer(512, 50.0).unwrap();
    assert!(scaled_err(c, oracle::log_vmf_normalizer(512, 50.0)) <= 1e-10);
    let a = mean_resultant_length(512, 100.0).unwrap();
    let want = oracle::mean_resultant_length(512, 100.0);
    assert!((a - want).abs() <= 1e-10 * want, "{a} vs {want}");
    let l = log_bessel_i(BesselOrder::new(255.0).unwrap(), 50.0).unwrap();
    assert!(scaled_err(l, oracle::log_bessel_i(255.0, 50.0)) <= 1e-10);
}
