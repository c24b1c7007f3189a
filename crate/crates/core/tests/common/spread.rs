use fvmf_core::rng::SeededRng;
use fvmf_core::vmf::{sample_vmf, spread_stats, UnitVector, VmfParams};

pub fn random_unit(rng: &mut SeededRng, d: usize) -> UnitVector {
    UnitVector::normalize((0..d).map(|_| rng.standard_normal()).collect()).unwrap()
}

/// `‖(1/n) Σ z_i‖` with compensated summation.
pub fn mean_norm(z: &[UnitVector]) -> f64 {
    let d = z[0].dim();
    let mut sq = 0.0;
    for j in 0..d {
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for v in z {
            let y = v.as_slice()[j] - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        }
        let m = sum / z.len() as f64;
        sq += m * m;
    }
    sq.sqrt()
}

/// `|inertia − 2(1 − ‖z̄‖)|` on a random vMF sample of random size.
pub fn inertia_error(rng: &mut SeededRng) -> f64 {
    let d = 2 + rng.below(63) as usize;
    let n = 2 + rng.below(200) as usize;
    let kappa = 0.5 + 100.0 * rng.uniform();
    let mu = random_unit(rng, d);
    let z = sample_vmf(&VmfParams::new(mu, kappa).unwrap(), n, rng.next_u64()).unwrap();
    let s = spread_stats(&z.iter().map(|v| v.as_slice().to_vec()).collect::<Vec<_>>()).unwrap();
    (s.inertia - 2.0 * (1.0 - mean_norm(&z))).abs()
}
