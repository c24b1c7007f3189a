use fvmf_core::fairloss::FairKappas;
use fvmf_core::synth::{generate_synthetic, SyntheticSpec};
use fvmf_core::trainer::{train, MlpConfig, TrainConfig};

/// Final-epoch mean loss of the run below, recorded from a reference build.
const PINNED_FINAL_LOSS: f64 = 1.541_372_360_434_644_8;

#[test]
fn pinned_training_run() {
    let spec = SyntheticSpec {
        d: 8,
        identities_per_group: [20, 20],
        images_per_identity: (10, 10),
        centroid_concentration: [0.0, 40.0],
        ..SyntheticSpec::default()
    };
    let data = generate_synthetic(&spec).unwrap();
    let cfg = TrainConfig::new(20, 64, 0.01, 11, FairKappas::new(25.0, 20.0).unwrap());
    let out = train(&data, MlpConfig::new(8, 16, 8).unwrap(), cfg).unwrap();
    let losses = &out.epoch_losses;
    assert_eq!(losses.len(), 20);
    assert!(losses.windows(2).all(|w| w[1] < w[0]));
    let last = *losses.last().unwrap();
    assert!((last - PINNED_FINAL_LOSS).abs() <= 1e-9 * PINNED_FINAL_LOSS, "final loss {last:.17}");
}
