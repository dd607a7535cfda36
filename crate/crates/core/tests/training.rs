use vidorder::data::{sample_synth_sets, BitrateMode};
use vidorder::neural::{order_neural, train, NetParams, Sharing, TrainConfig};
use vidorder::BucketConfig;

#[test]
fn desk_training_fits_the_critic_and_survives_a_checkpoint() {
    let bucket = BucketConfig::from_mbits(4.0, 2.0, 10.0, 4.0).unwrap();
    let cfg = TrainConfig { seed: 5, ..TrainConfig::desk() };
    let sets = sample_synth_sets(cfg.set_size, 4096, BitrateMode::Fixed, 5).unwrap();
    let trained = train(&sets, &bucket, &cfg).unwrap();
    assert_eq!(trained.history.len(), cfg.steps);

    let mse = |s: &[vidorder::neural::StepStats]| s.iter().map(|x| x.critic_mse).sum::<f64>() / s.len() as f64;
    let (first, last) = (mse(&trained.history[..50]), mse(&trained.history[cfg.steps - 50..]));
    assert!(last < first, "critic mse {first} -> {last}");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("psac.ck");
    trained.params.save(&path).unwrap();
    let back = NetParams::load(&path).unwrap();
    assert_eq!(back.sharing, Sharing::Psac);
    assert_eq!(back.to_flat(), trained.params.to_flat());
    for set in sets.iter().take(16) {
        let a = order_neural(&trained.params, set, &bucket).unwrap();
        let b = order_neural(&back, set, &bucket).unwrap();
        assert_eq!(a.list, b.list);
    }
}
