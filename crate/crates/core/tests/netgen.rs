mod common;

use common::instance;
use cranbnb::netgen::*;
use cranbnb::Error;

#[test]
fn instances_survive_a_file_round_trip() {
    let inst = instance(5, 4, 3, 2.0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("inst.json");
    save_instance(&inst, &path).unwrap();
    let back = load_instance(&path).unwrap();
    assert_eq!(back, inst);
    assert_eq!(back.channels[2][7].re.to_bits(), inst.channels[2][7].re.to_bits());

    std::fs::write(&path, "{\"num_rrh\": 2}").unwrap();
    assert!(matches!(load_instance(&path), Err(Error::Load { .. })));
}

#[test]
fn instance_shapes_follow_the_config() {
    let cfg = GenConfig {
        num_rrh: 3,
        num_users: 5,
        antennas_per_rrh: 4,
        ..GenConfig::default()
    };
    let inst = generate_instance(&cfg, 1).unwrap();
    inst.validate().unwrap();
    assert_eq!(inst.total_antennas(), 12);
    assert_eq!(inst.channels.len(), 5);
    assert!(inst.channels.iter().all(|r| r.len() == 12));
    assert_eq!(inst.antenna_range(2), 8..12);
    assert!((inst.noise_vars[0] - dbm_to_watts(-102.0)).abs() < 1e-30);
    assert_eq!(inst.fronthaul_power, vec![6.0, 7.0, 8.0]);
}

#[test]
fn tsinr_override_changes_only_targets() {
    let inst = instance(4, 3, 8, 0.0);
    let hi = inst.with_tsinr_db(10.0);
    assert!(hi.sinr_targets.iter().all(|&g| (g - 10.0).abs() < 1e-12));
    assert_eq!(hi.channels, inst.channels);
    assert_eq!(hi.seed, inst.seed);
}

#[test]
fn seeds_give_distinct_draws() {
    assert_ne!(instance(4, 3, 1, 0.0).channels, instance(4, 3, 2, 0.0).channels);
    assert_eq!(instance(4, 3, 1, 0.0), instance(4, 3, 1, 0.0));
}

#[test]
fn mismatched_dimensions_are_errors() {
    let inst = instance(3, 2, 1, 0.0);
    assert!(matches!(fronthaul_power(&[1.0], &inst), Err(Error::Dimension { .. })));
    let w = Beamformer::zeros(2, 2);
    assert!(transmit_power(&w, &inst).is_err());
    let mut broken = inst.clone();
    broken.noise_vars.pop();
    assert!(broken.validate().is_err());
}
