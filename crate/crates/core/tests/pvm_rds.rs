use proptest::prelude::*;
use stereolabel::harness::{aepe, density, make_rds, ShiftField};
use stereolabel::pvm::{consistency_stats, lrdcc, vote, ConsistencyField};
use stereolabel::pyramid::io::{decode_pfm, decode_png16, encode_pfm, encode_png16};
use stereolabel::{block_match, pvm_pipeline, ConfidenceMap, DisparityMap, MatchParams, PvmConfig, VotingThresholds};

fn small_cfg() -> PvmConfig {
    let mut cfg = PvmConfig::default();
    cfg.matching.max_disparity = 24;
    cfg
}

#[test]
fn labels_track_a_constant_shift() {
    let scene = make_rds(96, 128, ShiftField::Constant(9.0), 0.5, 21).unwrap();
    let out = pvm_pipeline(&scene.left, &scene.right, &small_cfg()).unwrap();
    assert!(density(&out.labels) >= 30.0);
    assert!(aepe(&out.labels, &scene.truth).unwrap() <= 0.5);
    // Labels sit where the left-referenced vote accepted the pixel.
    for i in 0..96 {
        for j in 0..128 {
            if out.labels.is_valid(i, j) {
                assert_eq!(out.votes().get(i, j), 0);
            }
        }
    }
}

#[test]
fn labels_track_a_ramp() {
    let scene = make_rds(96, 128, ShiftField::Ramp { from: 4.0, to: 16.0 }, 0.5, 5).unwrap();
    let out = pvm_pipeline(&scene.left, &scene.right, &small_cfg()).unwrap();
    assert!(density(&out.labels) >= 30.0);
    assert!(aepe(&out.labels, &scene.truth).unwrap() <= 0.5);
}

#[test]
fn looser_thresholds_never_shrink_labels() {
    let scene = make_rds(64, 128, ShiftField::two_plane_centered(5.0, 14.0, 64, 128), 0.5, 3).unwrap();
    let base = small_cfg();
    let mut loose = base;
    loose.thresholds = VotingThresholds {
        kappa1: 2.0 * base.thresholds.kappa1,
        kappa2: 2.0 * base.thresholds.kappa2,
    };
    let a = pvm_pipeline(&scene.left, &scene.right, &base).unwrap();
    let b = pvm_pipeline(&scene.left, &scene.right, &loose).unwrap();
    assert!(b.left.votes.accepted_count() >= a.left.votes.accepted_count());
}

#[test]
fn two_views_of_one_shift_agree() {
    let scene = make_rds(48, 96, ShiftField::Constant(6.0), 0.5, 4).unwrap();
    let p = MatchParams {
        max_disparity: 16,
        ..MatchParams::default()
    };
    let both = stereolabel::match_both_views(&scene.left, &scene.right, &p).unwrap();
    let checked = lrdcc(&both.left_disparity, &both.right_disparity, 1.0).unwrap();
    // Unoccluded interior pixels survive the check with the true disparity.
    let mut kept = 0;
    for i in 3..45 {
        for j in 9..90 {
            if let Some(d) = checked.get(i, j) {
                assert!((d - 6.0).abs() < 0.5);
                kept += 1;
            }
        }
    }
    assert!(kept > 42 * 81 * 9 / 10);
}

#[test]
fn votes_follow_the_indicator_rule() {
    let entries = vec![Some((0.5, 0.05)), Some((1.0, 0.1)), Some((2.0, 0.05)), Some((0.5, 0.2)), None];
    let field = ConsistencyField::from_entries(1, 5, &entries).unwrap();
    let v = vote(&field, &VotingThresholds::default());
    assert_eq!(v.votes(), &[0, 2, 1, 1, 2]);
    let level = (DisparityMap::filled(1, 5, 3.0).unwrap(), ConfidenceMap::filled(1, 5, 0.5).unwrap());
    let f = consistency_stats(&[level.clone(), level]).unwrap();
    assert_eq!(f.get(0, 0), Some((0.0, 0.0)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn integer_shift_is_recovered(shift in 0usize..12, seed in any::<u64>()) {
        let scene = make_rds(24, 64, ShiftField::Constant(shift as f64), 0.5, seed).unwrap();
        let p = MatchParams { max_disparity: 16, ..MatchParams::default() };
        let (d, _) = block_match(&scene.left, &scene.right, &p).unwrap();
        let mut wrong = 0;
        let mut total = 0;
        for i in 3..21 {
            for j in (shift + 3)..61 {
                total += 1;
                if d.get(i, j).map_or(true, |v| (v - shift as f32).abs() > 0.5) {
                    wrong += 1;
                }
            }
        }
        prop_assert!(wrong * 50 <= total, "{wrong} of {total} wrong");
    }

    #[test]
    fn pfm_round_trip(vals in proptest::collection::vec(proptest::option::of(-500.0f32..500.0), 12)) {
        let d = DisparityMap::from_fn(3, 4, |i, j| vals[i * 4 + j]).unwrap();
        prop_assert_eq!(decode_pfm(&encode_pfm(&d)).unwrap(), d);
    }

    #[test]
    fn png16_round_trip_within_quantum(vals in proptest::collection::vec(proptest::option::of(0.0f32..255.0), 12)) {
        let d = DisparityMap::from_fn(3, 4, |i, j| vals[i * 4 + j]).unwrap();
        let back = decode_png16(&encode_png16(&d).unwrap()).unwrap();
        prop_assert_eq!(back.mask(), d.mask());
        for (a, b) in back.values().iter().zip(d.values()).filter(|(a, _)| a.is_finite()) {
            prop_assert!((a - b).abs() <= 1.0 / 256.0);
        }
    }
}
