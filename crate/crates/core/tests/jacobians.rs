mod common;

use common::{numeric_jacobian, random_filter_state, relative_gap};
use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use proptest::prelude::*;
use rvio_core::facet::range_row;
use rvio_core::visual::{msckf_jacobians, slam_measurement};

const STEP: f64 = 1e-6;
const TOL: f64 = 1e-5;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn range_row_matches_central_differences(seed in any::<u64>()) {
        let Some((st, cam, lrf)) = random_filter_state(seed) else { return Ok(()) };
        let facet = [0, 1, 2];
        let (_, h) = range_row(&st, facet, &cam, &lrf, 1e-9).unwrap();
        let num = numeric_jacobian(&st, 1, STEP, |s| {
            DVector::from_element(1, range_row(s, facet, &cam, &lrf, 1e-9).unwrap().0.range())
        });
        prop_assert!(relative_gap(&h, &num) <= TOL, "gap {}", relative_gap(&h, &num));
    }

    #[test]
    fn slam_rows_match_central_differences(seed in any::<u64>(), j in 0usize..3, i in 0usize..4) {
        let Some((st, _, _)) = random_filter_state(seed) else { return Ok(()) };
        let Ok((_, h)) = slam_measurement(&st, j, i) else { return Ok(()) };
        let num = numeric_jacobian(&st, 2, STEP, |s| {
            let uv = slam_measurement(s, j, i).unwrap().0;
            DVector::from_column_slice(uv.as_slice())
        });
        prop_assert!(relative_gap(&h, &num) <= TOL, "gap {}", relative_gap(&h, &num));
    }

    #[test]
    fn msckf_rows_match_central_differences(seed in any::<u64>(), j in 0usize..3) {
        let Some((st, _, _)) = random_filter_state(seed) else { return Ok(()) };
        let world = st.feature_world(j).unwrap().world;
        let views: Vec<(usize, Vector2<f64>)> = (0..st.clones.len()).map(|c| (c, Vector2::zeros())).collect();
        let Ok((_, hx, hf)) = msckf_jacobians(&st, &views, &world) else { return Ok(()) };
        let rows = 2 * views.len();
        // residuals are measured minus predicted
        let num_x = numeric_jacobian(&st, rows, STEP, |s| -msckf_jacobians(s, &views, &world).unwrap().0);
        prop_assert!(relative_gap(&hx, &num_x) <= TOL);
        let mut num_f = DMatrix::zeros(rows, 3);
        for a in 0..3 {
            let d = Vector3::ith(a, STEP);
            let rp = msckf_jacobians(&st, &views, &(world + d)).unwrap().0;
            let rm = msckf_jacobians(&st, &views, &(world - d)).unwrap().0;
            num_f.set_column(a, &(-(rp - rm) / (2.0 * STEP)));
        }
        prop_assert!(relative_gap(&hf, &num_f) <= TOL);
    }
}

#[test]
fn range_row_touches_only_pose_anchors_and_facet() {
    let (st, cam, lrf) = (0..).find_map(random_filter_state).unwrap();
    let (_, h) = range_row(&st, [0, 1, 2], &cam, &lrf, 1e-9).unwrap();
    // velocity and biases never enter the range model
    for c in 3..6 {
        assert_eq!(h[(0, c)], 0.0);
    }
    for c in 9..15 {
        assert_eq!(h[(0, c)], 0.0);
    }
    let anchors: Vec<usize> = st.features.iter().map(|f| f.anchor_index).collect();
    for i in 0..st.clones.len() {
        let o = st.clone_offset(i);
        let touched = (o..o + 6).any(|c| h[(0, c)] != 0.0);
        assert_eq!(touched, anchors.contains(&i), "clone {i}");
    }
}

#[test]
fn random_states_are_mostly_usable() {
    let usable = (0..100)
        .filter(|&s| random_filter_state(s).is_some())
        .count();
    assert!(usable >= 80, "{usable}/100");
    let slam = (0..100)
        .filter_map(random_filter_state)
        .filter(|(st, _, _)| slam_measurement(st, 0, 3).is_ok())
        .count();
    assert!(slam >= 50, "{slam}");
}
