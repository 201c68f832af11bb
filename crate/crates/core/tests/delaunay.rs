use std::collections::BTreeSet;

use nalgebra::Vector2;
use proptest::collection::vec;
use proptest::prelude::*;
use rvio_core::facet::delaunay;
use rvio_core::facet::predicates::{incircle_exact, orient2d_exact, sign};

fn points() -> impl Strategy<Value = Vec<Vector2<f64>>> {
    vec((-10.0f64..10.0, -10.0f64..10.0), 3..=30)
        .prop_map(|v| v.into_iter().map(|(x, y)| Vector2::new(x, y)).collect())
}

fn grid_points() -> impl Strategy<Value = Vec<Vector2<f64>>> {
    vec((-3i32..=3, -3i32..=3), 3..=30).prop_map(|v| {
        v.into_iter()
            .map(|(x, y)| Vector2::new(x as f64, y as f64))
            .collect()
    })
}

fn signed_area(p: &[Vector2<f64>], t: &[usize; 3]) -> f64 {
    0.5 * (p[t[1]] - p[t[0]]).perp(&(p[t[2]] - p[t[0]]))
}

/// Area of the convex hull (monotone chain).
fn hull_area(points: &[Vector2<f64>]) -> f64 {
    let mut p: Vec<Vector2<f64>> = points.to_vec();
    p.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    p.dedup();
    let cross = |o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>| (a - o).perp(&(b - o));
    let mut hull: Vec<Vector2<f64>> = Vec::new();
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Vector2<f64>>> = if pass == 0 {
            Box::new(p.iter())
        } else {
            Box::new(p.iter().rev())
        };
        for q in iter {
            while hull.len() >= start + 2
                && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], q) <= 0.0
            {
                hull.pop();
            }
            hull.push(*q);
        }
        hull.pop();
    }
    (0..hull.len())
        .map(|i| 0.5 * hull[i].perp(&hull[(i + 1) % hull.len()]))
        .sum()
}

fn check(pts: &[Vector2<f64>]) -> Result<(), TestCaseError> {
    let Ok(tri) = delaunay(pts) else {
        // only acceptable for coincident or collinear input
        let a = pts[0];
        let b = pts.iter().copied().find(|p| *p != a).unwrap_or(a);
        prop_assert!(pts.iter().all(|p| sign(&orient2d_exact(&a, &b, p)) == 0));
        return Ok(());
    };
    for t in &tri.triangles {
        prop_assert!(
            sign(&orient2d_exact(&pts[t[0]], &pts[t[1]], &pts[t[2]])) > 0,
            "not counter-clockwise"
        );
        let [a, b, c] = t.map(|i| pts[i]);
        for (k, d) in pts.iter().enumerate() {
            if !t.contains(&k) {
                prop_assert!(
                    sign(&incircle_exact(&a, &b, &c, d)) <= 0,
                    "point {k} inside circumcircle of {t:?}"
                );
            }
        }
    }
    let area: f64 = tri.triangles.iter().map(|t| signed_area(pts, t)).sum();
    let hull = hull_area(pts);
    prop_assert!(
        (area - hull).abs() <= 1e-9 * hull.max(1.0),
        "area {area} hull {hull}"
    );
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn random_sets_are_delaunay(pts in points()) {
        check(&pts)?;
    }

    #[test]
    fn grid_sets_with_cocircular_points_are_delaunay(pts in grid_points()) {
        check(&pts)?;
    }

    #[test]
    fn result_does_not_depend_on_input_order(pts in points(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut perm: Vec<usize> = (0..pts.len()).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let shuffled: Vec<Vector2<f64>> = perm.iter().map(|&i| pts[i]).collect();
        let as_sets = |p: &[Vector2<f64>]| -> BTreeSet<[(u64, u64); 3]> {
            delaunay(p).unwrap().triangles.iter().map(|t| {
                let mut v = t.map(|i| (p[i].x.to_bits(), p[i].y.to_bits()));
                v.sort();
                v
            }).collect()
        };
        // random real coordinates are in general position, so the
        // triangulation is unique
        prop_assert_eq!(as_sets(&pts), as_sets(&shuffled));
    }

    #[test]
    fn located_triangle_contains_the_query(pts in points(), q in (-10.0f64..10.0, -10.0f64..10.0)) {
        let tri = delaunay(&pts).unwrap();
        let q = Vector2::new(q.0, q.1);
        match tri.locate(&q) {
            Some(t) => {
                let [a, b, c] = tri.triangles[t].map(|i| pts[i]);
                for (u, v) in [(a, b), (b, c), (c, a)] {
                    prop_assert!(sign(&orient2d_exact(&u, &v, &q)) >= 0);
                }
            }
            None => {
                let outside = tri.triangles.iter().all(|t| {
                    let [a, b, c] = t.map(|i| pts[i]);
                    [(a, b), (b, c), (c, a)].iter().any(|(u, v)| sign(&orient2d_exact(u, v, &q)) < 0)
                });
                prop_assert!(outside);
            }
        }
    }
}
