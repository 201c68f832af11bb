//! Incremental Delaunay triangulation (Bowyer-Watson with ghost triangles)
//! over exact predicates, and point location.

use std::collections::HashSet;

use nalgebra::Vector2;

use super::predicates::{incircle, orient2d};
use crate::error::{Error, Result};

const GHOST: usize = usize::MAX;

/// Triangulation of a planar point set. Triangles are counter-clockwise,
/// start at their smallest vertex index and are sorted, so the output only
/// depends on the input points.
#[derive(Clone, Debug, PartialEq)]
pub struct Triangulation {
    pub vertices: Vec<Vector2<f64>>,
    pub triangles: Vec<[usize; 3]>,
}

fn conflicts(points: &[Vector2<f64>], t: &[usize; 3], p: &Vector2<f64>) -> bool {
    if t[2] == GHOST {
        let (a, b) = (&points[t[0]], &points[t[1]]);
        let o = orient2d(a, b, p);
        if o > 0.0 {
            return true;
        }
        // on the open hull edge
        o == 0.0 && (p - a).dot(&(b - a)) > 0.0 && (p - b).dot(&(a - b)) > 0.0
    } else {
        incircle(&points[t[0]], &points[t[1]], &points[t[2]], p) > 0.0
    }
}

/// Rotates a triangle so a ghost vertex sits last, otherwise the smallest
/// index first; orientation is preserved.
fn canonical(t: [usize; 3]) -> [usize; 3] {
    let k = if t.contains(&GHOST) {
        (t.iter().position(|&v| v == GHOST).unwrap() + 1) % 3
    } else {
        (0..3).min_by_key(|&i| t[i]).unwrap()
    };
    [t[k], t[(k + 1) % 3], t[(k + 2) % 3]]
}

pub fn delaunay(points: &[Vector2<f64>]) -> Result<Triangulation> {
    if points.len() < 3 {
        return Err(Error::DegenerateFacet("fewer than three points"));
    }
    if points.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
        return Err(Error::Invalid("non-finite point".into()));
    }
    let a = 0;
    let b = (1..points.len())
        .find(|&i| points[i] != points[a])
        .ok_or(Error::DegenerateFacet("all points coincide"))?;
    let c = (1..points.len())
        .find(|&i| orient2d(&points[a], &points[b], &points[i]) != 0.0)
        .ok_or(Error::DegenerateFacet("collinear points"))?;
    let (b, c) = if orient2d(&points[a], &points[b], &points[c]) > 0.0 {
        (b, c)
    } else {
        (c, b)
    };
    let mut tris: Vec<[usize; 3]> = vec![
        canonical([a, b, c]),
        canonical([b, a, GHOST]),
        canonical([c, b, GHOST]),
        canonical([a, c, GHOST]),
    ];
    let mut inserted: Vec<usize> = vec![a, b, c];

    for i in 0..points.len() {
        if i == a || i == b || i == c {
            continue;
        }
        let p = &points[i];
        if inserted.iter().any(|&j| points[j] == *p) {
            continue;
        }
        let (bad, good): (Vec<[usize; 3]>, Vec<[usize; 3]>) =
            tris.into_iter().partition(|t| conflicts(points, t, p));
        let edges: HashSet<(usize, usize)> = bad
            .iter()
            .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])])
            .collect();
        tris = good;
        for &(u, v) in &edges {
            if !edges.contains(&(v, u)) {
                tris.push(canonical([u, v, i]));
            }
        }
        inserted.push(i);
    }

    let mut triangles: Vec<[usize; 3]> = tris.into_iter().filter(|t| t[2] != GHOST).collect();
    triangles.sort_unstable();
    Ok(Triangulation {
        vertices: points.to_vec(),
        triangles,
    })
}

impl Triangulation {
    /// First triangle (in index order) containing `p`, boundary included.
    pub fn locate(&self, p: &Vector2<f64>) -> Option<usize> {
        self.triangles.iter().position(|t| {
            let v = |k: usize| &self.vertices[t[k]];
            orient2d(v(0), v(1), p) >= 0.0
                && orient2d(v(1), v(2), p) >= 0.0
                && orient2d(v(2), v(0), p) >= 0.0
        })
    }

    /// Smallest interior angle of triangle `t`, radians.
    pub fn min_angle(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
        triangle_min_angle(&a, &b, &c)
    }

    /// Smallest interior angle over all triangles, radians.
    pub fn global_min_angle(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| self.min_angle(t))
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest in-circle value of any vertex against any triangle, scaled by
    /// the squared diameter of the point set; at most round-off when the
    /// triangulation is Delaunay.
    pub fn max_incircle_violation(&self) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for t in &self.triangles {
            let [a, b, c] = t.map(|i| self.vertices[i]);
            for (k, d) in self.vertices.iter().enumerate() {
                if t.contains(&k) {
                    continue;
                }
                worst = worst.max(incircle(&a, &b, &c, d));
            }
        }
        worst
    }
}

pub fn triangle_min_angle(a: &Vector2<f64>, b: &Vector2<f64>, c: &Vector2<f64>) -> f64 {
    let angle = |p: &Vector2<f64>, q: &Vector2<f64>, r: &Vector2<f64>| {
        let (u, v) = (q - p, r - p);
        u.perp(&v).abs().atan2(u.dot(&v))
    };
    angle(a, b, c).min(angle(b, c, a)).min(angle(c, a, b))
}
