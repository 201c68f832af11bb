//! Triangle meshes and nearest-hit ray casting.

use nalgebra::Vector3;

/// Hits closer than this to the ray origin are ignored.
pub const RAY_EPSILON: f64 = 1e-9;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Mesh {
    /// Meters, world frame.
    pub vertices: Vec<Vector3<f64>>,
    /// Vertex index triples, counter-clockwise seen from the outside.
    pub faces: Vec<[usize; 3]>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub distance: f64,
    pub point: Vector3<f64>,
    pub face: usize,
}

impl Mesh {
    pub fn triangle(&self, f: usize) -> [Vector3<f64>; 3] {
        self.faces[f].map(|i| self.vertices[i])
    }

    /// Unit outward normal of face `f`.
    pub fn normal(&self, f: usize) -> Vector3<f64> {
        let [a, b, c] = self.triangle(f);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn area(&self, f: usize) -> f64 {
        let [a, b, c] = self.triangle(f);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    /// Adds the quad `a b c d` (counter-clockwise from outside) as two triangles.
    pub fn add_quad(&mut self, a: Vector3<f64>, b: Vector3<f64>, c: Vector3<f64>, d: Vector3<f64>) {
        let k = self.vertices.len();
        self.vertices.extend([a, b, c, d]);
        self.faces.push([k, k + 1, k + 2]);
        self.faces.push([k, k + 2, k + 3]);
    }

    pub fn add_triangle(&mut self, a: Vector3<f64>, b: Vector3<f64>, c: Vector3<f64>) {
        let k = self.vertices.len();
        self.vertices.extend([a, b, c]);
        self.faces.push([k, k + 1, k + 2]);
    }

    /// Horizontal rectangle at height `z`, facing up.
    pub fn add_floor(&mut self, x: (f64, f64), y: (f64, f64), z: f64) {
        self.add_quad(
            Vector3::new(x.0, y.0, z),
            Vector3::new(x.1, y.0, z),
            Vector3::new(x.1, y.1, z),
            Vector3::new(x.0, y.1, z),
        );
    }

    /// Axis-aligned box standing on `z = base`: four walls and a flat top.
    pub fn add_box(&mut self, x: (f64, f64), y: (f64, f64), base: f64, top: f64) {
        self.add_walls(x, y, base, top);
        self.add_floor(x, y, top);
    }

    /// Box with a gable roof whose ridge runs along x at `top + ridge`.
    pub fn add_gabled_box(
        &mut self,
        x: (f64, f64),
        y: (f64, f64),
        base: f64,
        top: f64,
        ridge: f64,
    ) {
        self.add_walls(x, y, base, top);
        let ym = 0.5 * (y.0 + y.1);
        let r = top + ridge;
        self.add_quad(
            Vector3::new(x.0, y.0, top),
            Vector3::new(x.1, y.0, top),
            Vector3::new(x.1, ym, r),
            Vector3::new(x.0, ym, r),
        );
        self.add_quad(
            Vector3::new(x.0, ym, r),
            Vector3::new(x.1, ym, r),
            Vector3::new(x.1, y.1, top),
            Vector3::new(x.0, y.1, top),
        );
        self.add_triangle(
            Vector3::new(x.0, y.1, top),
            Vector3::new(x.0, y.0, top),
            Vector3::new(x.0, ym, r),
        );
        self.add_triangle(
            Vector3::new(x.1, y.0, top),
            Vector3::new(x.1, y.1, top),
            Vector3::new(x.1, ym, r),
        );
    }

    fn add_walls(&mut self, x: (f64, f64), y: (f64, f64), base: f64, top: f64) {
        let v = |x: f64, y: f64, z: f64| Vector3::new(x, y, z);
        // -y, +x, +y, -x
        self.add_quad(
            v(x.0, y.0, base),
            v(x.1, y.0, base),
            v(x.1, y.0, top),
            v(x.0, y.0, top),
        );
        self.add_quad(
            v(x.1, y.0, base),
            v(x.1, y.1, base),
            v(x.1, y.1, top),
            v(x.1, y.0, top),
        );
        self.add_quad(
            v(x.1, y.1, base),
            v(x.0, y.1, base),
            v(x.0, y.1, top),
            v(x.1, y.1, top),
        );
        self.add_quad(
            v(x.0, y.1, base),
            v(x.0, y.0, base),
            v(x.0, y.0, top),
            v(x.0, y.1, top),
        );
    }

    /// Nearest intersection of the ray `origin + t dir`, `t > RAY_EPSILON`,
    /// with any face (both sides). `dir` need not be unit length; the
    /// returned distance is in units of `|dir|`.
    pub fn raycast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        for f in 0..self.faces.len() {
            if let Some(t) = ray_triangle(origin, dir, &self.triangle(f)) {
                if best.is_none_or(|b| t < b.distance) {
                    best = Some(Hit {
                        distance: t,
                        point: origin + dir * t,
                        face: f,
                    });
                }
            }
        }
        best
    }

    /// Whether the straight segment from `from` to `to` is free of faces,
    /// ignoring hits within `tol` meters of `to`.
    pub fn line_of_sight(&self, from: &Vector3<f64>, to: &Vector3<f64>, tol: f64) -> bool {
        let d = to - from;
        let len = d.norm();
        let dir = d / len;
        (0..self.faces.len()).all(|f| match ray_triangle(from, &dir, &self.triangle(f)) {
            Some(t) => t >= len - tol,
            None => true,
        })
    }
}

/// Moller-Trumbore ray/triangle intersection, two-sided. Returns the ray
/// parameter of the hit.
pub fn ray_triangle(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    tri: &[Vector3<f64>; 3],
) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let h = dir.cross(&e2);
    let det = e1.dot(&h);
    let scale = e1.norm() * e2.norm() * dir.norm();
    if det.abs() <= 1e-14 * scale {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - tri[0];
    let u = inv * s.dot(&h);
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = inv * dir.dot(&q);
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = inv * e2.dot(&q);
    (t > RAY_EPSILON).then_some(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nadir_hit_on_floor() {
        let mut m = Mesh::default();
        m.add_floor((-10.0, 10.0), (-10.0, 10.0), 0.0);
        let hit = m
            .raycast(&Vector3::new(1.0, 2.0, 11.0), &-Vector3::z())
            .unwrap();
        assert!((hit.distance - 11.0).abs() < 1e-12);
        assert!((hit.point - Vector3::new(1.0, 2.0, 0.0)).norm() < 1e-12);
        assert!(m
            .raycast(&Vector3::new(1.0, 2.0, 11.0), &Vector3::z())
            .is_none());
        assert!(m
            .raycast(&Vector3::new(20.0, 0.0, 11.0), &-Vector3::z())
            .is_none());
    }

    #[test]
    fn box_top_occludes_floor() {
        let mut m = Mesh::default();
        m.add_floor((-10.0, 10.0), (-10.0, 10.0), 0.0);
        m.add_box((-1.0, 1.0), (-1.0, 1.0), 0.0, 3.0);
        let hit = m
            .raycast(&Vector3::new(0.0, 0.0, 11.0), &-Vector3::z())
            .unwrap();
        assert!((hit.distance - 8.0).abs() < 1e-12);
        assert!((m.normal(hit.face) - Vector3::z()).norm() < 1e-12);
        assert!(!m.line_of_sight(
            &Vector3::new(0.0, 0.0, 11.0),
            &Vector3::new(0.0, 0.0, 0.0),
            1e-6
        ));
        assert!(m.line_of_sight(
            &Vector3::new(0.0, 0.0, 11.0),
            &Vector3::new(0.0, 0.0, 3.0),
            1e-6
        ));
    }

    #[test]
    fn box_walls_face_outward() {
        let mut m = Mesh::default();
        m.add_gabled_box((0.0, 4.0), (0.0, 2.0), 0.0, 3.0, 1.0);
        let centre = Vector3::new(2.0, 1.0, 1.5);
        for f in 0..m.faces.len() {
            let [a, b, c] = m.triangle(f);
            let mid = (a + b + c) / 3.0;
            assert!(m.normal(f).dot(&(mid - centre)) > 0.0, "face {f}");
        }
    }

    #[test]
    fn edge_and_grazing_rays() {
        let tri = [Vector3::zeros(), Vector3::x(), Vector3::y()];
        // through a vertex
        assert!(ray_triangle(&Vector3::new(0.0, 0.0, 1.0), &-Vector3::z(), &tri).is_some());
        // parallel to the plane
        assert!(ray_triangle(&Vector3::new(-1.0, 0.2, 0.0), &Vector3::x(), &tri).is_none());
    }
}
