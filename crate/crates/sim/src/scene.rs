//! Built-in scenes: a triangle mesh plus landmarks scattered on its faces.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::mesh::Mesh;

/// Identifiable point on the mesh with a synthetic detector score.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub id: u64,
    pub position: Vector3<f64>,
    pub face: usize,
    /// In [0, 1); higher is a stronger corner.
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub name: &'static str,
    pub mesh: Mesh,
    pub landmarks: Vec<Landmark>,
}

/// Large level ground plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlatPlaneParams {
    pub x: (f64, f64),
    pub y: (f64, f64),
    /// Landmarks per square meter.
    pub landmark_density: f64,
}

impl Default for FlatPlaneParams {
    fn default() -> Self {
        Self {
            x: (-30.0, 180.0),
            y: (-25.0, 25.0),
            landmark_density: 0.4,
        }
    }
}

/// Flat ground for the first part of the strip, then a row of buildings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UrbanStripParams {
    /// Strip start along x, meters.
    pub start: f64,
    /// Strip length along x.
    pub length: f64,
    /// Half width across the strip.
    pub half_width: f64,
    /// Fraction of the length that is flat before the first building.
    pub transition_fraction: f64,
    /// Building footprint length along x, min and max.
    pub building_length: (f64, f64),
    /// Gap between buildings along x, min and max.
    pub street_width: (f64, f64),
    /// Building wall heights, min and max.
    pub building_height: (f64, f64),
    /// Every n-th building gets a gable roof of this ridge height.
    pub gable_every: usize,
    pub ridge_height: f64,
    pub landmark_density: f64,
    /// Seeds the building layout only.
    pub layout_seed: u64,
}

impl Default for UrbanStripParams {
    fn default() -> Self {
        Self {
            start: 0.0,
            length: 150.0,
            half_width: 25.0,
            transition_fraction: 0.5,
            building_length: (10.0, 18.0),
            street_width: (4.0, 8.0),
            building_height: (3.0, 6.0),
            gable_every: 3,
            ridge_height: 1.5,
            landmark_density: 0.4,
            layout_seed: 7,
        }
    }
}

/// Floor with a row of adjacent boxes of different heights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IndoorBoxesParams {
    pub floor_x: (f64, f64),
    pub floor_y: (f64, f64),
    /// Where the row of boxes starts along x.
    pub row_start: f64,
    /// Length of each box along x.
    pub box_length: f64,
    /// Half width of the boxes across the row.
    pub box_half_width: f64,
    /// Box heights in row order; adjacent boxes touch, so consecutive
    /// entries form vertical drop-offs.
    pub heights: Vec<f64>,
    pub landmark_density: f64,
}

impl Default for IndoorBoxesParams {
    fn default() -> Self {
        Self {
            floor_x: (-6.0, 36.0),
            floor_y: (-8.0, 8.0),
            row_start: 4.0,
            box_length: 2.0,
            box_half_width: 1.5,
            heights: vec![0.5, 1.2, 0.3, 1.5, 0.8, 1.4, 0.4, 1.0, 0.6, 1.3, 0.5, 1.1],
            landmark_density: 3.0,
        }
    }
}

/// Vertical wall facing -x.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TexturedWallParams {
    /// Wall plane position along x.
    pub distance: f64,
    pub y: (f64, f64),
    pub z: (f64, f64),
    pub landmark_density: f64,
}

impl Default for TexturedWallParams {
    fn default() -> Self {
        Self {
            distance: 10.0,
            y: (-20.0, 20.0),
            z: (0.0, 10.0),
            landmark_density: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneConfig {
    FlatPlane(FlatPlaneParams),
    UrbanStrip(UrbanStripParams),
    IndoorBoxes(IndoorBoxesParams),
    TexturedWall(TexturedWallParams),
}

impl SceneConfig {
    pub fn name(&self) -> &'static str {
        match self {
            SceneConfig::FlatPlane(_) => "flat_plane",
            SceneConfig::UrbanStrip(_) => "urban_strip",
            SceneConfig::IndoorBoxes(_) => "indoor_boxes",
            SceneConfig::TexturedWall(_) => "textured_wall",
        }
    }

    fn density(&self) -> f64 {
        match self {
            SceneConfig::FlatPlane(p) => p.landmark_density,
            SceneConfig::UrbanStrip(p) => p.landmark_density,
            SceneConfig::IndoorBoxes(p) => p.landmark_density,
            SceneConfig::TexturedWall(p) => p.landmark_density,
        }
    }

    /// Builds the mesh (deterministic in the parameters) and scatters
    /// landmarks with `seed`.
    pub fn build(&self, seed: u64) -> Result<Scene> {
        let density = self.density();
        if !(density.is_finite() && density >= 0.0) {
            return Err(SimError::Config(
                "landmark density must be non-negative".into(),
            ));
        }
        let mesh = match self {
            SceneConfig::FlatPlane(p) => {
                check_range(p.x, "x")?;
                check_range(p.y, "y")?;
                let mut m = Mesh::default();
                m.add_floor(p.x, p.y, 0.0);
                m
            }
            SceneConfig::UrbanStrip(p) => urban_strip(p)?,
            SceneConfig::IndoorBoxes(p) => indoor_boxes(p)?,
            SceneConfig::TexturedWall(p) => {
                check_range(p.y, "y")?;
                check_range(p.z, "z")?;
                let mut m = Mesh::default();
                let v = |y: f64, z: f64| Vector3::new(p.distance, y, z);
                m.add_quad(
                    v(p.y.1, p.z.0),
                    v(p.y.0, p.z.0),
                    v(p.y.0, p.z.1),
                    v(p.y.1, p.z.1),
                );
                m
            }
        };
        let landmarks = scatter_landmarks(&mesh, density, seed);
        Ok(Scene {
            name: self.name(),
            mesh,
            landmarks,
        })
    }
}

/// Default configuration of every built-in scene.
pub fn builtin_scenes() -> Vec<SceneConfig> {
    vec![
        SceneConfig::FlatPlane(FlatPlaneParams::default()),
        SceneConfig::UrbanStrip(UrbanStripParams::default()),
        SceneConfig::IndoorBoxes(IndoorBoxesParams::default()),
        SceneConfig::TexturedWall(TexturedWallParams::default()),
    ]
}

fn check_range(r: (f64, f64), what: &str) -> Result<()> {
    if !(r.0.is_finite() && r.1.is_finite() && r.0 < r.1) {
        return Err(SimError::Config(format!("{what} range must be increasing")));
    }
    Ok(())
}

fn urban_strip(p: &UrbanStripParams) -> Result<Mesh> {
    check_range(p.building_length, "building_length")?;
    check_range(p.street_width, "street_width")?;
    check_range(p.building_height, "building_height")?;
    if !(0.0..=1.0).contains(&p.transition_fraction) || !(p.length > 0.0 && p.half_width > 0.0) {
        return Err(SimError::Config("invalid urban strip extent".into()));
    }
    let margin = 30.0;
    let mut m = Mesh::default();
    m.add_floor(
        (p.start - margin, p.start + p.length + margin),
        (-p.half_width, p.half_width),
        0.0,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(p.layout_seed);
    let end = p.start + p.length + margin;
    let mut x = p.start + p.transition_fraction * p.length;
    let mut k = 0usize;
    while x < end {
        let len = rng.random_range(p.building_length.0..p.building_length.1);
        let h = rng.random_range(p.building_height.0..p.building_height.1);
        let y0 = -p.half_width * rng.random_range(0.35..0.6);
        let y1 = p.half_width * rng.random_range(0.35..0.6);
        let x1 = (x + len).min(end);
        k += 1;
        if p.gable_every > 0 && k.is_multiple_of(p.gable_every) {
            m.add_gabled_box((x, x1), (y0, y1), 0.0, h, p.ridge_height);
        } else {
            m.add_box((x, x1), (y0, y1), 0.0, h);
        }
        x = x1 + rng.random_range(p.street_width.0..p.street_width.1);
    }
    Ok(m)
}

/// Row-boundary x coordinates and heights of the box row.
pub fn box_row(p: &IndoorBoxesParams) -> Vec<((f64, f64), f64)> {
    p.heights
        .iter()
        .enumerate()
        .map(|(i, &h)| {
            let x0 = p.row_start + i as f64 * p.box_length;
            ((x0, x0 + p.box_length), h)
        })
        .collect()
}

fn indoor_boxes(p: &IndoorBoxesParams) -> Result<Mesh> {
    check_range(p.floor_x, "floor_x")?;
    check_range(p.floor_y, "floor_y")?;
    if !(p.box_length > 0.0 && p.box_half_width > 0.0) || p.heights.iter().any(|h| !(*h > 0.0)) {
        return Err(SimError::Config(
            "boxes need positive size and height".into(),
        ));
    }
    let mut m = Mesh::default();
    m.add_floor(p.floor_x, p.floor_y, 0.0);
    for (x, h) in box_row(p) {
        m.add_box(x, (-p.box_half_width, p.box_half_width), 0.0, h);
    }
    Ok(m)
}

/// Uniform-by-area landmarks: a Poisson-distributed count per face with the
/// given density, placed uniformly on the triangle.
pub fn scatter_landmarks(mesh: &Mesh, density: f64, seed: u64) -> Vec<Landmark> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x4c41_4e44);
    let mut out = Vec::new();
    for f in 0..mesh.faces.len() {
        let expected = density * mesh.area(f);
        // whole part deterministic, fraction by coin flip keeps the count unbiased
        let n = expected.floor() as usize + usize::from(rng.random_bool(expected.fract()));
        let [a, b, c] = mesh.triangle(f);
        for _ in 0..n {
            let (mut s, mut t) = (rng.random::<f64>(), rng.random::<f64>());
            if s + t > 1.0 {
                (s, t) = (1.0 - s, 1.0 - t);
            }
            out.push(Landmark {
                id: out.len() as u64,
                position: a + (b - a) * s + (c - a) * t,
                face: f,
                score: rng.random::<f64>(),
            });
        }
    }
    out
}

/// Distance from `p` to the plane of face `f`, used to check landmarks.
pub fn plane_distance(mesh: &Mesh, f: usize, p: &Vector3<f64>) -> f64 {
    let [a, _, _] = mesh.triangle(f);
    mesh.normal(f).dot(&(p - a)).abs()
}
