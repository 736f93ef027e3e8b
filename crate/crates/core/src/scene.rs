//! Geometric data model for placed objects and room layouts.
//!
//! Conventions: `y` is up, footprints live in the XZ plane, the floor is
//! `y = 0` and the room spans `[0, height]` vertically and
//! `[-half_x, half_x] x [-half_z, half_z]` horizontally. Yaw is measured in
//! degrees, counter-clockwise when viewed from `+y`, and always stored
//! normalized to `[0, 360)`. At yaw 0 an object's width runs along `x`, its
//! depth along `z`, and its front faces `+z`.

use std::collections::HashSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Intersection areas below this are treated as touching, not overlapping.
pub const AREA_EPSILON: f64 = 1e-12;

/// Slack used by every containment check against room bounds.
pub const BOUNDS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SceneError {
    #[error("invalid dims: h={h}, w={w}, d={d} (all must be finite and > 0)")]
    InvalidDims { h: f64, w: f64, d: f64 },
    #[error("non-finite coordinate ({x}, {y}, {z})")]
    NonFiniteCoordinate { x: f64, y: f64, z: f64 },
    #[error("non-finite angle {0}")]
    NonFiniteAngle(f64),
    #[error("invalid room bounds: half_x={half_x}, half_z={half_z}, height={height}")]
    InvalidBounds { half_x: f64, half_z: f64, height: f64 },
    #[error("object name must be non-empty")]
    EmptyName,
    #[error("duplicate object name {0:?}")]
    DuplicateName(String),
}

/// Bounding-box size: `h` vertical, `w` along local x, `d` along local z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDims")]
pub struct BBoxDims {
    pub h: f64,
    pub w: f64,
    pub d: f64,
}

#[derive(Deserialize)]
struct RawDims {
    h: f64,
    w: f64,
    d: f64,
}

impl TryFrom<RawDims> for BBoxDims {
    type Error = SceneError;

    fn try_from(raw: RawDims) -> Result<Self, Self::Error> {
        BBoxDims::new(raw.h, raw.w, raw.d)
    }
}

impl BBoxDims {
    pub fn new(h: f64, w: f64, d: f64) -> Result<Self, SceneError> {
        let dims = BBoxDims { h, w, d };
        if dims.is_valid() {
            Ok(dims)
        } else {
            Err(SceneError::InvalidDims { h, w, d })
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.h, self.w, self.d]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
    }

    pub fn volume(&self) -> f64 {
        self.h * self.w * self.d
    }

    pub fn footprint_area(&self) -> f64 {
        self.w * self.d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPoint")]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Deserialize)]
struct RawPoint {
    x: f64,
    y: f64,
    z: f64,
}

impl TryFrom<RawPoint> for Point3 {
    type Error = SceneError;

    fn try_from(raw: RawPoint) -> Result<Self, Self::Error> {
        Point3::new(raw.x, raw.y, raw.z)
    }
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self, SceneError> {
        if x.is_finite() && y.is_finite() && z.is_finite() {
            Ok(Point3 { x, y, z })
        } else {
            Err(SceneError::NonFiniteCoordinate { x, y, z })
        }
    }

    pub const fn origin() -> Self {
        Point3 {
            x: 0.0,
            y: 0.0,
            z: 0.0,
        }
    }
}

/// A point in the horizontal XZ plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vec2 {
    pub x: f64,
    pub z: f64,
}

impl Vec2 {
    pub const fn new(x: f64, z: f64) -> Self {
        Vec2 { x, z }
    }

    fn sub(self, other: Vec2) -> Vec2 {
        Vec2::new(self.x - other.x, self.z - other.z)
    }

    fn cross(self, other: Vec2) -> f64 {
        self.x * other.z - self.z * other.x
    }
}

/// Normalizes an angle in degrees into `[0, 360)`.
pub fn normalize_yaw(degrees: f64) -> f64 {
    let r = degrees.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs; `+ 0.0` clears -0.0.
    if r >= 360.0 {
        0.0
    } else {
        r + 0.0
    }
}

/// `(sin, cos)` of a yaw in degrees, exact for multiples of 90.
pub fn yaw_sin_cos(degrees: f64) -> (f64, f64) {
    let yaw = normalize_yaw(degrees);
    if yaw == 0.0 {
        (0.0, 1.0)
    } else if yaw == 90.0 {
        (1.0, 0.0)
    } else if yaw == 180.0 {
        (0.0, -1.0)
    } else if yaw == 270.0 {
        (-1.0, 0.0)
    } else {
        yaw.to_radians().sin_cos()
    }
}

/// One object instance: the `{bbox, center, yaw}` triplet plus its labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPlacedObject")]
pub struct PlacedObject {
    pub name: String,
    #[serde(default)]
    pub category: String,
    #[serde(rename = "bbox")]
    pub dims: BBoxDims,
    #[serde(rename = "coordinates")]
    pub center: Point3,
    #[serde(rename = "angle")]
    pub yaw: f64,
}

#[derive(Deserialize)]
struct RawPlacedObject {
    name: String,
    #[serde(default)]
    category: String,
    bbox: BBoxDims,
    coordinates: Point3,
    angle: f64,
}

impl TryFrom<RawPlacedObject> for PlacedObject {
    type Error = SceneError;

    fn try_from(raw: RawPlacedObject) -> Result<Self, Self::Error> {
        PlacedObject::new(raw.name, raw.category, raw.bbox, raw.coordinates, raw.angle)
    }
}

impl PlacedObject {
    pub fn new(
        name: impl Into<String>,
        category: impl Into<String>,
        dims: BBoxDims,
        center: Point3,
        yaw: f64,
    ) -> Result<Self, SceneError> {
        let name = name.into();
        if name.is_empty() {
            return Err(SceneError::EmptyName);
        }
        if !yaw.is_finite() {
            return Err(SceneError::NonFiniteAngle(yaw));
        }
        Ok(PlacedObject {
            name,
            category: category.into(),
            dims,
            center,
            yaw: normalize_yaw(yaw),
        })
    }

    pub fn volume(&self) -> f64 {
        self.dims.volume()
    }

    /// Vertical extent `(bottom, top)`.
    pub fn y_range(&self) -> (f64, f64) {
        let half = self.dims.h / 2.0;
        (self.center.y - half, self.center.y + half)
    }

    /// Unit vector in the XZ plane that the object's front faces.
    pub fn heading(&self) -> Vec2 {
        let (s, c) = yaw_sin_cos(self.yaw);
        Vec2::new(s, c)
    }

    /// Maps a point from the object's local frame (XZ, origin at center) to world XZ.
    pub fn local_to_world(&self, local: Vec2) -> Vec2 {
        let (s, c) = yaw_sin_cos(self.yaw);
        Vec2::new(
            self.center.x + c * local.x + s * local.z,
            self.center.z - s * local.x + c * local.z,
        )
    }

    pub fn world_to_local(&self, world: Vec2) -> Vec2 {
        let (s, c) = yaw_sin_cos(self.yaw);
        let dx = world.x - self.center.x;
        let dz = world.z - self.center.z;
        Vec2::new(c * dx - s * dz, s * dx + c * dz)
    }

    /// Whether a world-space point lies inside (or on) this box.
    pub fn contains(&self, x: f64, y: f64, z: f64) -> bool {
        let (bottom, top) = self.y_range();
        if y < bottom || y > top {
            return false;
        }
        let local = self.world_to_local(Vec2::new(x, z));
        local.x.abs() <= self.dims.w / 2.0 && local.z.abs() <= self.dims.d / 2.0
    }

    fn footprint_radius(&self) -> f64 {
        0.5 * self.dims.w.hypot(self.dims.d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBounds")]
pub struct RoomBounds {
    pub half_x: f64,
    pub half_z: f64,
    pub height: f64,
}

#[derive(Deserialize)]
struct RawBounds {
    half_x: f64,
    half_z: f64,
    height: f64,
}

impl TryFrom<RawBounds> for RoomBounds {
    type Error = SceneError;

    fn try_from(raw: RawBounds) -> Result<Self, Self::Error> {
        RoomBounds::new(raw.half_x, raw.half_z, raw.height)
    }
}

impl RoomBounds {
    pub fn new(half_x: f64, half_z: f64, height: f64) -> Result<Self, SceneError> {
        let ok = [half_x, half_z, height]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(RoomBounds {
                half_x,
                half_z,
                height,
            })
        } else {
            Err(SceneError::InvalidBounds {
                half_x,
                half_z,
                height,
            })
        }
    }

    /// Default extents: living rooms are 6 x 5 m, everything else 4 x 4 m, all 3 m high.
    pub fn default_for_room_type(room_type: &str) -> Self {
        let key: String = room_type
            .chars()
            .filter(|c| c.is_alphanumeric())
            .flat_map(char::to_lowercase)
            .collect();
        if key.contains("living") {
            RoomBounds {
                half_x: 3.0,
                half_z: 2.5,
                height: 3.0,
            }
        } else {
            RoomBounds {
                half_x: 2.0,
                half_z: 2.0,
                height: 3.0,
            }
        }
    }

    pub fn contains_xz(&self, p: Vec2) -> bool {
        p.x.abs() <= self.half_x + BOUNDS_TOLERANCE && p.z.abs() <= self.half_z + BOUNDS_TOLERANCE
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneLayout {
    pub room_type: String,
    pub bounds: RoomBounds,
    pub objects: Vec<PlacedObject>,
}

impl SceneLayout {
    /// Builds a layout, rejecting duplicate object names.
    pub fn new(
        room_type: impl Into<String>,
        bounds: RoomBounds,
        objects: Vec<PlacedObject>,
    ) -> Result<Self, SceneError> {
        let mut seen = HashSet::new();
        for obj in &objects {
            if !seen.insert(obj.name.as_str()) {
                return Err(SceneError::DuplicateName(obj.name.clone()));
            }
        }
        Ok(SceneLayout {
            room_type: room_type.into(),
            bounds,
            objects,
        })
    }

    pub fn empty(room_type: impl Into<String>, bounds: RoomBounds) -> Self {
        SceneLayout {
            room_type: room_type.into(),
            bounds,
            objects: Vec::new(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&PlacedObject> {
        self.objects.iter().find(|o| o.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.objects.iter().map(|o| o.name.as_str())
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("layout serialization is infallible")
    }
}

/// The four footprint corners in the XZ plane, counter-clockwise (positive
/// signed area with `x` as the first axis and `z` as the second).
pub fn footprint_polygon(obj: &PlacedObject) -> [Vec2; 4] {
    let hw = obj.dims.w / 2.0;
    let hd = obj.dims.d / 2.0;
    [
        Vec2::new(-hw, -hd),
        Vec2::new(hw, -hd),
        Vec2::new(hw, hd),
        Vec2::new(-hw, hd),
    ]
    .map(|corner| obj.local_to_world(corner))
}

pub fn polygon_area(poly: &[Vec2]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for (i, p) in poly.iter().enumerate() {
        let q = poly[(i + 1) % poly.len()];
        twice += p.cross(q);
    }
    twice / 2.0
}

/// Clips `subject` against the convex counter-clockwise polygon `clip`.
pub fn clip_convex(subject: &[Vec2], clip: &[Vec2]) -> Vec<Vec2> {
    let mut output: Vec<Vec2> = subject.to_vec();
    let mut input = Vec::with_capacity(8);
    for (i, &a) in clip.iter().enumerate() {
        if output.is_empty() {
            break;
        }
        let b = clip[(i + 1) % clip.len()];
        let edge = b.sub(a);
        std::mem::swap(&mut input, &mut output);
        output.clear();
        let side = |p: Vec2| edge.cross(p.sub(a));
        for (j, &cur) in input.iter().enumerate() {
            let prev = input[(j + input.len() - 1) % input.len()];
            let (sc, sp) = (side(cur), side(prev));
            if sc >= 0.0 {
                if sp < 0.0 {
                    output.push(segment_line_intersection(prev, cur, sp, sc));
                }
                output.push(cur);
            } else if sp >= 0.0 {
                output.push(segment_line_intersection(prev, cur, sp, sc));
            }
        }
    }
    output
}

fn segment_line_intersection(p: Vec2, q: Vec2, sp: f64, sq: f64) -> Vec2 {
    let t = sp / (sp - sq);
    Vec2::new(p.x + t * (q.x - p.x), p.z + t * (q.z - p.z))
}

/// Area of the intersection of two yaw-rotated footprints.
pub fn footprint_intersection_area(a: &PlacedObject, b: &PlacedObject) -> f64 {
    let dx = a.center.x - b.center.x;
    let dz = a.center.z - b.center.z;
    if dx.hypot(dz) > a.footprint_radius() + b.footprint_radius() {
        return 0.0;
    }
    let area = polygon_area(&clip_convex(&footprint_polygon(a), &footprint_polygon(b)));
    if area < AREA_EPSILON {
        0.0
    } else {
        area
    }
}

/// Exact intersection volume: vertical interval overlap times footprint
/// intersection area.
pub fn pair_intersection_volume(a: &PlacedObject, b: &PlacedObject) -> f64 {
    let (a_bottom, a_top) = a.y_range();
    let (b_bottom, b_top) = b.y_range();
    let vertical = a_top.min(b_top) - a_bottom.max(b_bottom);
    if vertical <= 0.0 {
        return 0.0;
    }
    vertical * footprint_intersection_area(a, b)
}

const EMBED_TOLERANCE: f64 = 1e-9;

/// Whether `inner` lies entirely inside `outer`, up to [`EMBED_TOLERANCE`].
pub fn is_embedded(inner: &PlacedObject, outer: &PlacedObject) -> bool {
    let (ib, it) = inner.y_range();
    let (ob, ot) = outer.y_range();
    if ib < ob - EMBED_TOLERANCE || it > ot + EMBED_TOLERANCE {
        return false;
    }
    let (hw, hd) = (outer.dims.w / 2.0 + EMBED_TOLERANCE, outer.dims.d / 2.0 + EMBED_TOLERANCE);
    footprint_polygon(inner).iter().all(|&p| {
        let local = outer.world_to_local(p);
        local.x.abs() <= hw && local.z.abs() <= hd
    })
}

/// Intersection volume divided by the smaller of the two volumes, in `[0, 1]`.
///
/// A box embedded in the other scores exactly 1 and ratios below
/// [`EMBED_TOLERANCE`] score 0, so clipping residue from rotated or
/// face-touching boxes does not leak into either endpoint.
pub fn pair_overlap_ratio(a: &PlacedObject, b: &PlacedObject) -> f64 {
    let smaller = a.volume().min(b.volume());
    if smaller <= 0.0 {
        return 0.0;
    }
    let (small, large) = if a.volume() <= b.volume() { (a, b) } else { (b, a) };
    if is_embedded(small, large) {
        return 1.0;
    }
    let ratio = (pair_intersection_volume(a, b) / smaller).clamp(0.0, 1.0);
    if ratio <= EMBED_TOLERANCE {
        0.0
    } else {
        ratio
    }
}

/// Monte-Carlo estimate of the intersection volume: uniform samples inside
/// the smaller box, scaled by the fraction that also lie in the other box.
pub fn mc_intersection_volume(a: &PlacedObject, b: &PlacedObject, samples: u32, seed: u64) -> f64 {
    let samples = samples.max(1);
    let (small, other) = if a.volume() <= b.volume() { (a, b) } else { (b, a) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (bottom, _) = small.y_range();
    let mut hits = 0u32;
    for _ in 0..samples {
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        let t: f64 = rng.random();
        let local = Vec2::new((u - 0.5) * small.dims.w, (t - 0.5) * small.dims.d);
        let world = small.local_to_world(local);
        let y = bottom + v * small.dims.h;
        if other.contains(world.x, y, world.z) {
            hits += 1;
        }
    }
    f64::from(hits) / f64::from(samples) * small.volume()
}

pub fn footprint_in_bounds(obj: &PlacedObject, bounds: &RoomBounds) -> bool {
    footprint_polygon(obj).iter().all(|&p| bounds.contains_xz(p))
}

pub fn vertical_in_bounds(obj: &PlacedObject, bounds: &RoomBounds) -> bool {
    let (bottom, top) = obj.y_range();
    bottom >= -BOUNDS_TOLERANCE && top <= bounds.height + BOUNDS_TOLERANCE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    FootprintOutOfBounds { name: String },
    VerticalOutOfBounds { name: String },
    DuplicateName { name: String },
    NonPositiveDims { name: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::FootprintOutOfBounds { name } => write!(f, "{name}: footprint outside room"),
            Violation::VerticalOutOfBounds { name } => {
                write!(f, "{name}: vertical extent outside [0, height]")
            }
            Violation::DuplicateName { name } => write!(f, "{name}: duplicate name"),
            Violation::NonPositiveDims { name } => write!(f, "{name}: non-positive dims"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_layout(layout: &SceneLayout) -> ValidationReport {
    let mut violations = Vec::new();
    let mut seen = HashSet::new();
    for obj in &layout.objects {
        if !seen.insert(obj.name.as_str()) {
            violations.push(Violation::DuplicateName {
                name: obj.name.clone(),
            });
        }
        if !obj.dims.is_valid() {
            violations.push(Violation::NonPositiveDims {
                name: obj.name.clone(),
            });
            continue;
        }
        if !footprint_in_bounds(obj, &layout.bounds) {
            violations.push(Violation::FootprintOutOfBounds {
                name: obj.name.clone(),
            });
        }
        if !vertical_in_bounds(obj, &layout.bounds) {
            violations.push(Violation::VerticalOutOfBounds {
                name: obj.name.clone(),
            });
        }
    }
    ValidationReport { violations }
}
