//! Deterministic rule-based layout solver.
//!
//! Objects are placed largest footprint first, with chairs right after the
//! tables they belong to. Non-chairs go against a wall
//! (back face `wall_margin` from the wall, facing the room center), chairs
//! go beside a table or desk facing it, and anything that cannot be placed
//! that way falls back to a shuffled interior grid scan. A candidate is
//! accepted only if it stays inside the room and has zero overlap with
//! everything placed so far.
//!
//! Every coordinate the solver emits is a multiple of 0.01 m, so a layout
//! survives the two-decimal output format unchanged.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Instance;
use crate::parser::{layout_placements, serialize_block, ObjectSpec, OutputBlockKind};
use crate::scene::{
    footprint_in_bounds, normalize_yaw, pair_overlap_ratio, vertical_in_bounds, PlacedObject, Point3,
    RoomBounds, SceneLayout, Vec2,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlacerConfig {
    pub seed: u64,
    pub wall_margin: f64,
    pub alignment_grid: f64,
    pub chair_gap: f64,
    pub max_attempts: u32,
    pub grid_step: f64,
}

impl Default for PlacerConfig {
    fn default() -> Self {
        PlacerConfig {
            seed: 0,
            wall_margin: 0.05,
            alignment_grid: 90.0,
            chair_gap: 0.1,
            max_attempts: 200,
            grid_step: 0.1,
        }
    }
}

impl PlacerConfig {
    pub fn with_seed(seed: u64) -> Self {
        PlacerConfig {
            seed,
            ..PlacerConfig::default()
        }
    }

    fn check(&self) -> Result<(), PlacementError> {
        let ok = self.wall_margin >= 0.0
            && self.chair_gap >= 0.0
            && self.max_attempts >= 1
            && self.grid_step > 0.0
            && self.alignment_grid > 0.0
            && self.alignment_grid <= 360.0;
        if ok {
            Ok(())
        } else {
            Err(PlacementError::InvalidConfig(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlacementError {
    #[error("cannot place {name:?}: no free position found")]
    Infeasible { name: String },
    #[error("invalid placer config: {0}")]
    InvalidConfig(String),
    #[error("layout output: {0}")]
    Output(String),
}

pub fn is_chair(category: &str) -> bool {
    category.to_lowercase().contains("chair")
}

pub fn is_table(category: &str) -> bool {
    let c = category.to_lowercase();
    c.contains("table") || c.contains("desk")
}

/// Whether `chair` sits beside `table` and faces it: its center lies in the
/// table footprint grown by the chair depth plus `chair_gap`, and its
/// heading is within 45 degrees of the direction to the table center.
pub fn chair_near_table(chair: &PlacedObject, table: &PlacedObject, chair_gap: f64) -> bool {
    let local = table.world_to_local(Vec2::new(chair.center.x, chair.center.z));
    let reach = chair.dims.d + chair_gap + 1e-9;
    if local.x.abs() > table.dims.w / 2.0 + reach || local.z.abs() > table.dims.d / 2.0 + reach {
        return false;
    }
    let to_table = Vec2::new(table.center.x - chair.center.x, table.center.z - chair.center.z);
    let len = to_table.x.hypot(to_table.z);
    if len == 0.0 {
        return true;
    }
    let heading = chair.heading();
    (heading.x * to_table.x + heading.z * to_table.z) / len >= std::f64::consts::FRAC_1_SQRT_2 - 1e-9
}

fn q_round(v: f64) -> f64 {
    (v * 100.0).round() / 100.0 + 0.0
}

fn q_floor(v: f64) -> f64 {
    ((v * 100.0) + 1e-7).floor() / 100.0 + 0.0
}

fn q_ceil(v: f64) -> f64 {
    ((v * 100.0) - 1e-7).ceil() / 100.0 + 0.0
}

/// Offsets `0, +s, -s, +2s, -2s, ...` with magnitude at most `limit`, in hundredths.
fn centered_offsets(limit: f64, step: f64) -> Vec<f64> {
    let mut out = vec![0.0];
    if limit <= 0.0 {
        return out;
    }
    let mut k = 1u32;
    loop {
        let t = q_round(f64::from(k) * step);
        if t > limit + 1e-9 {
            break;
        }
        out.push(t);
        out.push(-t);
        k += 1;
    }
    out
}

#[derive(Debug, Clone, Copy)]
enum Wall {
    North,
    East,
    South,
    West,
}

const WALL_ORDER: [Wall; 4] = [Wall::North, Wall::East, Wall::South, Wall::West];

struct Candidate {
    x: f64,
    z: f64,
    yaw: f64,
}

struct Solver<'a> {
    bounds: RoomBounds,
    config: &'a PlacerConfig,
    rng: ChaCha8Rng,
    placed: Vec<PlacedObject>,
}

impl Solver<'_> {
    fn resting_y(&self, spec: &ObjectSpec) -> f64 {
        q_ceil(spec.dims.h / 2.0)
    }

    fn try_candidates(
        &self,
        spec: &ObjectSpec,
        candidates: impl IntoIterator<Item = Candidate>,
    ) -> Option<PlacedObject> {
        let y = self.resting_y(spec);
        candidates
            .into_iter()
            .take(self.config.max_attempts as usize)
            .filter_map(|c| {
                let center = Point3::new(c.x, y, c.z).ok()?;
                PlacedObject::new(spec.name.clone(), spec.category.clone(), spec.dims, center, c.yaw).ok()
            })
            .find(|obj| self.fits(obj))
    }

    fn fits(&self, obj: &PlacedObject) -> bool {
        footprint_in_bounds(obj, &self.bounds)
            && vertical_in_bounds(obj, &self.bounds)
            && self.placed.iter().all(|p| pair_overlap_ratio(p, obj) == 0.0)
    }

    /// Wall-normal coordinate rounded toward the wall unless that would cross it.
    fn wall_coordinate(&self, wall_at: f64, half_depth: f64) -> f64 {
        let margin = self.config.wall_margin;
        if wall_at < 0.0 {
            let exact = wall_at + margin + half_depth;
            let q = q_floor(exact);
            if q - half_depth < wall_at - 1e-9 {
                q_ceil(exact)
            } else {
                q
            }
        } else {
            let exact = wall_at - margin - half_depth;
            let q = q_ceil(exact);
            if q + half_depth > wall_at + 1e-9 {
                q_floor(exact)
            } else {
                q
            }
        }
    }

    fn wall_candidates(&mut self, spec: &ObjectSpec) -> Vec<Candidate> {
        let (w, d) = (spec.dims.w, spec.dims.d);
        let margin = self.config.wall_margin;
        let step = self.config.grid_step;
        let mut out = Vec::new();
        for wall in WALL_ORDER {
            let (along_half, normal_half, yaw) = match wall {
                Wall::North => (self.bounds.half_x, -self.bounds.half_z, 0.0),
                Wall::South => (self.bounds.half_x, self.bounds.half_z, 180.0),
                Wall::East => (self.bounds.half_z, self.bounds.half_x, 270.0),
                Wall::West => (self.bounds.half_z, -self.bounds.half_x, 90.0),
            };
            let limit = along_half - margin - w / 2.0;
            if limit < 0.0 {
                continue;
            }
            let normal = self.wall_coordinate(normal_half, d / 2.0);
            let mut positions = centered_offsets(limit, step);
            let corner = q_floor(limit);
            if corner > 0.0 && !positions.contains(&corner) {
                positions.push(corner);
                positions.push(-corner);
            }
            positions.shuffle(&mut self.rng);
            out.extend(positions.into_iter().map(|t| match wall {
                Wall::North | Wall::South => Candidate { x: t, z: normal, yaw },
                Wall::East | Wall::West => Candidate { x: normal, z: t, yaw },
            }));
        }
        out
    }

    fn chair_candidates(&self, spec: &ObjectSpec) -> Vec<Candidate> {
        let gap = self.config.chair_gap;
        let chair_half_depth = spec.dims.d / 2.0;
        let mut out = Vec::new();
        for table in self.placed.iter().filter(|p| is_table(&p.category)) {
            let (tw, td) = (table.dims.w / 2.0, table.dims.d / 2.0);
            // (normal offset, edge half-length, local yaw facing the table, edge axis is x)
            let edges = [
                (td + gap + chair_half_depth, tw, 180.0, true),
                (-(td + gap + chair_half_depth), tw, 0.0, true),
                (tw + gap + chair_half_depth, td, 270.0, false),
                (-(tw + gap + chair_half_depth), td, 90.0, false),
            ];
            let per_edge: Vec<Vec<f64>> = edges
                .iter()
                .map(|(offset, half_len, _, _)| {
                    // Keeps the chair's heading within 45 degrees of the table center.
                    let limit = half_len.min(offset.abs() - 0.02);
                    centered_offsets(limit, self.config.grid_step)
                })
                .collect();
            let max_rank = per_edge.iter().map(Vec::len).max().unwrap_or(0);
            for rank in 0..max_rank {
                for (edge, offsets) in edges.iter().zip(&per_edge) {
                    let Some(&t) = offsets.get(rank) else { continue };
                    let (offset, _, local_yaw, along_x) = *edge;
                    let local = if along_x {
                        Vec2::new(t, offset)
                    } else {
                        Vec2::new(offset, t)
                    };
                    let world = table.local_to_world(local);
                    out.push(Candidate {
                        x: q_round(world.x),
                        z: q_round(world.z),
                        yaw: normalize_yaw(table.yaw + local_yaw),
                    });
                }
            }
        }
        out
    }

    fn interior_candidates(&mut self, spec: &ObjectSpec) -> Vec<Candidate> {
        let step = self.config.grid_step;
        let grid = self.config.alignment_grid;
        let yaws: Vec<f64> = (0..)
            .map(|k| f64::from(k) * grid)
            .take_while(|y| *y < 360.0)
            .collect();
        let reach = 0.5 * spec.dims.w.min(spec.dims.d);
        let xs = centered_offsets(self.bounds.half_x - reach, step);
        let zs = centered_offsets(self.bounds.half_z - reach, step);
        let mut out = Vec::with_capacity(xs.len() * zs.len() * yaws.len());
        for &x in &xs {
            for &z in &zs {
                for &yaw in &yaws {
                    out.push(Candidate { x, z, yaw });
                }
            }
        }
        out.shuffle(&mut self.rng);
        out
    }

    fn place_one(&mut self, spec: &ObjectSpec) -> Result<(), PlacementError> {
        let mut found = None;
        if is_chair(&spec.category) {
            let candidates = self.chair_candidates(spec);
            found = self.try_candidates(spec, candidates);
        }
        if found.is_none() {
            let candidates = self.wall_candidates(spec);
            found = self.try_candidates(spec, candidates);
        }
        if found.is_none() {
            let candidates = self.interior_candidates(spec);
            found = self.try_candidates(spec, candidates);
        }
        match found {
            Some(obj) => {
                self.placed.push(obj);
                Ok(())
            }
            None => Err(PlacementError::Infeasible {
                name: spec.name.clone(),
            }),
        }
    }
}

/// Non-chairs by descending footprint area, then chairs; name breaks ties.
/// Chairs move up to just after the last table so smaller objects cannot
/// take the seats first.
fn placement_order(specs: &[ObjectSpec]) -> Vec<&ObjectSpec> {
    let mut order: Vec<&ObjectSpec> = specs.iter().collect();
    order.sort_by(|a, b| {
        is_chair(&a.category)
            .cmp(&is_chair(&b.category))
            .then_with(|| {
                b.dims
                    .footprint_area()
                    .partial_cmp(&a.dims.footprint_area())
                    .unwrap_or(Ordering::Equal)
            })
            .then_with(|| a.name.cmp(&b.name))
    });
    if let Some(last_table) = order.iter().rposition(|s| is_table(&s.category) && !is_chair(&s.category)) {
        let chairs: Vec<&ObjectSpec> = order.iter().copied().filter(|s| is_chair(&s.category)).collect();
        order.retain(|s| !is_chair(&s.category));
        let at = last_table + 1;
        order.splice(at..at, chairs);
    }
    order
}

/// Places `additions` around the fixed objects of `existing`.
///
/// Existing objects keep their exact positions and come first in the result.
pub fn place_incremental(
    existing: &SceneLayout,
    additions: &[ObjectSpec],
    config: &PlacerConfig,
) -> Result<SceneLayout, PlacementError> {
    config.check()?;
    let mut solver = Solver {
        bounds: existing.bounds,
        config,
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        placed: existing.objects.clone(),
    };
    for spec in placement_order(additions) {
        solver.place_one(spec)?;
    }
    SceneLayout::new(existing.room_type.clone(), existing.bounds, solver.placed)
        .map_err(|e| PlacementError::Output(e.to_string()))
}

pub fn place_specs(
    specs: &[ObjectSpec],
    room_type: &str,
    bounds: RoomBounds,
    config: &PlacerConfig,
) -> Result<SceneLayout, PlacementError> {
    place_incremental(&SceneLayout::empty(room_type, bounds), specs, config)
}

/// Solves a layout for retrieved instances. Objects appear in placement order.
pub fn place(
    instances: &[Instance],
    room_type: &str,
    bounds: RoomBounds,
    config: &PlacerConfig,
) -> Result<SceneLayout, PlacementError> {
    let specs: Vec<ObjectSpec> = instances.iter().map(ObjectSpec::from).collect();
    place_specs(&specs, room_type, bounds, config)
}

/// Serializes a solved layout as a model response of the given block kind.
pub fn layout_as_response(layout: &SceneLayout, kind: OutputBlockKind) -> Result<String, PlacementError> {
    serialize_block(kind, &layout_placements(layout)).map_err(|e| PlacementError::Output(e.to_string()))
}

pub fn place_as_response(
    instances: &[Instance],
    room_type: &str,
    bounds: RoomBounds,
    config: &PlacerConfig,
) -> Result<String, PlacementError> {
    layout_as_response(&place(instances, room_type, bounds, config)?, OutputBlockKind::TaskOutput)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::BBoxDims;

    fn spec(name: &str, category: &str, h: f64, w: f64, d: f64) -> ObjectSpec {
        ObjectSpec {
            name: name.into(),
            category: category.into(),
            dims: BBoxDims::new(h, w, d).unwrap(),
        }
    }

    fn bedroom() -> RoomBounds {
        RoomBounds::new(2.0, 2.0, 3.0).unwrap()
    }

    fn back_face_gap(obj: &PlacedObject, bounds: &RoomBounds) -> f64 {
        let half_d = obj.dims.d / 2.0;
        match obj.yaw as i64 {
            0 => obj.center.z - half_d + bounds.half_z,
            180 => bounds.half_z - (obj.center.z + half_d),
            90 => obj.center.x - half_d + bounds.half_x,
            270 => bounds.half_x - (obj.center.x + half_d),
            other => panic!("unexpected yaw {other}"),
        }
    }

    #[test]
    fn single_bed_goes_against_a_wall() {
        let config = PlacerConfig::with_seed(1);
        let layout = place_specs(&[spec("bed", "double bed", 1.0, 1.6, 2.0)], "Bedroom", bedroom(), &config).unwrap();
        let bed = &layout.objects[0];
        assert!([0.0, 90.0, 180.0, 270.0].contains(&bed.yaw));
        let gap = back_face_gap(bed, &layout.bounds);
        assert!(gap >= 0.0 && gap <= config.wall_margin + 1e-6, "gap {gap}");
        assert!(footprint_in_bounds(bed, &layout.bounds));
        assert_eq!(bed.center.y, 0.5);
    }

    #[test]
    fn chair_faces_the_table() {
        let specs = [spec("desk", "desk", 0.75, 1.2, 0.6), spec("chair", "office chair", 0.9, 0.5, 0.5)];
        let layout = place_specs(&specs, "Bedroom", bedroom(), &PlacerConfig::with_seed(3)).unwrap();
        let desk = layout.get("desk").unwrap();
        let chair = layout.get("chair").unwrap();
        let local = desk.world_to_local(Vec2::new(chair.center.x, chair.center.z));
        let reach = 0.5 + 0.1;
        assert!(local.x.abs() <= desk.dims.w / 2.0 + reach && local.z.abs() <= desk.dims.d / 2.0 + reach);
        let to_table = Vec2::new(desk.center.x - chair.center.x, desk.center.z - chair.center.z);
        let heading = chair.heading();
        let cos = (heading.x * to_table.x + heading.z * to_table.z) / to_table.x.hypot(to_table.z);
        assert!(cos >= std::f64::consts::FRAC_1_SQRT_2 - 1e-9, "cos {cos}");
    }

    #[test]
    fn deterministic_and_permutation_invariant() {
        let specs = vec![
            spec("bed", "bed", 1.0, 1.6, 2.0),
            spec("wardrobe", "wardrobe", 2.0, 1.2, 0.6),
            spec("nightstand_1", "nightstand", 0.5, 0.45, 0.4),
            spec("nightstand_2", "nightstand", 0.5, 0.45, 0.4),
            spec("desk", "desk", 0.75, 1.0, 0.5),
            spec("chair", "chair", 0.9, 0.45, 0.45),
        ];
        let config = PlacerConfig::with_seed(11);
        let a = place_specs(&specs, "Bedroom", bedroom(), &config).unwrap();
        let b = place_specs(&specs, "Bedroom", bedroom(), &config).unwrap();
        assert_eq!(a, b);
        let mut reversed = specs.clone();
        reversed.reverse();
        assert_eq!(a, place_specs(&reversed, "Bedroom", bedroom(), &config).unwrap());
    }

    #[test]
    fn coordinates_are_on_the_centimeter_grid() {
        let specs = vec![
            spec("bed", "bed", 1.05, 1.63, 2.07),
            spec("cabinet", "cabinet", 0.8, 0.77, 0.41),
        ];
        let layout = place_specs(&specs, "Bedroom", bedroom(), &PlacerConfig::with_seed(2)).unwrap();
        for obj in &layout.objects {
            for v in [obj.center.x, obj.center.y, obj.center.z] {
                assert_eq!(v, q_round(v), "{v}");
                assert_eq!(v, format!("{v:.2}").parse::<f64>().unwrap());
            }
        }
    }

    #[test]
    fn incremental_keeps_existing_objects() {
        let config = PlacerConfig::with_seed(5);
        let base = place_specs(&[spec("bed", "bed", 1.0, 1.6, 2.0)], "Bedroom", bedroom(), &config).unwrap();
        let grown = place_incremental(&base, &[spec("lamp", "floor lamp", 1.5, 0.3, 0.3)], &config).unwrap();
        assert_eq!(grown.objects.len(), 2);
        assert_eq!(grown.objects[0], base.objects[0]);
        assert_eq!(pair_overlap_ratio(&grown.objects[0], &grown.objects[1]), 0.0);
    }

    #[test]
    fn infeasible_object_errors() {
        let err = place_specs(&[spec("giant", "bed", 1.0, 9.0, 9.0)], "Bedroom", bedroom(), &PlacerConfig::default())
            .unwrap_err();
        assert_eq!(err, PlacementError::Infeasible { name: "giant".into() });
        let tall = place_specs(&[spec("tall", "shelf", 5.0, 0.5, 0.5)], "Bedroom", bedroom(), &PlacerConfig::default());
        assert!(tall.is_err());
    }

    #[test]
    fn crowded_wall_falls_back_to_interior() {
        // Twelve 0.9 m cubes cannot all fit along the walls of a 4 x 4 room.
        let specs: Vec<_> = (0..12).map(|i| spec(&format!("box_{i:02}"), "box", 0.5, 0.9, 0.9)).collect();
        let layout = place_specs(&specs, "Storage", bedroom(), &PlacerConfig::with_seed(4)).unwrap();
        assert_eq!(layout.objects.len(), 12);
        for (i, a) in layout.objects.iter().enumerate() {
            for b in &layout.objects[i + 1..] {
                assert_eq!(pair_overlap_ratio(a, b), 0.0);
            }
        }
    }
}
