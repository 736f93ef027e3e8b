//! Small built-in asset catalog and synthetic scene generators used by
//! tests, the acceptance suite and the `synth` CLI command.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::catalog::{AssetCatalog, AssetRecord, DesignRequest, RequestItem};
use crate::dataset::SceneRecord;
use crate::parser::ObjectSpec;
use crate::placer::{place_specs, PlacerConfig};
use crate::scene::{BBoxDims, RoomBounds};

const DEMO_ASSETS: &[(&str, &str, &str, f64, f64, f64)] = &[
    ("bed-001", "double bed with upholstered headboard", "double bed", 1.10, 1.80, 2.10),
    ("bed-002", "single bed wooden frame", "single bed", 0.90, 1.00, 2.00),
    ("nst-001", "wooden nightstand with drawer", "nightstand", 0.55, 0.45, 0.40),
    ("war-001", "tall wardrobe with two doors", "wardrobe", 2.00, 1.20, 0.60),
    ("drs-001", "low dresser with mirror", "dresser", 0.80, 1.20, 0.45),
    ("dsk-001", "writing desk", "desk", 0.75, 1.20, 0.60),
    ("chr-001", "office chair with wheels", "chair", 1.00, 0.60, 0.60),
    ("chr-002", "dining chair wooden", "dining chair", 0.90, 0.45, 0.50),
    ("arm-001", "armchair with cushion", "armchair", 0.85, 0.80, 0.80),
    ("tbl-001", "dining table rectangular", "dining table", 0.75, 1.60, 0.90),
    ("tbl-002", "round coffee table", "coffee table", 0.45, 0.90, 0.90),
    ("sof-001", "three seat sofa fabric", "sofa", 0.85, 2.10, 0.90),
    ("tvs-001", "tv stand low cabinet", "tv stand", 0.50, 1.60, 0.40),
    ("bks-001", "tall bookshelf with five shelves", "bookshelf", 2.00, 0.90, 0.35),
    ("lmp-001", "floor lamp with fabric shade", "floor lamp", 1.60, 0.40, 0.40),
    ("lmp-002", "pendant lamp", "pendant lamp", 0.60, 0.50, 0.50),
    ("pln-001", "potted plant", "plant", 1.20, 0.50, 0.50),
    ("cab-001", "sideboard cabinet", "cabinet", 0.85, 1.50, 0.45),
    ("rug-001", "rectangular rug", "rug", 0.02, 2.00, 1.40),
    ("ott-001", "small ottoman stool", "stool", 0.45, 0.50, 0.50),
];

pub fn demo_assets() -> Vec<AssetRecord> {
    DEMO_ASSETS
        .iter()
        .map(|&(id, description, category, h, w, d)| AssetRecord {
            id: id.to_string(),
            description: description.to_string(),
            category: category.to_string(),
            dims: BBoxDims::new(h, w, d).expect("demo dims are positive"),
            path: format!("assets/{id}.obj"),
        })
        .collect()
}

pub fn demo_catalog() -> AssetCatalog {
    AssetCatalog::from_records(demo_assets()).expect("demo catalog is valid")
}

/// The demo catalog as JSONL text, one record per line.
pub fn demo_catalog_jsonl() -> String {
    demo_assets()
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serialization is infallible") + "\n")
        .collect()
}

pub fn bedroom_request() -> DesignRequest {
    DesignRequest::new(
        "Bedroom",
        vec![
            RequestItem::one("double bed"),
            RequestItem::new(2, "nightstand"),
            RequestItem::one("wardrobe"),
            RequestItem::one("desk"),
            RequestItem::one("office chair"),
        ],
    )
}

pub fn living_room_request() -> DesignRequest {
    DesignRequest::new(
        "Living room",
        vec![
            RequestItem::one("three seat sofa"),
            RequestItem::one("coffee table"),
            RequestItem::one("tv stand"),
            RequestItem::one("floor lamp"),
            RequestItem::one("armchair"),
        ],
    )
}

const BEDROOM_EXTRAS: &[&str] = &[
    "nightstand",
    "wardrobe",
    "low dresser",
    "floor lamp",
    "potted plant",
    "tall bookshelf",
    "ottoman stool",
];

/// A bedroom request of 5 to 10 instances. About half include a desk with
/// an office chair.
pub fn random_bedroom_request(index: usize, seed: u64) -> DesignRequest {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0xa076_1d64_78bd_642f) ^ index as u64);
    let total = rng.random_range(5..=10u32);
    let mut items = vec![RequestItem::one(if rng.random_bool(0.5) { "double bed" } else { "single bed" })];
    if rng.random_bool(0.5) {
        items.push(RequestItem::one("writing desk"));
        items.push(RequestItem::one("office chair"));
    }
    let mut left = total - items.len() as u32;
    let mut extras: Vec<&str> = BEDROOM_EXTRAS.to_vec();
    extras.shuffle(&mut rng);
    for description in extras {
        if left == 0 {
            break;
        }
        let quantity = if description == "nightstand" { left.min(2) } else { 1 };
        items.push(RequestItem::new(quantity, description));
        left -= quantity;
    }
    if left > 0 {
        let stools = items.iter_mut().find(|i| i.description == "ottoman stool").expect("all extras used");
        stools.quantity += left;
    }
    DesignRequest::new("Bedroom", items)
}

fn spec(asset: &AssetRecord, name: String) -> ObjectSpec {
    ObjectSpec {
        name,
        category: asset.category.clone(),
        dims: asset.dims,
    }
}

/// A bedroom scene of six objects, three essential (bed, lamp, chair) and
/// three not, placed without overlap by the heuristic placer.
pub fn six_object_scene(index: usize, seed: u64) -> SceneRecord {
    let assets = demo_assets();
    let by_id = |id: &str| assets.iter().find(|a| a.id == id).expect("demo asset");
    let specs = vec![
        spec(by_id("bed-002"), "single_bed".into()),
        spec(by_id("lmp-001"), "floor_lamp".into()),
        spec(by_id("chr-001"), "office_chair".into()),
        spec(by_id("nst-001"), "nightstand".into()),
        spec(by_id("drs-001"), "dresser".into()),
        spec(by_id("pln-001"), "plant".into()),
    ];
    let config = PlacerConfig::with_seed(seed ^ index as u64);
    let layout = place_specs(&specs, "Bedroom", RoomBounds::new(2.0, 2.0, 3.0).expect("bounds"), &config)
        .expect("six-object bedroom is feasible");
    SceneRecord {
        scene_id: format!("synthetic-{index:05}"),
        room_type: "Bedroom".into(),
        objects: layout.objects,
    }
}

/// Scenes with 1 to 9 objects drawn from the demo catalog.
pub fn random_scene(index: usize, seed: u64) -> SceneRecord {
    let assets = demo_assets();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ index as u64);
    let (room_type, bounds) = if rng.random_bool(0.5) {
        ("Bedroom", RoomBounds::default_for_room_type("Bedroom"))
    } else {
        ("Living room", RoomBounds::default_for_room_type("Living room"))
    };
    let count = rng.random_range(1..=9usize);
    let mut picks: Vec<&AssetRecord> = assets.iter().filter(|a| a.dims.w <= 2.0 && a.dims.d <= 2.0).collect();
    picks.shuffle(&mut rng);
    let mut specs: Vec<ObjectSpec> = picks
        .iter()
        .take(count)
        .map(|a| spec(a, a.category.replace(' ', "_")))
        .collect();
    let config = PlacerConfig::with_seed(rng.random());
    // Drop objects from the end until the room fits the rest.
    let objects = loop {
        match place_specs(&specs, room_type, bounds, &config) {
            Ok(layout) => break layout.objects,
            Err(_) if specs.len() > 1 => {
                specs.pop();
            }
            Err(e) => panic!("single demo object must fit: {e}"),
        }
    };
    SceneRecord {
        scene_id: format!("random-{index:05}"),
        room_type: room_type.into(),
        objects,
    }
}

pub fn scenes_jsonl(scenes: &[SceneRecord]) -> String {
    scenes.iter().map(|s| crate::dataset::scene_line(s) + "\n").collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::BuilderConfig;

    #[test]
    fn demo_catalog_round_trips() {
        let text = demo_catalog_jsonl();
        let catalog = AssetCatalog::load(text.as_bytes()).unwrap();
        assert_eq!(catalog.len(), DEMO_ASSETS.len());
        assert_eq!(catalog.retrieve("a tall bookshelf").unwrap().id, "bks-001");
        assert_eq!(catalog.retrieve("double bed").unwrap().id, "bed-001");
        assert!(catalog.retrieve_many(&bedroom_request().items).is_ok());
        assert!(catalog.retrieve_many(&living_room_request().items).is_ok());
    }

    #[test]
    fn bedroom_requests_have_five_to_ten_instances() {
        let catalog = demo_catalog();
        for i in 0..50 {
            let request = random_bedroom_request(i, 3);
            let n = request.instance_count();
            assert!((5..=10).contains(&n), "{n}");
            catalog.retrieve_many(&request.items).unwrap();
            assert_eq!(request, random_bedroom_request(i, 3));
        }
    }

    #[test]
    fn six_object_scene_has_three_eligible() {
        let config = BuilderConfig::default();
        let scene = six_object_scene(3, 11);
        scene.validate().unwrap();
        assert_eq!(scene.objects.len(), 6);
        let eligible = scene.objects.iter().filter(|o| !config.is_essential(&o.category)).count();
        assert_eq!(eligible, 3);
    }

    #[test]
    fn random_scenes_are_deterministic() {
        assert_eq!(random_scene(4, 1), random_scene(4, 1));
    }
}
