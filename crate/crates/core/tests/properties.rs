use std::collections::BTreeSet;
use std::sync::Arc;

use proptest::prelude::*;

use llplace_core::backend::{CompletionBackend, CompletionRequest, HeuristicBackend, TurnContext};
use llplace_core::catalog::{AssetRecord, Instance};
use llplace_core::dataset::{build_pairs, BuilderConfig, PairKind, SceneRecord};
use llplace_core::metrics::scene_oor;
use llplace_core::parser::{
    extract_block, join_placements, layout_placements, parse_output, serialize_block, ObjectSpec,
};
use llplace_core::placer::{is_chair, place_specs, PlacerConfig};
use llplace_core::scene::{
    footprint_in_bounds, footprint_polygon, pair_intersection_volume, pair_overlap_ratio, polygon_area,
};
use llplace_core::session::{create_session, DesignerSession, EditRequest};
use llplace_core::synthetic::demo_catalog;
use llplace_core::{
    BBoxDims, DesignRequest, OutputBlockKind, PlacedObject, Point3, PromptTemplates, RequestItem, RoomBounds,
    SceneLayout,
};

fn object(name: String) -> impl Strategy<Value = PlacedObject> {
    (
        (0.2f64..3.0, 0.2f64..3.0, 0.2f64..3.0),
        (-3.0f64..3.0, 0.0f64..3.0, -3.0f64..3.0),
        0.0f64..360.0,
    )
        .prop_map(move |((h, w, d), (x, y, z), yaw)| {
            PlacedObject::new(
                name.clone(),
                "thing",
                BBoxDims::new(h, w, d).unwrap(),
                Point3::new(x, y, z).unwrap(),
                yaw,
            )
            .unwrap()
        })
}

fn pair() -> impl Strategy<Value = (PlacedObject, PlacedObject)> {
    (object("a".into()), object("b".into()))
}

fn shifted(o: &PlacedObject, dx: f64, dy: f64, dz: f64) -> PlacedObject {
    let c = o.center;
    PlacedObject::new(
        o.name.clone(),
        o.category.clone(),
        o.dims,
        Point3::new(c.x + dx, c.y + dy, c.z + dz).unwrap(),
        o.yaw,
    )
    .unwrap()
}

const CATEGORIES: [&str; 8] = ["bed", "wardrobe", "nightstand", "desk", "chair", "dresser", "bookshelf", "plant"];

fn specs(max: usize) -> impl Strategy<Value = Vec<ObjectSpec>> {
    prop::collection::vec((0usize..CATEGORIES.len(), 0.3f64..1.2, 0.3f64..1.2, 0.3f64..2.0), 1..=max).prop_map(
        |items| {
            items
                .into_iter()
                .enumerate()
                .map(|(i, (c, w, d, h))| ObjectSpec {
                    name: format!("{}_{i}", CATEGORIES[c]),
                    category: CATEGORIES[c].to_string(),
                    dims: BBoxDims::new(h, w, d).unwrap(),
                })
                .collect()
        },
    )
}

fn bounds() -> RoomBounds {
    RoomBounds::new(2.5, 2.5, 3.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn overlap_ratio_is_symmetric_and_bounded((a, b) in pair()) {
        let ab = pair_overlap_ratio(&a, &b);
        let ba = pair_overlap_ratio(&b, &a);
        prop_assert!((ab - ba).abs() <= 1e-9);
        prop_assert!((0.0..=1.0).contains(&ab));
        let vol = pair_intersection_volume(&a, &b);
        prop_assert!(vol <= a.volume().min(b.volume()) * (1.0 + 1e-9));
    }

    #[test]
    fn self_overlap_is_one(a in object("a".into())) {
        prop_assert_eq!(pair_overlap_ratio(&a, &a.clone()), 1.0);
    }

    #[test]
    fn far_apart_is_zero((a, b) in pair()) {
        prop_assert_eq!(pair_overlap_ratio(&a, &shifted(&b, 20.0, 0.0, 0.0)), 0.0);
        prop_assert_eq!(pair_overlap_ratio(&a, &shifted(&b, 0.0, 10.0, 0.0)), 0.0);
    }

    #[test]
    fn joint_translation_preserves_volume((a, b) in pair(), dx in -2.0f64..2.0, dz in -2.0f64..2.0) {
        let before = pair_intersection_volume(&a, &b);
        let after = pair_intersection_volume(&shifted(&a, dx, 0.5, dz), &shifted(&b, dx, 0.5, dz));
        prop_assert!((before - after).abs() <= 1e-9 * (1.0 + a.volume().max(b.volume())));
    }

    #[test]
    fn footprint_area_is_width_times_depth(a in object("a".into())) {
        let poly = footprint_polygon(&a);
        prop_assert!((polygon_area(&poly) - a.dims.w * a.dims.d).abs() <= 1e-9);
    }

    #[test]
    fn serialized_layout_round_trips(objects in prop::collection::vec(((-3.0f64..3.0, 0.0f64..3.0, -3.0f64..3.0), 0.0f64..360.0), 0..12)) {
        let placed: Vec<PlacedObject> = objects
            .iter()
            .enumerate()
            .map(|(i, ((x, y, z), yaw))| {
                PlacedObject::new(format!("obj_{i}"), "thing", BBoxDims::new(1.0, 1.0, 1.0).unwrap(), Point3::new(*x, *y, *z).unwrap(), *yaw).unwrap()
            })
            .collect();
        let layout = SceneLayout::new("Bedroom", bounds(), placed).unwrap();
        let text = serialize_block(OutputBlockKind::TaskOutput, &layout_placements(&layout)).unwrap();
        let names: BTreeSet<String> = layout.names().map(String::from).collect();
        let parsed = parse_output(&text, OutputBlockKind::TaskOutput, &names).unwrap();
        prop_assert_eq!(parsed.len(), layout.objects.len());
        for (p, o) in parsed.iter().zip(&layout.objects) {
            prop_assert_eq!(&p.object, &o.name);
            let r2 = |v: f64| (v * 100.0).round() / 100.0;
            prop_assert!((p.coordinates.x - r2(o.center.x)).abs() < 1e-9);
            prop_assert!((p.coordinates.y - r2(o.center.y)).abs() < 1e-9);
            prop_assert!((p.coordinates.z - r2(o.center.z)).abs() < 1e-9);
            let da = (p.angle - r2(o.yaw)).rem_euclid(360.0);
            prop_assert!(da < 1e-9 || (360.0 - da) < 1e-9);
        }
    }

    #[test]
    fn last_block_wins(prefix in "[^\\[]{0,40}", noise in "[a-z ]{0,20}") {
        let block = "[Task Output][][/Task Output]";
        let text = format!("{prefix}[Task Output]{noise}{block}");
        prop_assert_eq!(extract_block(&text, OutputBlockKind::TaskOutput), Ok("[]"));
    }

    #[test]
    fn placer_invariants(specs in specs(7), seed in 0u64..1000) {
        let config = PlacerConfig::with_seed(seed);
        let Ok(layout) = place_specs(&specs, "Bedroom", bounds(), &config) else {
            return Ok(());
        };
        prop_assert_eq!(layout.objects.len(), specs.len());
        prop_assert_eq!(scene_oor(&layout).max, 0.0);
        for o in &layout.objects {
            prop_assert!(footprint_in_bounds(o, &layout.bounds));
            if !is_chair(&o.category) {
                prop_assert_eq!(o.yaw.rem_euclid(90.0), 0.0);
            }
        }
        prop_assert_eq!(&layout, &place_specs(&specs, "Bedroom", bounds(), &config).unwrap());
        let mut reversed = specs.clone();
        reversed.reverse();
        prop_assert_eq!(&layout, &place_specs(&reversed, "Bedroom", bounds(), &config).unwrap());
    }

    #[test]
    fn heuristic_response_always_parses(specs in specs(6), seed in 0u64..1000) {
        let mut backend = HeuristicBackend::new(PlacerConfig::with_seed(seed));
        let request = CompletionRequest {
            instruction: "place",
            history: &[],
            context: TurnContext::Generation { room_type: "Bedroom", bounds: bounds(), objects: &specs },
        };
        let Ok(text) = backend.complete(&request) else {
            return Ok(());
        };
        let names: BTreeSet<String> = specs.iter().map(|s| s.name.clone()).collect();
        let placements = parse_output(&text, OutputBlockKind::TaskOutput, &names).unwrap();
        let joined = join_placements(&specs, &placements, "Bedroom", bounds()).unwrap();
        let direct = place_specs(&specs, "Bedroom", bounds(), &PlacerConfig::with_seed(seed)).unwrap();
        for o in &direct.objects {
            prop_assert_eq!(Some(o), joined.get(&o.name));
        }
    }

    #[test]
    fn dataset_pair_invariants(specs in specs(9), seed in 0u64..10_000) {
        let Ok(layout) = place_specs(&specs, "Bedroom", bounds(), &PlacerConfig::with_seed(1)) else {
            return Ok(());
        };
        let scene = SceneRecord { scene_id: format!("p{seed}"), room_type: "Bedroom".into(), objects: layout.objects };
        let config = BuilderConfig::with_seed(seed);
        let pairs = build_pairs(&scene, &PromptTemplates::builtin(), &config).unwrap();
        let full: BTreeSet<String> = scene.objects.iter().map(|o| o.name.clone()).collect();
        prop_assert_eq!(pairs.iter().filter(|p| p.kind == PairKind::Generation).count(), 1);
        for p in &pairs {
            prop_assert!(p.input.ends_with(&config.turn_end_token));
            for name in &p.selected {
                let obj = scene.objects.iter().find(|o| &o.name == name).unwrap();
                prop_assert!(!config.is_essential(&obj.category));
            }
            let selected: BTreeSet<String> = p.selected.iter().cloned().collect();
            match p.kind {
                PairKind::Generation => {
                    let names: BTreeSet<String> = if pairs.len() > 1 {
                        let s: BTreeSet<String> = pairs[1].selected.iter().cloned().collect();
                        full.difference(&s).cloned().collect()
                    } else {
                        full.clone()
                    };
                    prop_assert!(parse_output(&p.label, OutputBlockKind::TaskOutput, &names).is_ok());
                }
                PairKind::AddEdit => {
                    prop_assert!(parse_output(&p.label, OutputBlockKind::AddedOutput, &full).is_ok());
                }
                PairKind::RemoveEdit => {
                    let survivors: BTreeSet<String> = full.difference(&selected).cloned().collect();
                    prop_assert!(parse_output(&p.label, OutputBlockKind::DeletedOutput, &survivors).is_ok());
                }
            }
            if scene.objects.len() <= config.min_objects_for_edit {
                prop_assert_eq!(p.kind, PairKind::Generation);
            }
        }
    }
}

fn session_with(items: Vec<RequestItem>, seed: u64) -> DesignerSession {
    let catalog = demo_catalog();
    let state = create_session(
        DesignRequest::new("Living room", items),
        &catalog,
        RoomBounds::default_for_room_type("Living room"),
    )
    .unwrap();
    DesignerSession::new(
        state,
        Box::new(HeuristicBackend::new(PlacerConfig::with_seed(seed))),
        Arc::new(PromptTemplates::builtin()),
    )
}

const ADDABLE: [&str; 5] = ["potted plant", "tall bookshelf", "ottoman stool", "floor lamp", "sideboard cabinet"];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn edits_change_counts_exactly(seed in 0u64..500, picks in prop::collection::vec(0usize..ADDABLE.len(), 1..3)) {
        let catalog = demo_catalog();
        let mut s = session_with(
            vec![RequestItem::one("three seat sofa"), RequestItem::one("coffee table"), RequestItem::one("tv stand")],
            seed,
        );
        let before = s.run_generation().unwrap();
        let items: Vec<RequestItem> = picks.iter().map(|&i| RequestItem::one(ADDABLE[i])).collect();
        let Ok(added) = s.run_edit(&EditRequest::Add(items.clone()), &catalog) else {
            return Ok(());
        };
        prop_assert_eq!(added.objects.len(), before.objects.len() + items.len());
        for o in &before.objects {
            prop_assert_eq!(Some(o), added.get(&o.name));
        }
        let removed = s.run_edit(&EditRequest::Remove(vec![RequestItem::one("tv stand")]), &catalog).unwrap();
        prop_assert_eq!(removed.objects.len(), added.objects.len() - 1);
        prop_assert!(removed.get("tv_stand").is_none());
        for o in &removed.objects {
            prop_assert_eq!(Some(o), added.get(&o.name));
        }
    }
}

#[test]
fn heuristic_pipeline_is_deterministic() {
    let run = || {
        let mut s = session_with(vec![RequestItem::one("sofa"), RequestItem::new(2, "armchair")], 9);
        let layout = s.run_generation().unwrap();
        (layout.to_json_pretty(), s.into_state().history)
    };
    assert_eq!(run(), run());
}

#[test]
fn instance_specs_keep_asset_dims() {
    let asset = AssetRecord {
        id: "x".into(),
        description: "x".into(),
        category: "chair".into(),
        dims: BBoxDims::new(1.0, 0.5, 0.5).unwrap(),
        path: String::new(),
    };
    let spec = ObjectSpec::from(&Instance { name: "x_1".into(), asset: asset.clone() });
    assert_eq!((spec.name.as_str(), spec.dims), ("x_1", asset.dims));
}
