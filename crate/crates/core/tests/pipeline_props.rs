//! Properties of footprints, ordering and the text format.

mod common;

use std::collections::HashMap;

use common::*;
use proptest::prelude::*;
use valsched::pipeline::{
    footprint_region, footprint_size, topological_order, validate, AccessMap, Dim, ExternalBuffer, InputEdge,
    Interval, Pipeline, Region, Stage,
};
use valsched::text::parse_pipeline;

fn arb_map(consumer_rank: usize) -> impl Strategy<Value = AccessMap> {
    (proptest::option::of(0..consumer_rank), 1u64..4, 1u64..5).prop_map(|(d, s, w)| AccessMap {
        consumer_dim: d,
        stride: if d.is_some() { s } else { 0 },
        window: w,
    })
}

fn arb_case() -> impl Strategy<Value = (InputEdge, Region)> {
    (1usize..4).prop_flat_map(|rank| {
        let maps = proptest::collection::vec(arb_map(rank), 1..4);
        let region = proptest::collection::vec((0u64..4, 1u64..4), rank)
            .prop_map(|v| Region(v.into_iter().map(|(lo, len)| Interval::new(lo, lo + len)).collect()));
        (maps, region).prop_map(|(access, r)| {
            (
                InputEdge {
                    producer: "p".into(),
                    access,
                },
                r,
            )
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn footprint_matches_point_walk((edge, region) in arb_case()) {
        let fp = footprint_region(&edge, &region).unwrap();
        let walked = deps_of(&edge, &region_points(&region).into_iter().collect::<Vec<_>>());
        prop_assert_eq!(footprint_size(&edge, &region.extents()), fp.size());
        let dims: Vec<usize> = edge.access.iter().filter_map(|m| m.consumer_dim).collect();
        let distinct = dims.iter().enumerate().all(|(i, d)| !dims[..i].contains(d));
        let contiguous = edge.access.iter().all(|m| m.consumer_dim.is_none() || m.window >= m.stride);
        if distinct && contiguous {
            prop_assert_eq!(region_points(&fp), walked);
        } else {
            // Gapped windows or a shared consumer dim: the region is the bounding box of the reads.
            let pts = region_points(&fp);
            prop_assert!(walked.is_subset(&pts));
            for (k, iv) in fp.0.iter().enumerate() {
                prop_assert!(walked.iter().any(|p| p[k] == iv.lo));
                prop_assert!(walked.iter().any(|p| p[k] == iv.hi - 1));
            }
        }
    }
}

/// A random DAG: stage `i` reads a random subset of earlier stages (or the
/// input buffer), pointwise in both dims.
fn arb_dag() -> impl Strategy<Value = Pipeline> {
    (1usize..7)
        .prop_flat_map(|n| proptest::collection::vec(proptest::collection::vec(any::<bool>(), n), n))
        .prop_map(|mut edges| {
            let n = edges.len();
            // The last stage also reads every stage nobody else reads, so it is the only output.
            for j in 0..n.saturating_sub(1) {
                if !(j + 1..n).any(|i| edges[i][j]) {
                    edges[n - 1][j] = true;
                }
            }
            let mut stages = Vec::new();
            for i in 0..n {
                let mut producers: Vec<String> = (0..i).filter(|&j| edges[i][j]).map(|j| format!("s{j}")).collect();
                if producers.is_empty() {
                    producers.push("input".into());
                }
                stages.push(Stage {
                    name: format!("s{i}"),
                    dims: vec![Dim::new("y", 8), Dim::new("x", 8)],
                    reduction_dims: vec![],
                    flops_per_point: 1 + i as u64,
                    inputs: producers
                        .into_iter()
                        .map(|p| InputEdge {
                            producer: p,
                            access: vec![AccessMap::identity(0), AccessMap::identity(1)],
                        })
                        .collect(),
                    output: false,
                });
            }
            // Every stage nobody reads is an output.
            let read: Vec<bool> = (0..n).map(|j| (j + 1..n).any(|i| edges[i][j])).collect();
            for (s, r) in stages.iter_mut().zip(read) {
                s.output = !r;
            }
            Pipeline {
                name: "dag".into(),
                buffers: vec![ExternalBuffer {
                    name: "input".into(),
                    dims: vec![8, 8],
                    element_size: 4,
                }],
                stages,
            }
        })
}

fn is_topological(p: &Pipeline, order: &[String]) -> bool {
    let pos: HashMap<&str, usize> = order.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    order.len() == p.stages.len()
        && p.stages.iter().all(|s| {
            s.inputs
                .iter()
                .all(|e| pos.get(e.producer.as_str()).is_none_or(|&q| q < pos[s.name.as_str()]))
        })
}

proptest! {
    #[test]
    fn topological_order_survives_permutation(p in arb_dag(), seed in any::<u64>()) {
        prop_assert!(validate(&p).violations.is_empty(), "{}", validate(&p));
        let order = topological_order(&p).unwrap();
        prop_assert!(is_topological(&p, &order));
        let mut shuffled = p.clone();
        valsched::rng::SearchRng::new(seed).shuffle(&mut shuffled.stages);
        let order2 = topological_order(&shuffled).unwrap();
        prop_assert!(is_topological(&shuffled, &order2));
        let mut a = order.clone();
        let mut b = order2.clone();
        a.sort();
        b.sort();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn text_round_trip(p in arb_dag()) {
        let text = p.to_string();
        prop_assert_eq!(parse_pipeline(&text).unwrap(), p);
    }
}

#[test]
fn assets_round_trip_through_text() {
    for sub in ["toys", "train", "large", "invalid"] {
        for p in load_dir(sub) {
            assert_eq!(parse_pipeline(&p.to_string()).unwrap(), p);
        }
    }
}

#[test]
fn out_of_bounds_asset_names_the_edge() {
    let p = load("invalid", "out_of_bounds.pipe");
    let report = validate(&p).to_string();
    assert!(report.contains("a -> b"), "{report}");
}
