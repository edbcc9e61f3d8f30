//! Brute-force reference computations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use valsched::pipeline::{InputEdge, Pipeline, Region, Stage};
use valsched::schedule::{candidate_actions, apply, Loop, LoopPart, ScheduleSpace, ScheduleState, Site};
use valsched::text::parse_pipeline;

pub fn assets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets")
}

pub fn load_dir(sub: &str) -> Vec<Pipeline> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(assets().join(sub))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "pipe"))
        .collect();
    files.sort();
    files
        .iter()
        .map(|f| parse_pipeline(&std::fs::read_to_string(f).unwrap()).unwrap())
        .collect()
}

pub fn load(sub: &str, name: &str) -> Pipeline {
    parse_pipeline(&std::fs::read_to_string(assets().join(sub).join(name)).unwrap()).unwrap()
}

pub fn spaces(sub: &str) -> Vec<Arc<ScheduleSpace>> {
    load_dir(sub).into_iter().map(|p| ScheduleSpace::new(p).unwrap()).collect()
}

/// Every point of a box of extents, row-major.
pub fn box_points(extents: &[u64]) -> Vec<Vec<u64>> {
    let mut pts = vec![Vec::new()];
    for &e in extents {
        pts = pts
            .into_iter()
            .flat_map(|p| {
                (0..e).map(move |i| {
                    let mut q = p.clone();
                    q.push(i);
                    q
                })
            })
            .collect();
    }
    pts
}

pub fn region_points(r: &Region) -> BTreeSet<Vec<u64>> {
    box_points(&r.extents())
        .into_iter()
        .map(|p| p.iter().zip(&r.0).map(|(x, iv)| x + iv.lo).collect())
        .collect()
}

/// Producer points read by one consumer point, straight from the access maps.
pub fn point_deps(edge: &InputEdge, point: &[u64]) -> Vec<Vec<u64>> {
    let mut out = vec![Vec::new()];
    for m in &edge.access {
        let base = m.consumer_dim.map_or(0, |c| m.stride * point[c]);
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..m.window).map(move |w| {
                    let mut q = p.clone();
                    q.push(base + w);
                    q
                })
            })
            .collect();
    }
    out
}

pub fn deps_of(edge: &InputEdge, points: &[Vec<u64>]) -> BTreeSet<Vec<u64>> {
    points.iter().flat_map(|p| point_deps(edge, p)).collect()
}

/// Host iteration points (pure + reduction coordinates) visited while loops
/// `0..=level` hold the index tuple `fixed`, found by walking the whole nest.
pub fn host_points_at(host: &Stage, loops: &[Loop], level: usize, fixed: &[u64]) -> Vec<Vec<u64>> {
    let extents: Vec<u64> = loops.iter().map(|l| l.extent).collect();
    let mut out = Vec::new();
    for idx in box_points(&extents) {
        if idx[..=level] != *fixed {
            continue;
        }
        let mut coord = vec![0u64; host.num_all_dims()];
        for (l, &i) in loops.iter().zip(&idx) {
            coord[l.dim] += match l.part {
                LoopPart::Whole | LoopPart::Inner => i,
                LoopPart::Outer => {
                    let inner = loops
                        .iter()
                        .find(|m| m.dim == l.dim && m.part == LoopPart::Inner)
                        .unwrap();
                    i * inner.extent
                }
            };
        }
        out.push(coord);
    }
    out
}

/// Every complete schedule reachable by candidate actions.
pub fn all_complete(space: &Arc<ScheduleSpace>) -> Vec<ScheduleState> {
    let mut out = Vec::new();
    let mut stack = vec![ScheduleState::initial(space)];
    while let Some(s) = stack.pop() {
        if s.is_complete() {
            out.push(s);
            continue;
        }
        for a in candidate_actions(&s).unwrap() {
            stack.push(apply(&s, &a).unwrap());
        }
    }
    out
}

/// Independent count of the candidate grid for the next stage of `s`.
pub fn grid_count(s: &ScheduleState) -> usize {
    let idx = s.next_stage().unwrap();
    let p = s.pipeline();
    let stage = &p.stages[idx];
    let np = stage.dims.len();
    let nr = stage.reduction_dims.len();

    // Loop descriptors: (extent, reduction, dim tag). Splits on the last two pure dims.
    let first_split = np.saturating_sub(2);
    let mut split_sets: Vec<Vec<(usize, u64)>> = vec![vec![]];
    for d in first_split..np {
        let e = stage.dims[d].extent;
        let mut next = Vec::new();
        for set in &split_sets {
            next.push(set.clone());
            for f in [8u64, 32] {
                if f < e && e.is_multiple_of(f) {
                    let mut s2 = set.clone();
                    s2.push((d, f));
                    next.push(s2);
                }
            }
        }
        split_sets = next;
    }

    let mut structural = 0;
    for set in &split_sets {
        // Pure loops in dim order, an outer/inner pair for split dims.
        let mut pure: Vec<(String, u64)> = Vec::new();
        for (d, dim) in stage.dims.iter().enumerate() {
            match set.iter().find(|(sd, _)| *sd == d) {
                Some((_, f)) => {
                    pure.push((format!("{}o", dim.name), dim.extent / f));
                    pure.push((format!("{}i", dim.name), *f));
                }
                None => pure.push((dim.name.clone(), dim.extent)),
            }
        }
        let red: Vec<(String, u64)> = stage.reduction_dims.iter().map(|d| (d.name.clone(), d.extent)).collect();
        let mut bases = vec![[pure.clone(), red.clone()].concat()];
        if nr > 0 {
            bases.push([red.clone(), pure.clone()].concat());
        }
        let mut orders: BTreeSet<Vec<(String, u64)>> = BTreeSet::new();
        for b in bases {
            orders.insert(b.clone());
            if b.len() >= 2 {
                let mut sw = b.clone();
                let n = sw.len();
                sw.swap(n - 2, n - 1);
                orders.insert(sw);
            }
        }
        let is_red = |name: &str| stage.reduction_dims.iter().any(|d| d.name == name);
        for o in &orders {
            let (iname, iext) = o.last().unwrap();
            let (oname, _) = &o[0];
            let vec_ok = [1u64, 8]
                .iter()
                .filter(|&&w| w == 1 || (!is_red(iname) && iext % w == 0))
                .count();
            let par_ok = if is_red(oname) { 1 } else { 2 };
            structural += vec_ok * par_ok;
        }
    }

    // Placements: root, plus two per admissible anchor level.
    let mut placements = 1;
    if let Some(h) = s.space().host_of(idx) {
        let (hd, hloops) = s.decision_for(h).unwrap();
        if hd.compute_at == Site::Root {
            for level in 0..=2usize.min(hloops.len() - 1) {
                let fixed = &hloops[..=level];
                let free = &hloops[level + 1..];
                let pure_prefix = fixed.iter().all(|l| !l.reduction);
                let boxy = !fixed.iter().any(|l| {
                    l.part == LoopPart::Inner && free.iter().any(|m| m.dim == l.dim && m.part == LoopPart::Outer)
                });
                if pure_prefix && boxy {
                    placements += 2;
                }
            }
        }
    }
    structural * placements
}

/// Compares `infer_bounds` on a complete state with per-point dependence sets
/// collected by walking every host iteration.
pub fn check_bounds(s: &ScheduleState) -> Result<(), String> {
    use std::collections::BTreeMap;
    let p = s.pipeline();
    let table = valsched::cost::infer_bounds(s).map_err(|e| e.to_string())?;
    for (idx, stage) in p.stages.iter().enumerate() {
        let b = &table.stages[idx];
        let (d, _) = s.decision_for(idx).unwrap();
        match &d.compute_at {
            Site::Root => {
                if b.region != stage.output_region() || b.invocations != 1 {
                    return Err(format!("{}: root stage bounds {:?}", stage.name, b));
                }
                let have = region_points(&b.region);
                for (ci, ei) in p.consumers_of(&stage.name) {
                    let c = &p.stages[ci];
                    let need = deps_of(&c.inputs[ei], &box_points(&c.domain().extents()));
                    if !need.is_subset(&have) {
                        return Err(format!("{}: region misses reads of {}", stage.name, c.name));
                    }
                }
            }
            Site::At { consumer, level } => {
                let hi = p.stage_index(consumer).unwrap();
                let host = &p.stages[hi];
                let (_, hloops) = s.decision_for(hi).unwrap();
                let ei = host.inputs.iter().position(|e| e.producer == stage.name).unwrap();
                let edge = &host.inputs[ei];
                let extents: Vec<u64> = hloops.iter().map(|l| l.extent).collect();
                let mut buckets: BTreeMap<Vec<u64>, Vec<Vec<u64>>> = BTreeMap::new();
                for idx_tuple in box_points(&extents[..=*level]) {
                    buckets.insert(idx_tuple, Vec::new());
                }
                for key in buckets.keys().cloned().collect::<Vec<_>>() {
                    let pts = host_points_at(host, hloops, *level, &key);
                    buckets.insert(key, pts);
                }
                if b.invocations != buckets.len() as u64 {
                    return Err(format!("{}: {} invocations, walk found {}", stage.name, b.invocations, buckets.len()));
                }
                let first = buckets.values().next().unwrap();
                let want = deps_of(edge, first);
                if region_points(&b.region) != want {
                    return Err(format!("{}: region {} differs from first-invocation reads", stage.name, b.region));
                }
                let mut computed = 0u64;
                let mut union = BTreeSet::new();
                for pts in buckets.values() {
                    let deps = deps_of(edge, pts);
                    computed += deps.len() as u64 * stage.reduction_points();
                    union.extend(deps);
                }
                if computed != b.computed_points() {
                    return Err(format!(
                        "{}: computed {} points, walk says {}",
                        stage.name,
                        b.computed_points(),
                        computed
                    ));
                }
                if union != region_points(&stage.output_region()) {
                    return Err(format!("{}: invocations do not cover the buffer", stage.name));
                }
            }
        }
    }
    Ok(())
}
