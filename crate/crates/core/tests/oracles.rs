use std::collections::HashMap;

use gridrisk_core::cascade::{CascadeSample, StageModel};
use gridrisk_core::grid_sim::GridCascade;
use gridrisk_core::matpower::{parse_matpower, IEEE57};
use gridrisk_core::network::{Branch, BranchId, BranchKind, Bus, BusId, Generator, Load, Network};
use gridrisk_core::redispatch::{redispatch, LpWeights};
use gridrisk_core::sampling::tiny_samples;
use gridrisk_core::tiny::{chain_fixture, enumerate_paths, TinySystem};

fn path_of(system: &TinySystem, s: &CascadeSample) -> Vec<u32> {
    let mut masks = vec![0u32; s.stages as usize];
    for e in &s.events {
        let k = system.ids.iter().position(|&id| id == e.branch).unwrap();
        masks[e.stage as usize] |= 1 << k;
    }
    masks
}

#[test]
fn sampled_paths_follow_exact_probabilities() {
    let (system, params) = chain_fixture();
    let exact: HashMap<Vec<u32>, f64> =
        enumerate_paths(&system, &params).unwrap().into_iter().map(|p| (p.stages, p.probability)).collect();
    let n = 40_000;
    let set = tiny_samples(&system, &params, 3, 0..n).unwrap();
    let mut counts: HashMap<Vec<u32>, u64> = HashMap::new();
    for s in &set.samples {
        *counts.entry(path_of(&system, s)).or_default() += 1;
    }
    for path in counts.keys() {
        assert!(exact.contains_key(path), "sampled path {path:?} has no exact counterpart");
    }
    for (path, &p) in &exact {
        let freq = *counts.get(path).unwrap_or(&0) as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((freq - p).abs() <= 5.0 * se + 1e-4, "path {path:?}: frequency {freq} vs {p}");
    }
}

#[test]
fn sample_shed_matches_its_path() {
    let (system, params) = chain_fixture();
    let set = tiny_samples(&system, &params, 4, 0..2000).unwrap();
    for s in &set.samples {
        let mask = path_of(&system, s).iter().fold(0, |m, x| m | x);
        assert_eq!(s.shed, (system.shed)(mask));
        s.check(system.stage_cap).unwrap();
    }
}

fn bus(i: u32) -> Bus {
    Bus { id: BusId(i), name: String::new() }
}

fn line(id: u32, f: u32, t: u32, limit: f64) -> Branch {
    Branch {
        id: BranchId(id),
        from_bus: BusId(f),
        to_bus: BusId(t),
        reactance: 0.1,
        flow_limit: limit,
        kind: BranchKind::Line,
        maintainable: true,
    }
}

/// Two generators feeding two loads over a meshed four-bus system.
fn mesh() -> Network {
    Network {
        base_mva: 100.0,
        buses: (1..=4).map(bus).collect(),
        branches: vec![
            line(1, 1, 2, 80.0),
            line(2, 1, 3, 60.0),
            line(3, 2, 4, 70.0),
            line(4, 3, 4, 50.0),
            line(5, 2, 3, 40.0),
        ],
        generators: vec![
            Generator { bus: BusId(1), p_max: 150.0, p_min: 10.0, dispatch: 100.0 },
            Generator { bus: BusId(4), p_max: 60.0, p_min: 0.0, dispatch: 20.0 },
        ],
        loads: vec![
            Load { bus: BusId(3), demand: 70.0, served: 70.0 },
            Load { bus: BusId(2), demand: 50.0, served: 50.0 },
        ],
    }
}

fn subsets(n: usize) -> impl Iterator<Item = Vec<bool>> {
    (0u32..1 << n).map(move |m| (0..n).map(|k| m >> k & 1 == 1).collect())
}

#[test]
fn removing_branches_never_reduces_shed() {
    let network = mesh();
    let n = network.branches.len();
    let shed: Vec<f64> = subsets(n).map(|s| redispatch(&network, &s).unwrap().shed).collect();
    for (a, sa) in subsets(n).enumerate() {
        for (b, sb) in subsets(n).enumerate() {
            let subset = sa.iter().zip(&sb).all(|(x, y)| !x || *y);
            if subset {
                assert!(shed[a] + 1e-6 >= shed[b], "{sa:?} sheds {} < {sb:?} sheds {}", shed[a], shed[b]);
            }
        }
    }
    assert_eq!(shed[(1 << n) - 1], 0.0);
}

#[test]
fn redispatch_conserves_power() {
    let network = mesh();
    for s in subsets(network.branches.len()) {
        let out = redispatch(&network, &s).unwrap();
        let generated: f64 = out.dispatch.iter().sum();
        let served: f64 = out.served.iter().sum();
        assert!((generated - served).abs() < 1e-6, "{s:?}: {generated} generated, {served} served");
        let demand: f64 = network.loads.iter().map(|l| l.demand).sum();
        assert!((demand - served - out.shed).abs() < 1e-6);
        for (g, p) in network.generators.iter().zip(&out.dispatch) {
            assert!(*p >= -1e-9 && *p <= g.p_max + 1e-9);
        }
        for (l, p) in network.loads.iter().zip(&out.served) {
            assert!(*p >= -1e-9 && *p <= l.demand + 1e-9);
        }
    }
}

#[test]
fn cascade_stages_conserve_power_on_57_bus() {
    let network = parse_matpower(IEEE57).unwrap();
    let mut model = GridCascade::new(&network, LpWeights::default()).unwrap();
    let n = network.branches.len();
    // take out a growing prefix of the highest-loaded branches
    let base = model.base_loading().to_vec();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| base[b].total_cmp(&base[a]));
    let mut in_service = vec![true; n];
    model.reset();
    model.evaluate(&in_service).unwrap();
    for &k in order.iter().take(8) {
        in_service[k] = false;
        model.evaluate(&in_service).unwrap();
        let point = model.operating_point();
        let generated: f64 = point.dispatch.iter().sum();
        let served: f64 = point.served.iter().sum();
        assert!((generated - served).abs() < 1e-6);
        let shed = model.shed();
        assert!((network.total_demand() - served - shed).abs() < 1e-6);
    }
}
