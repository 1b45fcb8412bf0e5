//! DC power flow over an arbitrary in-service branch set, with island handling.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::network::Network;

/// Generation/served-load mismatch tolerated inside an island, MW.
pub const BALANCE_TOL: f64 = 1e-6;

/// Position-based view of a network: branch endpoints, generator and load
/// buses as indices into `network.buses`.
#[derive(Clone, Debug)]
pub struct GridIndex {
    pub n_bus: usize,
    pub from: Vec<usize>,
    pub to: Vec<usize>,
    pub gen_bus: Vec<usize>,
    pub load_bus: Vec<usize>,
    /// MW per radian of angle difference, `base_mva / x`.
    pub susceptance: Vec<f64>,
}

impl GridIndex {
    /// Builds the index. The network must reference only existing buses.
    pub fn new(network: &Network) -> Self {
        let pos = network.bus_positions();
        Self {
            n_bus: network.buses.len(),
            from: network.branches.iter().map(|b| pos[&b.from_bus]).collect(),
            to: network.branches.iter().map(|b| pos[&b.to_bus]).collect(),
            gen_bus: network.generators.iter().map(|g| pos[&g.bus]).collect(),
            load_bus: network.loads.iter().map(|l| pos[&l.bus]).collect(),
            susceptance: network
                .branches
                .iter()
                .map(|b| network.base_mva / b.reactance)
                .collect(),
        }
    }

    pub fn n_branch(&self) -> usize {
        self.from.len()
    }
}

/// A connected component of the in-service graph.
#[derive(Clone, Debug, PartialEq)]
pub struct Island {
    /// Bus positions, ascending; the first one is the angle reference.
    pub buses: Vec<usize>,
    /// In-service branch positions inside the island, ascending.
    pub branches: Vec<usize>,
    pub generators: Vec<usize>,
    pub loads: Vec<usize>,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Splits the network into islands over the in-service branches. Islands are
/// ordered by their smallest bus position.
pub fn islands(grid: &GridIndex, in_service: &[bool]) -> Vec<Island> {
    let mut parent: Vec<usize> = (0..grid.n_bus).collect();
    for (k, &on) in in_service.iter().enumerate() {
        if on {
            let a = find(&mut parent, grid.from[k]);
            let b = find(&mut parent, grid.to[k]);
            if a != b {
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                parent[hi] = lo;
            }
        }
    }
    let mut slot = vec![usize::MAX; grid.n_bus];
    let mut out: Vec<Island> = Vec::new();
    for bus in 0..grid.n_bus {
        let root = find(&mut parent, bus);
        if slot[root] == usize::MAX {
            slot[root] = out.len();
            out.push(Island {
                buses: Vec::new(),
                branches: Vec::new(),
                generators: Vec::new(),
                loads: Vec::new(),
            });
        }
        let s = slot[root];
        slot[bus] = s;
        out[s].buses.push(bus);
    }
    for (k, &on) in in_service.iter().enumerate() {
        if on {
            out[slot[grid.from[k]]].branches.push(k);
        }
    }
    for (g, &b) in grid.gen_bus.iter().enumerate() {
        out[slot[b]].generators.push(g);
    }
    for (l, &b) in grid.load_bus.iter().enumerate() {
        out[slot[b]].loads.push(l);
    }
    out
}

/// Factorized reduced susceptance matrix of one island.
pub(crate) struct IslandSolver {
    /// Island-local index of each bus position (usize::MAX outside).
    local: Vec<usize>,
    /// Inverse of the reduced matrix (reference bus removed).
    inverse: DMatrix<f64>,
}

impl IslandSolver {
    pub(crate) fn new(grid: &GridIndex, island: &Island, island_no: usize) -> Result<Self> {
        let mut local = vec![usize::MAX; grid.n_bus];
        for (i, &b) in island.buses.iter().enumerate() {
            local[b] = i;
        }
        let n = island.buses.len() - 1;
        let mut bmat = DMatrix::<f64>::zeros(n, n);
        for &k in &island.branches {
            let (f, t) = (local[grid.from[k]], local[grid.to[k]]);
            let y = grid.susceptance[k];
            // local 0 is the reference and drops out
            if f > 0 {
                bmat[(f - 1, f - 1)] += y;
            }
            if t > 0 {
                bmat[(t - 1, t - 1)] += y;
            }
            if f > 0 && t > 0 {
                bmat[(f - 1, t - 1)] -= y;
                bmat[(t - 1, f - 1)] -= y;
            }
        }
        let singular = || Error::SingularIsland {
            island: island_no,
            buses: island.buses.len(),
        };
        let inverse = if n == 0 {
            bmat
        } else {
            let inv = bmat.lu().try_inverse().ok_or_else(singular)?;
            if inv.iter().any(|v| !v.is_finite()) {
                return Err(singular());
            }
            inv
        };
        Ok(Self { local, inverse })
    }

    /// Bus angles (radians times nothing: MW / susceptance units) for the
    /// given per-bus injections; the reference absorbs any mismatch.
    fn angles(&self, island: &Island, injection: &[f64]) -> DVector<f64> {
        let n = island.buses.len() - 1;
        let p = DVector::from_iterator(n, island.buses[1..].iter().map(|&b| injection[b]));
        &self.inverse * p
    }

    fn angle_of(&self, theta: &DVector<f64>, bus: usize) -> f64 {
        match self.local[bus] {
            0 => 0.0,
            i => theta[i - 1],
        }
    }

    /// Flows on the island's branches, written into `flows`.
    pub(crate) fn flows_into(
        &self,
        grid: &GridIndex,
        island: &Island,
        injection: &[f64],
        flows: &mut [f64],
    ) {
        let theta = self.angles(island, injection);
        for &k in &island.branches {
            flows[k] = grid.susceptance[k]
                * (self.angle_of(&theta, grid.from[k]) - self.angle_of(&theta, grid.to[k]));
        }
    }

    /// Sensitivity of the flow on branch `k` to an injection at `bus`
    /// withdrawn at the island reference.
    pub(crate) fn ptdf(&self, grid: &GridIndex, k: usize, bus: usize) -> f64 {
        let col = |b: usize| -> f64 {
            match (self.local[b], self.local[bus]) {
                (0, _) | (_, 0) => 0.0,
                (i, j) => self.inverse[(i - 1, j - 1)],
            }
        };
        grid.susceptance[k] * (col(grid.from[k]) - col(grid.to[k]))
    }
}

/// Net injection per bus position.
pub fn bus_injections(grid: &GridIndex, dispatch: &[f64], served: &[f64]) -> Vec<f64> {
    let mut inj = vec![0.0; grid.n_bus];
    for (g, &p) in dispatch.iter().enumerate() {
        inj[grid.gen_bus[g]] += p;
    }
    for (l, &p) in served.iter().enumerate() {
        inj[grid.load_bus[l]] -= p;
    }
    inj
}

/// Solves DC flows with the per-island reference bus absorbing any mismatch.
pub(crate) fn flows_with_slack(
    grid: &GridIndex,
    in_service: &[bool],
    injection: &[f64],
) -> Result<Vec<f64>> {
    let mut flows = vec![0.0; grid.n_branch()];
    for (no, island) in islands(grid, in_service).iter().enumerate() {
        if island.branches.is_empty() {
            continue;
        }
        IslandSolver::new(grid, island, no)?.flows_into(grid, island, injection, &mut flows);
    }
    Ok(flows)
}

/// DC power flow: per-branch MW flows (from→to positive) for the in-service
/// set. Every island must be balanced within [`BALANCE_TOL`].
pub fn dc_power_flow(
    network: &Network,
    in_service: &[bool],
    dispatch: &[f64],
    served: &[f64],
) -> Result<Vec<f64>> {
    let grid = GridIndex::new(network);
    let injection = bus_injections(&grid, dispatch, served);
    for (no, island) in islands(&grid, in_service).iter().enumerate() {
        let mismatch: f64 = island.buses.iter().map(|&b| injection[b]).sum();
        if mismatch.abs() > BALANCE_TOL {
            return Err(Error::Imbalance {
                island: no,
                mismatch,
            });
        }
    }
    flows_with_slack(&grid, in_service, &injection)
}
