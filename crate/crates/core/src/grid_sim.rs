//! Stage physics of a transmission network: DC flows over the surviving
//! topology, with redispatch and load shedding after every outage stage.
//!
//! Loading ratios are measured on the post-outage flows before operators
//! react: the previous operating point is first rebalanced inside each new
//! island (generation follows load, shedding only if capacity runs out), then
//! flows are computed. The redispatch LP then restores limits and defines the
//! operating point carried into the next stage and the shed at the end.

use crate::cascade::StageModel;
use crate::error::{Error, Result};
use crate::network::{BranchId, Network};
use crate::powerflow::{bus_injections, islands, GridIndex, Island, IslandSolver, BALANCE_TOL};
use crate::redispatch::{LpWeights, OperatingPoint, Redispatcher};

#[derive(Clone)]
pub struct GridCascade<'a> {
    network: &'a Network,
    grid: GridIndex,
    ids: Vec<BranchId>,
    weights: LpWeights,
    base: OperatingPoint,
    base_loading: Vec<f64>,
    point: OperatingPoint,
    fresh: bool,
}

impl<'a> GridCascade<'a> {
    /// The network's own dispatch must balance its served load.
    pub fn new(network: &'a Network, weights: LpWeights) -> Result<Self> {
        let grid = GridIndex::new(network);
        let base = OperatingPoint::of(network);
        let all = vec![true; network.branches.len()];
        let injection = bus_injections(&grid, &base.dispatch, &base.served);
        let mut flows = vec![0.0; grid.n_branch()];
        for (no, island) in islands(&grid, &all).iter().enumerate() {
            let mismatch: f64 = island.buses.iter().map(|&b| injection[b]).sum();
            if mismatch.abs() > BALANCE_TOL {
                return Err(Error::Imbalance { island: no, mismatch });
            }
            if !island.branches.is_empty() {
                IslandSolver::new(&grid, island, no)?.flows_into(&grid, island, &injection, &mut flows);
            }
        }
        let base_loading = loading_ratios(network, &flows);
        Ok(Self {
            network,
            ids: network.branches.iter().map(|b| b.id).collect(),
            grid,
            weights,
            point: base.clone(),
            base,
            base_loading,
            fresh: true,
        })
    }

    pub fn base_loading(&self) -> &[f64] {
        &self.base_loading
    }

    pub fn operating_point(&self) -> &OperatingPoint {
        &self.point
    }
}

fn loading_ratios(network: &Network, flows: &[f64]) -> Vec<f64> {
    network
        .branches
        .iter()
        .zip(flows)
        .map(|(b, f)| f.abs() / b.flow_limit)
        .collect()
}

/// Rebalances an island after a topology change without regard to limits.
fn emergency_balance(network: &Network, island: &Island, point: &mut OperatingPoint) {
    let gens = &network.generators;
    let capacity: f64 = island.generators.iter().map(|&g| gens[g].p_max).sum();
    let load: f64 = island.loads.iter().map(|&l| point.served[l]).sum();
    let output: f64 = island.generators.iter().map(|&g| point.dispatch[g]).sum();

    if capacity <= 0.0 || load <= 0.0 {
        for &g in &island.generators {
            point.dispatch[g] = 0.0;
        }
        for &l in &island.loads {
            point.served[l] = 0.0;
        }
    } else if output > load {
        for &g in &island.generators {
            point.dispatch[g] *= load / output;
        }
    } else if output < load {
        let headroom: f64 = island.generators.iter().map(|&g| gens[g].p_max - point.dispatch[g]).sum();
        let deficit = load - output;
        if headroom >= deficit {
            for &g in &island.generators {
                point.dispatch[g] += (gens[g].p_max - point.dispatch[g]) * deficit / headroom;
            }
        } else {
            for &g in &island.generators {
                point.dispatch[g] = gens[g].p_max;
            }
            for &l in &island.loads {
                point.served[l] *= capacity / load;
            }
        }
    }
}

impl StageModel for GridCascade<'_> {
    fn component_ids(&self) -> &[BranchId] {
        &self.ids
    }

    fn reset(&mut self) {
        self.point.clone_from(&self.base);
        self.fresh = true;
    }

    fn evaluate(&mut self, in_service: &[bool]) -> Result<Vec<f64>> {
        if std::mem::take(&mut self.fresh) && in_service.iter().all(|&on| on) {
            return Ok(self.base_loading.clone());
        }
        let Self { network, grid, weights, point, .. } = self;
        let network: &Network = network;
        let parts = islands(grid, in_service);
        for island in &parts {
            emergency_balance(network, island, point);
        }
        let injection = bus_injections(grid, &point.dispatch, &point.served);
        let mut flows = vec![0.0; grid.n_branch()];
        let redispatcher = Redispatcher { network, grid, weights: *weights };
        let mut loading = vec![0.0; grid.n_branch()];

        for (no, island) in parts.iter().enumerate() {
            let solver = if island.branches.is_empty() {
                None
            } else {
                Some(IslandSolver::new(grid, island, no)?)
            };
            let mut settled = island.loads.iter().all(|&l| point.served[l] >= network.loads[l].demand);
            if let Some(s) = &solver {
                s.flows_into(grid, island, &injection, &mut flows);
                for &k in &island.branches {
                    let limit = network.branches[k].flow_limit;
                    loading[k] = flows[k].abs() / limit;
                    if flows[k].abs() > limit * (1.0 + 1e-9) + 1e-7 {
                        settled = false;
                    }
                }
            }
            if !settled {
                redispatcher.solve_island(island, solver.as_ref(), point)?;
            }
        }
        Ok(loading)
    }

    fn shed(&self) -> f64 {
        self.point.shed(self.network)
    }
}
