//! Per-island generation redispatch and load shedding.
//!
//! Each island with both generation and load solves
//!
//! ```text
//! min  w_shed · Σ shed_d + w_move · Σ |Δgen_g|
//! s.t. Σ gen = Σ served,  |flow_l| <= limit_l,  p_min <= gen <= p_max,  0 <= served <= demand
//! ```
//!
//! A unit may also be backed down below `p_min` at the shedding price, which
//! stands for tripping it; this keeps every island feasible when its minimum
//! generation exceeds what its load can absorb.
//!
//! with flows expressed through the island's injection shift factors. Flow
//! limits are added lazily: the LP is re-solved with every violated branch
//! added until the solution respects all limits, which gives the same optimum
//! as the fully constrained problem.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::lp::{LinearProgram, Relation};
use crate::network::Network;
use crate::powerflow::{bus_injections, islands, GridIndex, Island, IslandSolver};

/// Shed totals below this are numerical noise, MW.
pub const SHED_TOL: f64 = 1e-9;

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LpWeights {
    pub shed: f64,
    pub redispatch: f64,
}

impl Default for LpWeights {
    fn default() -> Self {
        Self { shed: 100.0, redispatch: 1.0 }
    }
}

/// Generator outputs and served loads, indexed like the network's lists.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatingPoint {
    pub dispatch: Vec<f64>,
    pub served: Vec<f64>,
}

impl OperatingPoint {
    pub fn of(network: &Network) -> Self {
        Self {
            dispatch: network.generators.iter().map(|g| g.dispatch).collect(),
            served: network.loads.iter().map(|l| l.served).collect(),
        }
    }

    /// Unserved demand, MW; totals below [`SHED_TOL`] count as zero.
    pub fn shed(&self, network: &Network) -> f64 {
        let shed: f64 = network.loads.iter().zip(&self.served).map(|(l, s)| l.demand - s).sum();
        if shed < SHED_TOL {
            0.0
        } else {
            shed
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RedispatchOutcome {
    pub dispatch: Vec<f64>,
    pub served: Vec<f64>,
    /// Total unserved demand, MW.
    pub shed: f64,
}

/// Redispatches the network's own operating point over the given in-service
/// branch set.
pub fn redispatch(network: &Network, in_service: &[bool]) -> Result<RedispatchOutcome> {
    redispatch_with(network, in_service, LpWeights::default())
}

pub fn redispatch_with(
    network: &Network,
    in_service: &[bool],
    weights: LpWeights,
) -> Result<RedispatchOutcome> {
    let grid = GridIndex::new(network);
    let start = OperatingPoint::of(network);
    let point = Redispatcher { network, grid: &grid, weights }.solve(in_service, &start)?;
    let shed = point.shed(network);
    Ok(RedispatchOutcome { dispatch: point.dispatch, served: point.served, shed })
}

pub(crate) struct Redispatcher<'a> {
    pub network: &'a Network,
    pub grid: &'a GridIndex,
    pub weights: LpWeights,
}

impl Redispatcher<'_> {
    pub fn solve(&self, in_service: &[bool], start: &OperatingPoint) -> Result<OperatingPoint> {
        let mut point = start.clone();
        for (no, island) in islands(self.grid, in_service).iter().enumerate() {
            let solver = if island.branches.is_empty() {
                None
            } else {
                Some(IslandSolver::new(self.grid, island, no)?)
            };
            self.solve_island(island, solver.as_ref(), &mut point)?;
        }
        Ok(point)
    }

    pub fn solve_island(
        &self,
        island: &Island,
        solver: Option<&IslandSolver>,
        point: &mut OperatingPoint,
    ) -> Result<()> {
        let gens = &self.network.generators;
        let loads = &self.network.loads;
        let capacity: f64 = island.generators.iter().map(|&g| gens[g].p_max).sum();
        let demand: f64 = island.loads.iter().map(|&l| loads[l].demand).sum();
        if capacity <= 0.0 || demand <= 0.0 {
            // nothing can be balanced: dark island or idle generators
            for &g in &island.generators {
                point.dispatch[g] = 0.0;
            }
            for &l in &island.loads {
                point.served[l] = 0.0;
            }
            return Ok(());
        }

        // variables: raise, lower within [p_min, p_max], curtail below p_min
        // (a unit trip, priced like shedding), shed per load
        let ng = island.generators.len();
        let nd = island.loads.len();
        let nv = 3 * ng + nd;
        let g0: Vec<f64> = island
            .generators
            .iter()
            .map(|&g| point.dispatch[g].clamp(0.0, gens[g].p_max))
            .collect();

        let mut cost = Vec::with_capacity(nv);
        let mut upper = Vec::with_capacity(nv);
        for (i, &g) in island.generators.iter().enumerate() {
            cost.push(self.weights.redispatch);
            upper.push(gens[g].p_max - g0[i]);
        }
        for (i, &g) in island.generators.iter().enumerate() {
            cost.push(self.weights.redispatch);
            upper.push((g0[i] - gens[g].p_min).max(0.0));
        }
        for (i, &g) in island.generators.iter().enumerate() {
            cost.push(self.weights.shed);
            upper.push(g0[i].min(gens[g].p_min));
        }
        for &l in &island.loads {
            cost.push(self.weights.shed);
            upper.push(loads[l].demand);
        }

        // injections at x = 0: scheduled generation against full demand
        let mut base_dispatch = point.dispatch.clone();
        for (i, &g) in island.generators.iter().enumerate() {
            base_dispatch[g] = g0[i];
        }
        let full: Vec<f64> = loads.iter().map(|l| l.demand).collect();
        let base_injection = bus_injections(self.grid, &base_dispatch, &full);

        let mut active: Vec<usize> = Vec::new();
        let mut flows = vec![0.0; self.grid.n_branch()];
        loop {
            let mut lp = LinearProgram::new(cost.clone(), upper.clone());
            let mut balance = vec![0.0; nv];
            balance[..ng].fill(1.0);
            balance[ng..3 * ng].fill(-1.0);
            balance[3 * ng..].fill(1.0);
            lp.add_row(balance, Relation::Eq, demand - g0.iter().sum::<f64>());

            if let Some(s) = solver {
                for &k in &active {
                    let shift = |bus: usize| s.ptdf(self.grid, k, bus);
                    let mut row = vec![0.0; nv];
                    for (i, &g) in island.generators.iter().enumerate() {
                        let f = shift(self.grid.gen_bus[g]);
                        row[i] = f;
                        row[ng + i] = -f;
                        row[2 * ng + i] = -f;
                    }
                    for (i, &l) in island.loads.iter().enumerate() {
                        row[3 * ng + i] = shift(self.grid.load_bus[l]);
                    }
                    let base: f64 = island.buses.iter().map(|&b| shift(b) * base_injection[b]).sum();
                    let limit = self.network.branches[k].flow_limit;
                    let neg: Vec<f64> = row.iter().map(|v| -v).collect();
                    lp.add_row(row, Relation::Le, limit - base);
                    lp.add_row(neg, Relation::Le, limit + base);
                }
            }

            let sol = lp.solve()?;
            for (i, &g) in island.generators.iter().enumerate() {
                let out = g0[i] + sol.x[i] - sol.x[ng + i] - sol.x[2 * ng + i];
                point.dispatch[g] = out.clamp(0.0, gens[g].p_max);
            }
            for (i, &l) in island.loads.iter().enumerate() {
                point.served[l] = (loads[l].demand - sol.x[3 * ng + i]).clamp(0.0, loads[l].demand);
            }

            let Some(s) = solver else { return Ok(()) };
            let injection = bus_injections(self.grid, &point.dispatch, &point.served);
            s.flows_into(self.grid, island, &injection, &mut flows);
            let before = active.len();
            for &k in &island.branches {
                let limit = self.network.branches[k].flow_limit;
                if flows[k].abs() > limit * (1.0 + 1e-9) + 1e-7 && !active.contains(&k) {
                    active.push(k);
                }
            }
            if active.len() == before {
                return Ok(());
            }
        }
    }
}
