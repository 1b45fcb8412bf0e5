//! Network data model and its canonical JSON form.
//!
//! A [`Network`] with every branch in service is the deterministic initial
//! state of a cascade. All powers are MW, reactances per unit on `base_mva`.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[serde(transparent)]
pub struct BusId(pub u32);

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[serde(transparent)]
pub struct BranchId(pub u32);

impl fmt::Display for BusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for BranchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: BusId,
    pub name: String,
}

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[serde(rename_all = "snake_case")]
pub enum BranchKind {
    Line,
    Transformer,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub id: BranchId,
    pub from_bus: BusId,
    pub to_bus: BusId,
    /// Series reactance, per unit.
    pub reactance: f64,
    /// Thermal limit, MW.
    pub flow_limit: f64,
    pub kind: BranchKind,
    pub maintainable: bool,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub bus: BusId,
    pub p_max: f64,
    pub p_min: f64,
    pub dispatch: f64,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Load {
    pub bus: BusId,
    pub demand: f64,
    pub served: f64,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Network {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    pub loads: Vec<Load>,
}

/// One broken invariant: which entity, and what about it.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub entity: String,
    pub invariant: String,
}

impl Violation {
    fn new(entity: impl Into<String>, invariant: impl Into<String>) -> Self {
        Self {
            entity: entity.into(),
            invariant: invariant.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.entity, self.invariant)
    }
}

const REQUIRED_KEYS: [&str; 5] = ["base_mva", "buses", "branches", "generators", "loads"];

impl Network {
    pub fn total_demand(&self) -> f64 {
        self.loads.iter().map(|l| l.demand).sum()
    }

    pub fn total_dispatch(&self) -> f64 {
        self.generators.iter().map(|g| g.dispatch).sum()
    }

    pub fn branch_position(&self, id: BranchId) -> Option<usize> {
        self.branches.iter().position(|b| b.id == id)
    }

    pub fn branch(&self, id: BranchId) -> Option<&Branch> {
        self.branches.iter().find(|b| b.id == id)
    }

    /// Ids of branches open to maintenance, in network order.
    pub fn maintainable_ids(&self) -> Vec<BranchId> {
        self.branches
            .iter()
            .filter(|b| b.maintainable)
            .map(|b| b.id)
            .collect()
    }

    pub fn count_kind(&self, kind: BranchKind) -> usize {
        self.branches.iter().filter(|b| b.kind == kind).count()
    }

    /// Checks every structural invariant. An empty list means the network is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if !(self.base_mva > 0.0 && self.base_mva.is_finite()) {
            out.push(Violation::new("network", "base_mva must be positive"));
        }

        let mut bus_ids = HashSet::new();
        for bus in &self.buses {
            if bus.id.0 < 1 {
                out.push(Violation::new(format!("bus {}", bus.id), "id must be >= 1"));
            }
            if !bus_ids.insert(bus.id) {
                out.push(Violation::new(format!("bus {}", bus.id), "duplicate bus id"));
            }
        }

        let mut branch_ids = HashSet::new();
        for br in &self.branches {
            let name = format!("branch {}", br.id);
            if !branch_ids.insert(br.id) {
                out.push(Violation::new(&name, "duplicate branch id"));
            }
            for end in [br.from_bus, br.to_bus] {
                if !bus_ids.contains(&end) {
                    out.push(Violation::new(&name, format!("references missing bus {end}")));
                }
            }
            if br.reactance == 0.0 || !br.reactance.is_finite() {
                out.push(Violation::new(&name, "reactance must be finite and nonzero"));
            }
            if !(br.flow_limit > 0.0 && br.flow_limit.is_finite()) {
                out.push(Violation::new(&name, "flow_limit must be strictly positive"));
            }
        }

        if !self.generators.iter().any(|g| g.p_max > 0.0) {
            out.push(Violation::new(
                "network",
                "needs at least one generator with positive capacity",
            ));
        }
        for (i, g) in self.generators.iter().enumerate() {
            let name = format!("generator {i} at bus {}", g.bus);
            if !bus_ids.contains(&g.bus) {
                out.push(Violation::new(&name, "references missing bus"));
            }
            if g.p_min < 0.0 {
                out.push(Violation::new(&name, "p_min must be >= 0"));
            }
            if !(g.p_min <= g.dispatch && g.dispatch <= g.p_max) {
                out.push(Violation::new(&name, "requires p_min <= dispatch <= p_max"));
            }
        }
        for (i, l) in self.loads.iter().enumerate() {
            let name = format!("load {i} at bus {}", l.bus);
            if !bus_ids.contains(&l.bus) {
                out.push(Violation::new(&name, "references missing bus"));
            }
            if !(0.0 <= l.served && l.served <= l.demand) {
                out.push(Violation::new(&name, "requires 0 <= served <= demand"));
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }

    /// Parses and validates a canonical network document.
    pub fn from_json(text: &str) -> Result<Network> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Schema {
            path: "$".into(),
            message: e.to_string(),
        })?;
        let obj = value.as_object().ok_or_else(|| Error::Schema {
            path: "$".into(),
            message: "expected an object".into(),
        })?;
        for key in REQUIRED_KEYS {
            if !obj.contains_key(key) {
                return Err(Error::Schema {
                    path: format!("$.{key}"),
                    message: "missing required field".into(),
                });
            }
        }
        let network: Network =
            serde_path_to_error::deserialize(value).map_err(|e| Error::Schema {
                path: format!("$.{}", e.path()),
                message: e.inner().to_string(),
            })?;
        let violations = network.validate();
        if violations.is_empty() {
            Ok(network)
        } else {
            Err(Error::Validation(violations))
        }
    }

    pub(crate) fn bus_positions(&self) -> HashMap<BusId, usize> {
        self.buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id, i))
            .collect()
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn two_bus(limit: f64) -> Network {
        Network {
            base_mva: 100.0,
            buses: vec![
                Bus { id: BusId(1), name: "gen".into() },
                Bus { id: BusId(2), name: "load".into() },
            ],
            branches: vec![Branch {
                id: BranchId(1),
                from_bus: BusId(1),
                to_bus: BusId(2),
                reactance: 0.1,
                flow_limit: limit,
                kind: BranchKind::Line,
                maintainable: true,
            }],
            generators: vec![Generator {
                bus: BusId(1),
                p_max: 200.0,
                p_min: 0.0,
                dispatch: 100.0,
            }],
            loads: vec![Load {
                bus: BusId(2),
                demand: 100.0,
                served: 100.0,
            }],
        }
    }

    #[test]
    fn valid_network_has_no_violations() {
        assert!(two_bus(150.0).validate().is_empty());
    }

    #[test]
    fn dangling_branch_is_one_violation() {
        let mut n = two_bus(150.0);
        n.branches[0].to_bus = BusId(999);
        let v = n.validate();
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].entity.contains("branch 1"));
    }

    #[test]
    fn overdispatched_generator_is_one_violation() {
        let mut n = two_bus(150.0);
        n.generators[0].dispatch = 250.0;
        assert_eq!(n.validate().len(), 1);
    }

    #[test]
    fn zero_reactance_and_limit_are_flagged() {
        let mut n = two_bus(150.0);
        n.branches[0].reactance = 0.0;
        n.branches[0].flow_limit = 0.0;
        assert_eq!(n.validate().len(), 2);
    }

    #[test]
    fn json_round_trip() {
        let n = two_bus(150.0);
        assert_eq!(Network::from_json(&n.to_json()).unwrap(), n);
    }

    #[test]
    fn missing_branches_reports_path() {
        let n = two_bus(150.0);
        let mut v: serde_json::Value = serde_json::from_str(&n.to_json()).unwrap();
        v.as_object_mut().unwrap().remove("branches");
        match Network::from_json(&v.to_string()) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "$.branches"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nested_type_error_reports_path() {
        let n = two_bus(150.0);
        let mut v: serde_json::Value = serde_json::from_str(&n.to_json()).unwrap();
        v["branches"][0]["reactance"] = "x".into();
        match Network::from_json(&v.to_string()) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "$.branches[0].reactance"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_flow_limit_document_is_rejected() {
        let n = two_bus(0.0);
        assert!(matches!(
            Network::from_json(&n.to_json()),
            Err(Error::Validation(_))
        ));
    }
}
