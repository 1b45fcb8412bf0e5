//! Queries shared by the command line and the HTTP service, so both return
//! identical numbers for identical requests.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use gridrisk_core::credibility::credibility;
use gridrisk_core::network::{BranchId, BranchKind, Network};
use gridrisk_core::optimizer::{self, reduction, Algorithm, OptimizationResult, OptimizerConfig, SensitivityReport};
use gridrisk_core::risk::{RiskMatrices, Strategy, SurvivalFactors};
use gridrisk_core::Error;

use crate::AppError;

pub const DEFAULT_BETA: f64 = 0.95;
pub const DEFAULT_EPS_BAR: f64 = 0.1;

fn default_beta() -> f64 {
    DEFAULT_BETA
}

fn default_eps_bar() -> f64 {
    DEFAULT_EPS_BAR
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RiskRequest {
    #[serde(default)]
    pub maintained: Vec<BranchId>,
    #[serde(default)]
    pub y0: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_eps_bar")]
    pub eps_bar: f64,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct RiskResponse {
    pub maintained: Vec<BranchId>,
    pub y0: f64,
    pub risk: f64,
    pub baseline_risk: f64,
    pub reduction_ratio: f64,
    pub variance: f64,
    pub epsilon_hat: Option<f64>,
    pub beta: f64,
    pub interval: [f64; 2],
    pub required_n: Option<u64>,
    pub n: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SensitivityRequest {
    #[serde(default)]
    pub y0: f64,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OptimizeRequest {
    pub alg: Algorithm,
    pub m_max: usize,
    #[serde(default)]
    pub m_k: Option<usize>,
    #[serde(default)]
    pub y0: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_eps_bar")]
    pub eps_bar: f64,
}

impl OptimizeRequest {
    pub fn config(&self) -> OptimizerConfig {
        OptimizerConfig {
            m_max: self.m_max,
            m_k: self.m_k.unwrap_or(self.m_max),
            beta: self.beta,
            eps_bar: self.eps_bar,
            y0: self.y0,
            ..OptimizerConfig::default()
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct ComponentSummary {
    pub id: BranchId,
    pub kind: BranchKind,
    pub from_bus: u32,
    pub to_bus: u32,
    pub flow_limit: f64,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct NetworkSummary {
    pub buses: usize,
    pub branches: usize,
    pub lines: usize,
    pub transformers: usize,
    pub generators: usize,
    pub loads: usize,
    pub total_demand: f64,
    pub maintainable: Vec<ComponentSummary>,
}

pub fn network_summary(n: &Network) -> NetworkSummary {
    NetworkSummary {
        buses: n.buses.len(),
        branches: n.branches.len(),
        lines: n.count_kind(BranchKind::Line),
        transformers: n.count_kind(BranchKind::Transformer),
        generators: n.generators.len(),
        loads: n.loads.len(),
        total_demand: n.total_demand(),
        maintainable: n
            .branches
            .iter()
            .filter(|b| b.maintainable)
            .map(|b| ComponentSummary {
                id: b.id,
                kind: b.kind,
                from_bus: b.from_bus.0,
                to_bus: b.to_bus.0,
                flow_limit: b.flow_limit,
            })
            .collect(),
    }
}

/// Parses a comma-separated id list such as `3,17,40`.
pub fn parse_ids(text: &str) -> Result<Vec<BranchId>, AppError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<u32>().map(BranchId).map_err(|_| AppError::Usage(format!("`{s}` is not a branch id"))))
        .collect()
}

/// Checks a maintained list: no duplicates, every id maintainable.
pub fn strategy_of(factors: &SurvivalFactors, ids: &[BranchId]) -> Result<Strategy, AppError> {
    let mut seen = BTreeSet::new();
    for &id in ids {
        if !seen.insert(id) {
            return Err(AppError::BadComponent { id, reason: "listed more than once" });
        }
        if factors.position(id).is_none() {
            return Err(AppError::BadComponent { id, reason: "not a maintainable component" });
        }
    }
    Ok(seen)
}

pub fn check_y0(y0: f64) -> Result<(), AppError> {
    if !(y0 >= 0.0 && y0.is_finite()) {
        return Err(Error::Domain(format!("y0 {y0} must be a finite value >= 0")).into());
    }
    Ok(())
}

pub fn risk(factors: &Arc<SurvivalFactors>, req: &RiskRequest) -> Result<RiskResponse, AppError> {
    check_y0(req.y0)?;
    let strategy = strategy_of(factors, &req.maintained)?;
    let m = RiskMatrices::new(factors.clone(), req.y0);
    let cred = credibility(&m, &strategy, req.beta, req.eps_bar)?;
    let baseline_risk = m.estimate_risk();
    Ok(RiskResponse {
        maintained: strategy.into_iter().collect(),
        y0: req.y0,
        reduction_ratio: reduction(cred.risk, baseline_risk),
        risk: cred.risk,
        baseline_risk,
        variance: cred.variance,
        epsilon_hat: cred.epsilon_hat,
        beta: cred.beta,
        interval: cred.interval,
        required_n: cred.required_n,
        n: cred.n,
        warnings: cred.warnings,
    })
}

pub fn sensitivity(factors: &Arc<SurvivalFactors>, req: &SensitivityRequest) -> SensitivityReport {
    optimizer::sensitivity_report(&RiskMatrices::new(factors.clone(), req.y0))
}

pub fn optimize(factors: &Arc<SurvivalFactors>, req: &OptimizeRequest) -> Result<OptimizationResult, AppError> {
    let m = RiskMatrices::new(factors.clone(), req.y0);
    Ok(optimizer::run(&m, &req.config(), req.alg)?)
}
