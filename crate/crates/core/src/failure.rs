//! Component failure-probability functions and maintenance effects.
//!
//! A branch's per-stage trip probability is piecewise linear in its loading
//! ratio `|flow| / limit`: flat at `p_base` up to the knee, rising linearly to
//! `p_peak` at saturation, flat afterwards. The default parameters are
//! illustrative and uncalibrated.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{BranchId, BranchKind, Network};

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PhiParams {
    pub p_base: f64,
    pub p_peak: f64,
    pub ell_knee: f64,
    pub ell_sat: f64,
}

impl PhiParams {
    pub const DEFAULT_LINE: PhiParams = PhiParams {
        p_base: 1e-4,
        p_peak: 0.999,
        ell_knee: 1.0,
        ell_sat: 1.4,
    };

    pub const DEFAULT_TRANSFORMER: PhiParams = PhiParams {
        p_base: 5e-4,
        p_peak: 0.999,
        ell_knee: 1.0,
        ell_sat: 1.3,
    };

    /// Loading-independent probability `p`.
    pub fn constant(p: f64) -> Self {
        PhiParams { p_base: p, p_peak: p, ell_knee: 0.0, ell_sat: 1.0 }
    }

    pub fn check(&self) -> Result<()> {
        let ok = 0.0 <= self.p_base
            && self.p_base <= self.p_peak
            && self.p_peak <= 1.0
            && 0.0 <= self.ell_knee
            && self.ell_knee < self.ell_sat;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "failure parameters {self:?} violate 0 <= p_base <= p_peak <= 1, 0 <= knee < sat"
            )))
        }
    }

    #[inline]
    pub fn probability(&self, loading: f64) -> f64 {
        if loading <= self.ell_knee {
            self.p_base
        } else if loading >= self.ell_sat {
            self.p_peak
        } else {
            let t = (loading - self.ell_knee) / (self.ell_sat - self.ell_knee);
            self.p_base + t * (self.p_peak - self.p_base)
        }
    }
}

/// What maintaining a component does to its failure function.
#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum MaintenanceEffect {
    /// Multiply the normal-loading probability `p_base` by `scale_factor`
    /// in (0, 1]. Overload tripping (`p_peak`) is protection behaviour and
    /// stays as it was.
    Scale { scale_factor: f64 },
    /// Use these parameters instead.
    Replace { replacement: PhiParams },
}

impl Default for MaintenanceEffect {
    fn default() -> Self {
        MaintenanceEffect::Scale { scale_factor: 0.1 }
    }
}

impl MaintenanceEffect {
    pub fn check(&self) -> Result<()> {
        match self {
            MaintenanceEffect::Scale { scale_factor } if !(*scale_factor > 0.0 && *scale_factor <= 1.0) => {
                Err(Error::Config(format!("scale_factor {scale_factor} must lie in (0, 1]")))
            }
            MaintenanceEffect::Replace { replacement } => replacement.check(),
            _ => Ok(()),
        }
    }

    pub fn apply(&self, params: &PhiParams) -> PhiParams {
        match *self {
            MaintenanceEffect::Scale { scale_factor } => PhiParams {
                p_base: params.p_base * scale_factor,
                ..*params
            },
            MaintenanceEffect::Replace { replacement } => replacement,
        }
    }
}

/// Failure parameters resolved for every branch of a network.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct FailureModel {
    params: BTreeMap<BranchId, PhiParams>,
}

/// Kind-level defaults plus per-branch overrides, as written in a config file.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FailureDefaults {
    #[serde(default = "default_line")]
    pub line: PhiParams,
    #[serde(default = "default_transformer")]
    pub transformer: PhiParams,
    #[serde(default)]
    pub overrides: BTreeMap<BranchId, PhiParams>,
}

fn default_line() -> PhiParams {
    PhiParams::DEFAULT_LINE
}

fn default_transformer() -> PhiParams {
    PhiParams::DEFAULT_TRANSFORMER
}

impl Default for FailureDefaults {
    fn default() -> Self {
        Self {
            line: PhiParams::DEFAULT_LINE,
            transformer: PhiParams::DEFAULT_TRANSFORMER,
            overrides: BTreeMap::new(),
        }
    }
}

impl FailureModel {
    pub fn from_params(params: BTreeMap<BranchId, PhiParams>) -> Result<Self> {
        for p in params.values() {
            p.check()?;
        }
        Ok(Self { params })
    }

    pub fn for_network(network: &Network, defaults: &FailureDefaults) -> Result<Self> {
        for id in defaults.overrides.keys() {
            if network.branch(*id).is_none() {
                return Err(Error::UnknownBranch(*id));
            }
        }
        let params = network
            .branches
            .iter()
            .map(|b| {
                let p = defaults.overrides.get(&b.id).copied().unwrap_or(match b.kind {
                    BranchKind::Line => defaults.line,
                    BranchKind::Transformer => defaults.transformer,
                });
                (b.id, p)
            })
            .collect();
        Self::from_params(params)
    }

    pub fn params(&self, branch: BranchId) -> Result<&PhiParams> {
        self.params.get(&branch).ok_or(Error::UnknownBranch(branch))
    }

    pub fn branches(&self) -> impl Iterator<Item = (&BranchId, &PhiParams)> {
        self.params.iter()
    }

    /// This model with `effect` applied to the listed branches.
    pub fn maintained(&self, effect: &MaintenanceEffect, branches: &[BranchId]) -> Result<Self> {
        let mut params = self.params.clone();
        for id in branches {
            let p = params.get_mut(id).ok_or(Error::UnknownBranch(*id))?;
            *p = effect.apply(p);
        }
        Ok(Self { params })
    }
}

/// Per-stage trip probability of `branch` at the given loading ratio.
pub fn failure_probability(model: &FailureModel, branch: BranchId, loading_ratio: f64) -> Result<f64> {
    if !(loading_ratio >= 0.0) {
        return Err(Error::Domain(format!("loading ratio {loading_ratio} must be >= 0")));
    }
    Ok(model.params(branch)?.probability(loading_ratio))
}
