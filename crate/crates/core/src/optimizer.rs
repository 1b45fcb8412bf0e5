//! Choosing which components to maintain under a cardinality budget:
//! exhaustive enumeration, shortlist-then-enumerate, and greedy selection.
//!
//! Every candidate is scored with the same reweighted estimate, so equal
//! strategies get bit-identical risks whichever search found them. Ties go
//! to the smaller set, then to the lexicographically smaller id list.

use std::cmp::Ordering;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::credibility::{credibility, CredibilityReport};
use crate::error::{Error, Result};
use crate::network::BranchId;
use crate::risk::{RiskMatrices, Strategy};

/// Largest number of subsets an enumeration will score.
pub const SUBSET_CAP: u128 = 10_000_000;

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[serde(rename = "enum")]
    Enumeration,
    One,
    Two,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub m_max: usize,
    pub m_k: usize,
    pub beta: f64,
    pub eps_bar: f64,
    pub y0: f64,
    pub n0: u64,
    pub max_rounds: u32,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { m_max: 4, m_k: 8, beta: 0.95, eps_bar: 0.1, y0: 0.0, n0: 5000, max_rounds: 10 }
    }
}

impl OptimizerConfig {
    pub fn check(&self, algorithm: Algorithm, k_star: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.m_max > k_star {
            return bad(format!("m_max {} exceeds the {k_star} maintainable components", self.m_max));
        }
        if algorithm == Algorithm::One && !(self.m_max <= self.m_k && self.m_k <= k_star) {
            return bad(format!("need m_max <= m_k <= {k_star}, got m_max {} and m_k {}", self.m_max, self.m_k));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) || !(self.eps_bar > 0.0) || !(self.y0 >= 0.0) {
            return bad("beta must lie in (0, 1), eps_bar > 0 and y0 >= 0".into());
        }
        if self.n0 < 2 || self.max_rounds == 0 {
            return bad("n0 must be at least 2 and max_rounds at least 1".into());
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct RoundRecord {
    pub round: u32,
    pub n: u64,
    pub strategy: Vec<BranchId>,
    pub risk: f64,
    pub epsilon_hat: Option<f64>,
    pub required_n: Option<u64>,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct OptimizationResult {
    pub algorithm: Algorithm,
    pub strategy: Vec<BranchId>,
    pub risk: f64,
    pub baseline_risk: f64,
    pub reduction_ratio: f64,
    /// Every maintenance scenario scored, all sizes, sensitivity pass included.
    pub scenarios_evaluated: u64,
    /// Subsets of exactly `m_max` components scored in the enumeration phase.
    pub enumeration_scenarios: Option<u64>,
    /// Components in the order greedy selection committed them.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub selection_order: Vec<BranchId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shortlist: Vec<BranchId>,
    pub credibility: CredibilityReport,
    pub history: Vec<RoundRecord>,
    pub converged: bool,
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Scenarios scored by each algorithm: `(all sizes, exactly m_max)`.
pub fn enumeration_count(k: usize, m_max: usize) -> (u128, u128) {
    ((1..=m_max).map(|j| binomial(k, j)).sum(), binomial(k, m_max))
}

pub fn algorithm_one_count(k: usize, m_k: usize, m_max: usize) -> (u128, u128) {
    let (all, top) = enumeration_count(m_k, m_max);
    (k as u128 + all, top)
}

pub fn algorithm_two_count(k: usize, m_max: usize) -> u128 {
    ((2 * k - m_max + 1) * m_max / 2) as u128
}

#[derive(Clone, Debug)]
struct Scored {
    rows: Vec<usize>,
    ids: Vec<BranchId>,
    risk: f64,
}

impl Scored {
    fn better_than(&self, other: &Scored) -> bool {
        let ord = self
            .risk
            .partial_cmp(&other.risk)
            .unwrap_or(Ordering::Equal)
            .then(self.ids.len().cmp(&other.ids.len()))
            .then_with(|| self.ids.cmp(&other.ids));
        ord == Ordering::Less
    }
}

struct Scorer<'a> {
    m: &'a RiskMatrices,
    evaluated: u64,
}

impl<'a> Scorer<'a> {
    fn new(m: &'a RiskMatrices) -> Self {
        Self { m, evaluated: 0 }
    }

    fn score(&mut self, mut rows: Vec<usize>) -> Scored {
        rows.sort_unstable();
        self.evaluated += 1;
        let ids = rows.iter().map(|&r| self.m.component_ids()[r]).collect();
        Scored { risk: self.m.risk_of_rows(&rows), rows, ids }
    }

    fn baseline(&self) -> Scored {
        Scored { rows: Vec::new(), ids: Vec::new(), risk: self.m.estimate_risk() }
    }

    /// Best subset of `pool` (row positions) with at most `m_max` members.
    fn enumerate(&mut self, pool: &[usize], m_max: usize) -> Scored {
        let mut best = self.baseline();
        let mut pool = pool.to_vec();
        pool.sort_unstable();
        for size in 1..=m_max.min(pool.len()) {
            let mut idx: Vec<usize> = (0..size).collect();
            loop {
                let cand = self.score(idx.iter().map(|&i| pool[i]).collect());
                if cand.better_than(&best) {
                    best = cand;
                }
                // next combination in lexicographic order
                let mut i = size;
                while i > 0 && idx[i - 1] == pool.len() - size + i - 1 {
                    i -= 1;
                }
                if i == 0 {
                    break;
                }
                idx[i - 1] += 1;
                for j in i..size {
                    idx[j] = idx[j - 1] + 1;
                }
            }
        }
        best
    }
}

fn finish(
    m: &RiskMatrices,
    algorithm: Algorithm,
    best: Scored,
    scenarios: u64,
    enumeration_scenarios: Option<u64>,
    beta: f64,
    eps_bar: f64,
) -> Result<OptimizationResult> {
    let baseline_risk = m.estimate_risk();
    let strategy: Strategy = best.ids.iter().copied().collect();
    let cred = credibility(m, &strategy, beta, eps_bar)?;
    Ok(OptimizationResult {
        algorithm,
        reduction_ratio: reduction(best.risk, baseline_risk),
        risk: best.risk,
        strategy: best.ids.clone(),
        baseline_risk,
        scenarios_evaluated: scenarios,
        enumeration_scenarios,
        selection_order: Vec::new(),
        shortlist: Vec::new(),
        history: vec![RoundRecord {
            round: 1,
            n: m.n() as u64,
            strategy: best.ids,
            risk: best.risk,
            epsilon_hat: cred.epsilon_hat,
            required_n: cred.required_n,
        }],
        credibility: cred,
        converged: true,
    })
}

pub fn reduction(risk: f64, baseline: f64) -> f64 {
    if baseline > 0.0 {
        1.0 - risk / baseline
    } else {
        0.0
    }
}

fn candidate_rows(m: &RiskMatrices, candidates: Option<&[BranchId]>) -> Result<Vec<usize>> {
    match candidates {
        None => Ok((0..m.component_ids().len()).collect()),
        Some(ids) => {
            let s: Strategy = ids.iter().copied().collect();
            if s.len() != ids.len() {
                return Err(Error::Domain("candidate set lists a component twice".into()));
            }
            m.rows(&s)
        }
    }
}

/// Global minimizer over all subsets of `candidates` (default: all
/// components) with at most `cfg.m_max` members.
pub fn enumerate_optimal(
    m: &RiskMatrices,
    cfg: &OptimizerConfig,
    candidates: Option<&[BranchId]>,
) -> Result<OptimizationResult> {
    let pool = candidate_rows(m, candidates)?;
    let m_max = cfg.m_max.min(pool.len());
    let (all, top) = enumeration_count(pool.len(), m_max);
    if all > SUBSET_CAP {
        return Err(Error::Refused { count: all, cap: SUBSET_CAP });
    }
    let mut scorer = Scorer::new(m);
    let best = scorer.enumerate(&pool, m_max);
    debug_assert_eq!(scorer.evaluated as u128, all);
    finish(m, Algorithm::Enumeration, best, scorer.evaluated, Some(top as u64), cfg.beta, cfg.eps_bar)
}

/// Single-component maintenance scenarios, ranked by ascending risk.
fn single_scenarios(scorer: &mut Scorer) -> Vec<Scored> {
    let k = scorer.m.component_ids().len();
    let mut singles: Vec<Scored> = (0..k).map(|r| scorer.score(vec![r])).collect();
    singles.sort_by(|a, b| if a.better_than(b) { Ordering::Less } else { Ordering::Greater });
    singles
}

pub fn algorithm_one(m: &RiskMatrices, cfg: &OptimizerConfig) -> Result<OptimizationResult> {
    let k = m.component_ids().len();
    cfg.check(Algorithm::One, k)?;
    let (all, top) = algorithm_one_count(k, cfg.m_k, cfg.m_max);
    if all > SUBSET_CAP {
        return Err(Error::Refused { count: all, cap: SUBSET_CAP });
    }
    let mut scorer = Scorer::new(m);
    let singles = single_scenarios(&mut scorer);
    let shortlist: Vec<usize> = singles.iter().take(cfg.m_k).map(|s| s.rows[0]).collect();
    let best = scorer.enumerate(&shortlist, cfg.m_max);
    debug_assert_eq!(scorer.evaluated as u128, all);
    let mut out = finish(m, Algorithm::One, best, scorer.evaluated, Some(top as u64), cfg.beta, cfg.eps_bar)?;
    out.shortlist = shortlist.iter().map(|&r| m.component_ids()[r]).collect();
    Ok(out)
}

pub fn algorithm_two(m: &RiskMatrices, cfg: &OptimizerConfig) -> Result<OptimizationResult> {
    let k = m.component_ids().len();
    cfg.check(Algorithm::Two, k)?;
    let mut scorer = Scorer::new(m);
    let mut current = scorer.baseline();
    let mut order = Vec::new();
    for _ in 0..cfg.m_max {
        let mut round: Option<Scored> = None;
        for r in 0..k {
            if current.rows.contains(&r) {
                continue;
            }
            let mut rows = current.rows.clone();
            rows.push(r);
            let cand = scorer.score(rows);
            if round.as_ref().is_none_or(|b| cand.better_than(b)) {
                round = Some(cand);
            }
        }
        let chosen = round.expect("a candidate remains while m_max <= |K*|");
        let added = chosen.ids.iter().find(|id| !current.ids.contains(id)).copied().unwrap();
        order.push(added);
        current = chosen;
    }
    debug_assert_eq!(scorer.evaluated as u128, algorithm_two_count(k, cfg.m_max));
    let mut out = finish(m, Algorithm::Two, current, scorer.evaluated, None, cfg.beta, cfg.eps_bar)?;
    out.selection_order = order;
    Ok(out)
}

pub fn run(m: &RiskMatrices, cfg: &OptimizerConfig, algorithm: Algorithm) -> Result<OptimizationResult> {
    match algorithm {
        Algorithm::Enumeration => {
            cfg.check(algorithm, m.component_ids().len())?;
            enumerate_optimal(m, cfg, None)
        }
        Algorithm::One => algorithm_one(m, cfg),
        Algorithm::Two => algorithm_two(m, cfg),
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct SensitivityRow {
    pub component: BranchId,
    pub risk: f64,
    pub reduction_ratio: f64,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct SensitivityReport {
    pub y0: f64,
    pub baseline_risk: f64,
    pub rows: Vec<SensitivityRow>,
    /// Averages of `risk` and `reduction_ratio` over all rows.
    pub mean_risk: f64,
    pub mean_reduction_ratio: f64,
}

pub fn sensitivity_report(m: &RiskMatrices) -> SensitivityReport {
    let baseline_risk = m.estimate_risk();
    let mut scorer = Scorer::new(m);
    let rows: Vec<SensitivityRow> = single_scenarios(&mut scorer)
        .into_iter()
        .map(|s| SensitivityRow { component: s.ids[0], risk: s.risk, reduction_ratio: reduction(s.risk, baseline_risk) })
        .collect();
    let k = rows.len().max(1) as f64;
    SensitivityReport {
        y0: m.y0,
        baseline_risk,
        mean_risk: rows.iter().map(|r| r.risk).sum::<f64>() / k,
        mean_reduction_ratio: rows.iter().map(|r| r.reduction_ratio).sum::<f64>() / k,
        rows,
    }
}

impl SensitivityReport {
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "rank,component,risk,reduction_ratio")?;
        for (i, r) in self.rows.iter().enumerate() {
            writeln!(out, "{},{},{},{}", i + 1, r.component, r.risk, r.reduction_ratio)?;
        }
        writeln!(out, "mean,,{},{}", self.mean_risk, self.mean_reduction_ratio)?;
        Ok(())
    }
}
