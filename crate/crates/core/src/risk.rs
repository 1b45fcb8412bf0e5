//! Consequence and survival-factor matrices over a sample set, and the
//! direct and strategy-reweighted risk estimates built on them.
//!
//! All sums run over samples in index order so every estimate is
//! bit-reproducible regardless of how it is called.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::sync::Arc;

use rayon::prelude::*;

use crate::cascade::gamma_factor;
use crate::config;
use crate::error::{Error, Result};
use crate::failure::{FailureModel, MaintenanceEffect};
use crate::network::BranchId;
use crate::sampling::SampleSet;

pub type Strategy = BTreeSet<BranchId>;

const BLOB_MAGIC: &[u8; 4] = b"GRMX";
const BLOB_VERSION: u32 = 1;

/// The threshold-independent part: shed per sample and the baseline and
/// maintained Γ factors per component and sample, stored row-major by component.
#[derive(Clone, Debug, PartialEq)]
pub struct SurvivalFactors {
    pub component_ids: Vec<BranchId>,
    pub shed: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub ratio: Vec<f64>,
    pub model_hash: String,
    pub effect_hash: String,
}

impl SurvivalFactors {
    pub fn n(&self) -> usize {
        self.shed.len()
    }

    pub fn k(&self) -> usize {
        self.component_ids.len()
    }

    /// Assembles factors from raw parts, checking shapes and ranges.
    pub fn from_parts(component_ids: Vec<BranchId>, shed: Vec<f64>, p: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        let (k, n) = (component_ids.len(), shed.len());
        if p.len() != k * n || q.len() != k * n {
            return Err(Error::Format(format!("factor matrices must be {k} x {n}")));
        }
        if component_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Format("component ids must be strictly increasing".into()));
        }
        for (row, id) in component_ids.iter().enumerate() {
            for i in 0..n {
                let (pv, qv) = (p[row * n + i], q[row * n + i]);
                if !(pv > 0.0 && pv <= 1.0) {
                    return Err(Error::ZeroProbability { sample: i as u64, branch: *id });
                }
                if !(0.0..=1.0).contains(&qv) {
                    return Err(Error::Format(format!("Q for component {id}, sample {i} is {qv}")));
                }
            }
        }
        if shed.iter().any(|h| !(*h >= 0.0)) {
            return Err(Error::Format("shed values must be non-negative".into()));
        }
        let ratio = q.iter().zip(&p).map(|(q, p)| q / p).collect();
        Ok(Self { component_ids, shed, p, q, ratio, model_hash: String::new(), effect_hash: String::new() })
    }

    pub fn position(&self, id: BranchId) -> Option<usize> {
        self.component_ids.binary_search(&id).ok()
    }

    /// Flat binary form: magic, version, K, N, the two digests, ids, shed, P, Q.
    pub fn write_blob<W: Write>(&self, out: &mut W) -> Result<()> {
        out.write_all(BLOB_MAGIC)?;
        out.write_all(&BLOB_VERSION.to_le_bytes())?;
        out.write_all(&(self.k() as u64).to_le_bytes())?;
        out.write_all(&(self.n() as u64).to_le_bytes())?;
        for s in [&self.model_hash, &self.effect_hash] {
            out.write_all(&(s.len() as u32).to_le_bytes())?;
            out.write_all(s.as_bytes())?;
        }
        for id in &self.component_ids {
            out.write_all(&id.0.to_le_bytes())?;
        }
        for v in self.shed.iter().chain(&self.p).chain(&self.q) {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_blob<R: Read>(input: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != BLOB_MAGIC {
            return Err(Error::Format("not a risk-matrix blob".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        input.read_exact(&mut b4)?;
        if u32::from_le_bytes(b4) != BLOB_VERSION {
            return Err(Error::Format(format!("unsupported blob version {}", u32::from_le_bytes(b4))));
        }
        input.read_exact(&mut b8)?;
        let k = u64::from_le_bytes(b8) as usize;
        input.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        let mut text = || -> Result<String> {
            input.read_exact(&mut b4)?;
            let mut buf = vec![0u8; u32::from_le_bytes(b4) as usize];
            input.read_exact(&mut buf)?;
            String::from_utf8(buf).map_err(|_| Error::Format("digest is not UTF-8".into()))
        };
        let model_hash = text()?;
        let effect_hash = text()?;
        let mut ids = Vec::with_capacity(k);
        for _ in 0..k {
            input.read_exact(&mut b4)?;
            ids.push(BranchId(u32::from_le_bytes(b4)));
        }
        let mut floats = |len: usize| -> Result<Vec<f64>> {
            let mut buf = vec![0u8; len * 8];
            input.read_exact(&mut buf)?;
            Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
        };
        let shed = floats(n)?;
        let p = floats(k * n)?;
        let q = floats(k * n)?;
        let mut f = Self::from_parts(ids, shed, p, q)?;
        f.model_hash = model_hash;
        f.effect_hash = effect_hash;
        Ok(f)
    }
}

/// Factors plus the consequence vector for one threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct RiskMatrices {
    pub y0: f64,
    pub c: Vec<f64>,
    /// Samples with positive consequence, ascending.
    support: Vec<usize>,
    factors: Arc<SurvivalFactors>,
}

/// Builds P, Q and the shed vector from stored traces.
pub fn build_factors(
    samples: &SampleSet,
    baseline: &FailureModel,
    effect: &MaintenanceEffect,
    components: &[BranchId],
) -> Result<SurvivalFactors> {
    effect.check()?;
    let ids: Vec<BranchId> = components.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let n = samples.len();
    let rows: Vec<(Vec<f64>, Vec<f64>)> = ids
        .par_iter()
        .map(|&id| {
            let phi = baseline.params(id)?;
            let phi_bar = effect.apply(phi);
            let mut p = Vec::with_capacity(n);
            let mut q = Vec::with_capacity(n);
            for s in &samples.samples {
                let pv = gamma_factor(phi, s, id)?;
                if pv <= 0.0 {
                    return Err(Error::ZeroProbability { sample: s.index(), branch: id });
                }
                p.push(pv);
                q.push(gamma_factor(&phi_bar, s, id)?);
            }
            Ok((p, q))
        })
        .collect::<Result<_>>()?;
    let (p, q): (Vec<Vec<f64>>, Vec<Vec<f64>>) = rows.into_iter().unzip();
    let shed = samples.samples.iter().map(|s| s.shed).collect();
    let mut f = SurvivalFactors::from_parts(ids, shed, p.concat(), q.concat())?;
    f.model_hash = samples.header.model_hash.clone();
    f.effect_hash = config::effect_hash(effect);
    Ok(f)
}

pub fn build_matrices(
    samples: &SampleSet,
    baseline: &FailureModel,
    effect: &MaintenanceEffect,
    components: &[BranchId],
    y0: f64,
) -> Result<RiskMatrices> {
    Ok(RiskMatrices::new(Arc::new(build_factors(samples, baseline, effect, components)?), y0))
}

impl RiskMatrices {
    pub fn new(factors: Arc<SurvivalFactors>, y0: f64) -> Self {
        let c: Vec<f64> = factors.shed.iter().map(|&h| if h >= y0 { h } else { 0.0 }).collect();
        let support = (0..c.len()).filter(|&i| c[i] > 0.0).collect();
        Self { y0, c, support, factors }
    }

    /// The same factors at another threshold.
    pub fn with_threshold(&self, y0: f64) -> Self {
        Self::new(self.factors.clone(), y0)
    }

    pub fn factors(&self) -> &Arc<SurvivalFactors> {
        &self.factors
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn component_ids(&self) -> &[BranchId] {
        &self.factors.component_ids
    }

    pub fn p(&self, k: usize, i: usize) -> f64 {
        self.factors.p[k * self.n() + i]
    }

    pub fn q(&self, k: usize, i: usize) -> f64 {
        self.factors.q[k * self.n() + i]
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// Row positions of a strategy's components, ascending.
    pub fn rows(&self, s: &Strategy) -> Result<Vec<usize>> {
        s.iter().map(|&id| self.factors.position(id).ok_or(Error::UnknownBranch(id))).collect()
    }

    /// `w_i c_i` for the supported samples, multiplying rows in the given order.
    pub(crate) fn contributions(&self, rows: &[usize]) -> Vec<f64> {
        let n = self.n();
        let mut l: Vec<f64> = self.support.iter().map(|&i| self.c[i]).collect();
        for &r in rows {
            let ratio = &self.factors.ratio[r * n..(r + 1) * n];
            for (v, &i) in l.iter_mut().zip(&self.support) {
                *v *= ratio[i];
            }
        }
        l
    }

    pub(crate) fn risk_of_rows(&self, rows: &[usize]) -> f64 {
        if self.n() == 0 {
            return 0.0;
        }
        self.contributions(rows).iter().sum::<f64>() / self.n() as f64
    }

    pub fn estimate_risk(&self) -> f64 {
        self.risk_of_rows(&[])
    }

    pub fn strategy_weights(&self, s: &Strategy) -> Result<Vec<f64>> {
        let rows = self.rows(s)?;
        let n = self.n();
        Ok((0..n).map(|i| rows.iter().fold(1.0, |w, &r| w * self.factors.ratio[r * n + i])).collect())
    }

    pub fn estimate_risk_strategy(&self, s: &Strategy) -> Result<f64> {
        Ok(self.risk_of_rows(&self.rows(s)?))
    }

    /// One row per sample: index, shed, C, then P and Q per component.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        write!(out, "sample,shed,c")?;
        for id in self.component_ids() {
            write!(out, ",p_{id}")?;
        }
        for id in self.component_ids() {
            write!(out, ",q_{id}")?;
        }
        writeln!(out)?;
        let k = self.component_ids().len();
        for i in 0..self.n() {
            write!(out, "{i},{},{}", self.factors.shed[i], self.c[i])?;
            for r in 0..k {
                write!(out, ",{}", self.p(r, i))?;
            }
            for r in 0..k {
                write!(out, ",{}", self.q(r, i))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Matrices straight from per-component ratio rows (P = 1, Q = ratio).
    pub fn from_ratios(shed: &[f64], ratios: &[Vec<f64>], y0: f64) -> RiskMatrices {
        let ids = (1..=ratios.len() as u32).map(BranchId).collect();
        let p = vec![1.0; ratios.len() * shed.len()];
        let q = ratios.concat();
        RiskMatrices::new(Arc::new(SurvivalFactors::from_parts(ids, shed.to_vec(), p, q).unwrap()), y0)
    }

    fn strategy(ids: &[u32]) -> Strategy {
        ids.iter().map(|&i| BranchId(i)).collect()
    }

    #[test]
    fn direct_estimate() {
        let m = from_ratios(&[100.0, 0.0], &[vec![1.0, 1.0]], 0.0);
        assert_eq!(m.estimate_risk(), 50.0);
        let m = from_ratios(&[0.0, 0.0], &[vec![1.0, 1.0]], 0.0);
        assert_eq!(m.estimate_risk(), 0.0);
    }

    #[test]
    fn threshold_masks_consequences() {
        let m = from_ratios(&[10.0, 40.0], &[vec![1.0, 1.0]], 50.0);
        assert_eq!(m.c, vec![0.0, 0.0]);
        let m = m.with_threshold(0.0);
        assert_eq!(m.c, vec![10.0, 40.0]);
        assert_eq!(m.with_threshold(20.0).c, vec![0.0, 40.0]);
    }

    #[test]
    fn weights_are_ratio_products() {
        let m = from_ratios(&[1.0, 1.0], &[vec![0.3, 1.0], vec![0.5, 0.4]], 0.0);
        assert_eq!(m.strategy_weights(&strategy(&[])).unwrap(), vec![1.0, 1.0]);
        assert_eq!(m.strategy_weights(&strategy(&[1])).unwrap(), vec![0.3, 1.0]);
        let w = m.strategy_weights(&strategy(&[2, 1])).unwrap();
        assert!((w[0] - 0.15).abs() < 1e-15 && (w[1] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn reweighted_arithmetic() {
        let m = from_ratios(&[10.0, 4.0], &[vec![0.5, 1.0], vec![1.0, 0.25]], 0.0);
        assert_eq!(m.estimate_risk_strategy(&strategy(&[1, 2])).unwrap(), 3.0);
        assert_eq!(m.estimate_risk_strategy(&strategy(&[])).unwrap(), m.estimate_risk());
        assert!(matches!(m.estimate_risk_strategy(&strategy(&[9])), Err(Error::UnknownBranch(_))));
    }

    #[test]
    fn zero_p_is_rejected() {
        let err = SurvivalFactors::from_parts(vec![BranchId(4)], vec![1.0, 2.0], vec![1.0, 0.0], vec![1.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::ZeroProbability { sample: 1, branch: BranchId(4) }));
    }

    #[test]
    fn blob_round_trip() {
        let mut f = SurvivalFactors::from_parts(
            vec![BranchId(2), BranchId(7)],
            vec![0.0, 12.5, 3.0],
            vec![0.9, 0.5, 1.0, 0.25, 1.0, 0.125],
            vec![0.99, 0.05, 1.0, 0.9, 1.0, 0.0125],
        )
        .unwrap();
        f.model_hash = "abc".into();
        let mut buf = Vec::new();
        f.write_blob(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 16 + 4 + 3 + 4 + 8 + 3 * 8 * 5);
        assert_eq!(SurvivalFactors::read_blob(&mut buf.as_slice()).unwrap(), f);
    }

    #[test]
    fn csv_has_one_line_per_sample() {
        let m = from_ratios(&[10.0, 4.0], &[vec![0.5, 1.0]], 0.0);
        let mut out = Vec::new();
        m.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().next().unwrap(), "sample,shed,c,p_1,q_1");
        assert_eq!(text.lines().count(), 3);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn matrices() -> impl Strategy<Value = RiskMatrices> {
            (1usize..4, 2usize..20).prop_flat_map(|(k, n)| {
                (
                    proptest::collection::vec(0.0f64..100.0, n),
                    proptest::collection::vec(proptest::collection::vec(0.0f64..2.0, n), k),
                )
                    .prop_map(|(shed, ratios)| {
                        let k = ratios.len();
                        let ids = (1..=k as u32).map(BranchId).collect();
                        let p = ratios.iter().flatten().map(|r| if *r > 1.0 { 1.0 / r } else { 1.0 }).collect();
                        let q = ratios.iter().flatten().map(|r| if *r > 1.0 { 1.0 } else { *r }).collect();
                        let f = SurvivalFactors::from_parts(ids, shed, p, q).unwrap();
                        RiskMatrices::new(Arc::new(f), 0.0)
                    })
            })
        }

        use proptest::strategy::Strategy;

        proptest! {
            #[test]
            fn risk_is_non_increasing_in_threshold(m in matrices(), a in 0.0f64..100.0, b in 0.0f64..100.0) {
                let all: crate::risk::Strategy = m.component_ids().iter().copied().collect();
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                let r_lo = m.with_threshold(lo).estimate_risk_strategy(&all).unwrap();
                let r_hi = m.with_threshold(hi).estimate_risk_strategy(&all).unwrap();
                prop_assert!(r_hi <= r_lo);
            }

            #[test]
            fn identity_effect_changes_nothing(shed in proptest::collection::vec(0.0f64..50.0, 1..20), p in 0.01f64..1.0) {
                let n = shed.len();
                let f = SurvivalFactors::from_parts(vec![BranchId(1), BranchId(2)], shed, vec![p; 2 * n], vec![p; 2 * n]).unwrap();
                let m = RiskMatrices::new(Arc::new(f), 0.0);
                let all: crate::risk::Strategy = [BranchId(1), BranchId(2)].into();
                prop_assert_eq!(m.estimate_risk_strategy(&all).unwrap(), m.estimate_risk());
            }

            #[test]
            fn pointwise_safer_component_never_raises_risk(m in matrices()) {
                let base = m.estimate_risk();
                for (row, &id) in m.component_ids().iter().enumerate() {
                    let safer = (0..m.n()).all(|i| m.q(row, i) <= m.p(row, i));
                    if safer {
                        let s: crate::risk::Strategy = [id].into();
                        prop_assert!(m.estimate_risk_strategy(&s).unwrap() <= base);
                    }
                }
            }
        }
    }
}
