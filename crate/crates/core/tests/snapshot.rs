//! Frozen outputs of the default pipeline on the 57-bus case. A change here
//! means the sampled distribution or the estimator changed.

use gridrisk_core::config::SimulationConfig;
use gridrisk_core::matpower::{parse_matpower, IEEE57};
use gridrisk_core::network::BranchId;
use gridrisk_core::optimizer::sensitivity_report;
use gridrisk_core::risk::build_matrices;
use gridrisk_core::sampling::Simulator;

#[test]
fn ieee57_sensitivity_ranking() {
    let net = parse_matpower(IEEE57).unwrap();
    let cfg = SimulationConfig::default();
    let base = cfg.failure_model(&net).unwrap();
    let set = Simulator::new(&net, &base, &cfg).unwrap().generate(10_000, 7).unwrap();
    assert_eq!(set.truncated(), 0);
    let m = build_matrices(&set, &base, &cfg.maintenance, &net.maintainable_ids(), 0.0).unwrap();
    assert_eq!(m.support().len(), 114);
    let report = sensitivity_report(&m);
    assert!((report.baseline_risk - 0.5998923403238109).abs() < 1e-12);
    let top: Vec<BranchId> = report.rows.iter().take(5).map(|r| r.component).collect();
    assert_eq!(top, [41, 59, 71, 58, 65].map(BranchId));
    assert!((report.rows[0].reduction_ratio - 0.14135231654924574).abs() < 1e-12);
    assert_eq!(report.rows.len(), 17);
}
