use std::collections::BTreeMap;

use nalgebra::DMatrix;
use proptest::prelude::*;

use turnflow::ctm::{discretize, simulate, CtmSettings, MergeRule};
use turnflow::laxhopf::{
    brute_force_lax_hopf, closed_form, ExtendedValue, Flows, LinkGeometry, ValueCondition,
};
use turnflow::linalg::min_eigenvalue;
use turnflow::network::{FundamentalDiagram, LinkId, LinkKind, LinkSpec};
use turnflow::robust::{chance_to_soc, expand_covariance, kappa, TurningSampler};
use turnflow::scenarios::builtin;

fn continuous_fd() -> impl Strategy<Value = FundamentalDiagram> {
    (10.0..35.0f64, 0.01..0.03f64, 0.1..0.25f64)
        .prop_map(|(v, c, m)| FundamentalDiagram::continuous(v, c, m))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn flow_is_min_of_demand_and_supply(fd in continuous_fd(), s in 0.0..=1.0f64) {
        let rho = s * fd.jam_density;
        let q = fd.flow(rho).unwrap();
        let dq = fd.demand(rho).unwrap().min(fd.supply(rho).unwrap());
        prop_assert!((q - dq).abs() <= 1e-9 * fd.capacity());
        prop_assert!(q <= fd.capacity() * (1.0 + 1e-12));
        prop_assert!(q >= 0.0);
    }

    #[test]
    fn demand_rises_and_supply_falls(fd in continuous_fd(), a in 0.0..=1.0f64, b in 0.0..=1.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (lo, hi) = (lo * fd.jam_density, hi * fd.jam_density);
        prop_assert!(fd.demand(lo).unwrap() <= fd.demand(hi).unwrap() + 1e-12);
        prop_assert!(fd.supply(lo).unwrap() + 1e-12 >= fd.supply(hi).unwrap());
    }

    #[test]
    fn density_outside_range_rejected(fd in continuous_fd(), e in 1e-3..1.0f64) {
        prop_assert!(fd.flow(-e).is_err());
        prop_assert!(fd.flow(fd.jam_density * (1.0 + e)).is_err());
    }

    #[test]
    fn kappa_decreases_with_alpha(a in 0.01..0.49f64, b in 0.01..0.49f64) {
        let (ka, kb) = (kappa(a).unwrap(), kappa(b).unwrap());
        prop_assert!((ka * ka - (1.0 / a - 1.0)).abs() <= 1e-9 * ka * ka);
        if a < b {
            prop_assert!(ka > kb);
        }
    }

    #[test]
    fn soc_value_dominates_mean(
        mean in prop::collection::vec(-1.0..1.0f64, 3),
        diag in prop::collection::vec(0.0..0.01f64, 3),
        x in prop::collection::vec(-5.0..5.0f64, 3),
        alpha in 0.05..0.3f64,
    ) {
        let cov = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag));
        let soc = chance_to_soc(&mean, &cov, alpha).unwrap();
        let xv = nalgebra::DVector::from_vec(x);
        prop_assert!(soc.value(&xv) >= soc.mean.dot(&xv) - 1e-12);
    }

    #[test]
    fn expanded_covariance_is_psd(
        weights in prop::collection::vec(0.0..3.0f64, 1..4),
        v in 0.0..0.01f64,
        c in 0.0..1.0f64,
    ) {
        let node_cov = DMatrix::from_row_slice(2, 2, &[v, c * v, c * v, v]);
        let full = expand_covariance(&node_cov, &weights);
        prop_assert_eq!(full.nrows(), 2 * weights.len() + 1);
        prop_assert!(min_eigenvalue(&full) >= -1e-12);
    }

    #[test]
    fn sampled_turning_columns_are_distributions(seed in any::<u64>()) {
        let s = builtin("urban-grid").unwrap();
        for node in s.network.nodes.iter().take(6) {
            let mut sampler = TurningSampler::new(node, seed).unwrap();
            for _ in 0..5 {
                let p = sampler.sample();
                for j in 0..p.ncols() {
                    prop_assert!((p.column(j).sum() - 1.0).abs() <= 1e-12);
                    prop_assert!(p.column(j).iter().all(|&v| (0.0..=1.0).contains(&v)));
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closed_form_never_exceeds_grid(
        fd in continuous_fd(),
        rho in 0.0..=1.0f64,
        inflow in prop::collection::vec(0.0..=1.0f64, 3),
        outflow in prop::collection::vec(0.0..=1.0f64, 3),
        which in 0..3usize,
        n in 1..=3usize,
        ft in 0.0..=1.0f64,
        fx in 0.0..=1.0f64,
    ) {
        let spec = LinkSpec {
            id: LinkId(1),
            length: 400.0,
            lanes: 2,
            segments: 1,
            init_density: vec![rho * fd.jam_density],
            fd,
            kind: LinkKind::Interior,
        };
        let g = LinkGeometry::new(&spec, 10.0);
        let cap = g.fd.capacity();
        let q_in: Vec<f64> = inflow.iter().map(|f| f * cap).collect();
        let q_out: Vec<f64> = outflow.iter().map(|f| f * cap).collect();
        let flows = Flows { q_in: &q_in, q_out: &q_out };
        let cond = match which {
            0 => ValueCondition::Initial { k: 1 },
            1 => ValueCondition::Upstream { n },
            _ => ValueCondition::Downstream { n },
        };
        let (t, x) = (ft * 30.0, fx * 400.0);
        let exact = closed_form(&g, flows, cond, t, x);
        // Coarse on purpose: any grid minimum upper-bounds the true infimum.
        let grid = brute_force_lax_hopf(&g, flows, cond, t, x, 50);
        match (exact, grid) {
            (ExtendedValue::Finite(a), ExtendedValue::Finite(b)) => prop_assert!(a <= b + 1e-9),
            (ExtendedValue::Finite(_), ExtendedValue::PlusInfinity) => {}
            (a, b) => prop_assert_eq!(a, b),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ctm_conserves_vehicles(
        rates in prop::collection::vec(0.0..=1.0f64, 4),
        proportional in any::<bool>(),
        name in prop::sample::select(vec!["freeway-free", "freeway-congested", "freeway-validation"]),
    ) {
        let s = builtin(name).unwrap();
        let settings = CtmSettings {
            merge: if proportional { MergeRule::Proportional } else { MergeRule::Priority },
            ..CtmSettings::default()
        };
        let net = discretize(&s.network, &settings).unwrap();
        let controls: BTreeMap<LinkId, Vec<f64>> = s
            .network
            .controllable_links()
            .zip(&rates)
            .map(|(l, r)| (l.id, vec![r * l.capacity(); s.network.steps]))
            .collect();
        let m = simulate(&net, &controls).unwrap();
        prop_assert!(m.conserves());
        prop_assert!(m.max_occupancy_violation == 0.0);
        prop_assert!(m.cumulative_blocked.windows(2).all(|w| w[1] >= w[0]));
        for series in m.throughput.values() {
            prop_assert!(series.windows(2).all(|w| w[1] >= w[0]));
        }
    }
}
