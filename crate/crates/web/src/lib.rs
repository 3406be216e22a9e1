//! Browser bindings: a Moskowitz value field, a CTM run on a builtin scenario, and the
//! distribution-free chance-constraint bound.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use wasm_bindgen::prelude::*;

use turnflow::ctm::{self, CtmSettings, MergeRule};
use turnflow::laxhopf::{closed_form, ExtendedValue, Flows, LinkGeometry, ValueCondition};
use turnflow::network::{FundamentalDiagram, LinkId, LinkKind, LinkSpec};
use turnflow::robust::{chance_to_soc, kappa};
use turnflow::scenarios::builtin;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// Vehicle-count field `M(t, x)` of a one-lane link on an `nt x nx` grid, row-major by time.
/// Points no condition reaches are NaN.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn moskowitz_field(
    free_speed: f64,
    critical_density: f64,
    jam_density: f64,
    length: f64,
    densities: Vec<f64>,
    q_in: Vec<f64>,
    q_out: Vec<f64>,
    step: f64,
    nt: usize,
    nx: usize,
) -> Result<Vec<f64>, JsError> {
    let fd = FundamentalDiagram::continuous(free_speed, critical_density, jam_density);
    if densities.is_empty() || q_in.len() != q_out.len() || q_in.is_empty() || nt < 2 || nx < 2 {
        return Err(js_err(
            "need densities, equal-length inflow and outflow, and a 2x2 grid",
        ));
    }
    if let Some(r) = densities.iter().find(|r| !(0.0..=jam_density).contains(*r)) {
        return Err(js_err(format!("density {r} outside [0, {jam_density}]")));
    }
    let spec = LinkSpec {
        id: LinkId(1),
        length,
        lanes: 1,
        segments: densities.len(),
        init_density: densities,
        fd,
        kind: LinkKind::Interior,
    };
    let g = LinkGeometry::new(&spec, step);
    let flows = Flows {
        q_in: &q_in,
        q_out: &q_out,
    };
    let steps = q_in.len();
    let conditions: Vec<ValueCondition> = (1..=g.segments())
        .map(|k| ValueCondition::Initial { k })
        .chain((1..=steps).map(|n| ValueCondition::Upstream { n }))
        .chain((1..=steps).map(|n| ValueCondition::Downstream { n }))
        .collect();
    let horizon = step * steps as f64;
    let mut field = Vec::with_capacity(nt * nx);
    for i in 0..nt {
        let t = horizon * i as f64 / (nt - 1) as f64;
        for j in 0..nx {
            let x = length * j as f64 / (nx - 1) as f64;
            let v = conditions
                .iter()
                .map(|&c| closed_form(&g, flows, c, t, x))
                .fold(ExtendedValue::PlusInfinity, ExtendedValue::min);
            field.push(v.finite().unwrap_or(f64::NAN));
        }
    }
    Ok(field)
}

/// Runs the simulator on a builtin scenario with every entry held at `fraction` of capacity.
/// Returns JSON with times, blocked vehicles and cumulative throughput per exit.
#[wasm_bindgen]
pub fn ctm_run(scenario: &str, fraction: f64, proportional_merge: bool) -> Result<String, JsError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(js_err("fraction must lie in [0, 1]"));
    }
    let mut s = builtin(scenario).map_err(js_err)?;
    s.ctm = CtmSettings {
        merge: if proportional_merge {
            MergeRule::Proportional
        } else {
            MergeRule::Priority
        },
        ..s.ctm
    };
    let controls: BTreeMap<LinkId, Vec<f64>> = s
        .network
        .controllable_links()
        .map(|l| (l.id, vec![fraction * l.capacity(); s.network.steps]))
        .collect();
    let net = ctm::scenario_network(&s, true).map_err(js_err)?;
    let m = ctm::simulate(&net, &controls).map_err(js_err)?;
    let throughput: BTreeMap<String, &Vec<f64>> = m
        .throughput
        .iter()
        .map(|(id, v)| (id.to_string(), v))
        .collect();
    Ok(serde_json::json!({
        "times": m.times,
        "blocked": m.blocked,
        "cumulative_blocked": m.cumulative_blocked,
        "throughput": throughput,
        "imbalance": m.total_imbalance,
    })
    .to_string())
}

/// Largest `x >= 0` with `P(a x <= rhs) >= 1 - alpha` for every coefficient `a` with the given
/// mean and standard deviation. Returns `[kappa, bound]`; the bound is infinite when the
/// robust coefficient is not positive.
#[wasm_bindgen]
pub fn soc_bound(mean: f64, std_dev: f64, rhs: f64, alpha: f64) -> Result<Vec<f64>, JsError> {
    let k = kappa(alpha).map_err(js_err)?;
    if std_dev.is_nan() || std_dev < 0.0 || rhs.is_nan() || rhs <= 0.0 {
        return Err(js_err("need std_dev >= 0 and rhs > 0"));
    }
    let cov = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![std_dev * std_dev, 0.0]));
    let soc = chance_to_soc(&[mean, -rhs], &cov, alpha).map_err(js_err)?;
    // The cone value is convex in x and negative at 0; bisect its sign change.
    let value = |x: f64| soc.value(&nalgebra::DVector::from_vec(vec![x, 1.0]));
    let mut hi = 1.0;
    while value(hi) <= 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Ok(vec![k, f64::INFINITY]);
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if value(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(vec![k, lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soc_bound_matches_hand_expansion() {
        // 3 * 0.2 * x + x - 1 <= 0.
        let r = soc_bound(1.0, 0.2, 1.0, 0.1).unwrap();
        assert_eq!(r[0], 3.0);
        assert!((r[1] - 0.625).abs() < 1e-12);
    }

    #[test]
    fn empty_link_field_is_zero_at_the_start() {
        let f = moskowitz_field(
            30.0,
            0.0175,
            0.225,
            600.0,
            vec![0.0; 3],
            vec![0.0; 4],
            vec![0.0; 4],
            20.0,
            5,
            7,
        )
        .unwrap();
        assert_eq!(f.len(), 35);
        assert!(f.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn ctm_run_conserves() {
        let json = ctm_run("freeway-validation", 0.8, false).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert!(v["imbalance"].as_f64().unwrap() < 1e-6);
        assert_eq!(
            v["times"].as_array().unwrap().len(),
            v["blocked"].as_array().unwrap().len()
        );
    }
}
