//! Browser bindings. The plain functions return JSON strings and are what the
//! native tests exercise; the `wasm` module only wraps them.

use nhgeo_core::connection::torsion_data;
use nhgeo_core::extremal::{rhs_family, rhs_limit, RhsSpec};
use nhgeo_core::integrate::integrate;
use nhgeo_core::models::ModelSpec;
use nhgeo_core::splitting::{solve_canonical_splitting, SplitError};
use nhgeo_core::{ExtremalState, FramedGeometry, IntegratorConfig};
use serde::Serialize;

fn build(model: &str) -> Result<(ModelSpec, FramedGeometry), String> {
    let spec = ModelSpec::from_id(model.trim()).map_err(|e| e.to_string())?;
    let g = spec.build().map_err(|e| e.to_string())?;
    Ok((spec, g))
}

fn check_len(what: &str, v: &[f64], want: usize) -> Result<(), String> {
    if v.len() != want {
        return Err(format!("{what}: expected {want} values, got {}", v.len()));
    }
    Ok(())
}

#[derive(Serialize)]
struct Run {
    delta: f64,
    x: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct Paths<'a> {
    model: String,
    coords: &'a [String],
    times: Vec<f64>,
    runs: Vec<Run>,
}

/// Trajectories from the origin for each `δ` in `deltas` (0 is the limit system).
pub fn trajectories(
    model: &str,
    alpha: &[f64],
    nu: &[f64],
    deltas: &[f64],
    t_end: f64,
    samples: usize,
) -> Result<String, String> {
    let (spec, g) = build(model)?;
    let (m, n) = (g.dim(), g.rank_d());
    check_len("alpha", alpha, n)?;
    check_len("nu", nu, g.rank_q())?;
    let s0 = ExtremalState::new(vec![0.0; m], alpha.to_vec(), nu.to_vec());
    let cfg = IntegratorConfig { t_end, sample_count: samples, ..IntegratorConfig::default() };
    let mut times = vec![];
    let mut runs = vec![];
    for &d in deltas {
        let sol = if d == 0.0 {
            integrate(|_, y: &[f64]| rhs_limit(&ExtremalState::from_flat(y, m, n), &g).map(|r| r.to_flat()), &s0.to_flat(), &cfg)
        } else {
            let rs = RhsSpec::new(&g, d).map_err(|e| e.to_string())?;
            integrate(|_, y: &[f64]| rhs_family(&ExtremalState::from_flat(y, m, n), &rs).map(|r| r.to_flat()), &s0.to_flat(), &cfg)
        }
        .map_err(|e| e.to_string())?;
        times = sol.times;
        runs.push(Run { delta: d, x: sol.states.into_iter().map(|y| y[..m].to_vec()).collect() });
    }
    let out = Paths { model: spec.id(), coords: g.coord_names(), times, runs };
    Ok(serde_json::to_string(&out).expect("serializes"))
}

/// Connection and torsion blocks at `point`.
pub fn torsion(model: &str, point: &[f64]) -> Result<String, String> {
    let (spec, g) = build(model)?;
    check_len("point", point, g.dim())?;
    let data = g.frame_data(point).map_err(|e| e.to_string())?;
    let td = torsion_data(&data);
    let v = serde_json::json!({ "model": spec.id(), "n": data.n, "l": data.l, "blocks": td });
    Ok(v.to_string())
}

/// Canonical splitting report at `point`; a singular torsion map is reported, not an error.
pub fn split(model: &str, point: &[f64]) -> Result<String, String> {
    let (spec, g) = build(model)?;
    check_len("point", point, g.dim())?;
    let v = match solve_canonical_splitting(&g, point) {
        Ok(s) => serde_json::json!({
            "model": spec.id(), "status": "ok", "f": s.change.rows(),
            "u_before": s.u_before, "u_after": s.u_after, "report": s.report,
        }),
        Err(SplitError::NotInjective { report }) => {
            serde_json::json!({ "model": spec.id(), "status": "not_injective", "report": report })
        }
        Err(e) => return Err(e.to_string()),
    };
    Ok(v.to_string())
}

#[cfg(target_arch = "wasm32")]
mod wasm {
    use wasm_bindgen::prelude::*;

    #[wasm_bindgen]
    pub fn trajectories(
        model: &str,
        alpha: Vec<f64>,
        nu: Vec<f64>,
        deltas: Vec<f64>,
        t_end: f64,
        samples: usize,
    ) -> Result<String, JsError> {
        super::trajectories(model, &alpha, &nu, &deltas, t_end, samples).map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen]
    pub fn torsion(model: &str, point: Vec<f64>) -> Result<String, JsError> {
        super::torsion(model, &point).map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen]
    pub fn split(model: &str, point: Vec<f64>) -> Result<String, JsError> {
        super::split(model, &point).map_err(|e| JsError::new(&e))
    }
}
