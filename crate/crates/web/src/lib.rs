//! Browser bindings. Each export takes plain numbers or a JSON string and
//! returns a JSON string; the `*_json` functions hold the logic so they can
//! be exercised off the browser.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use pluralism_core::analytics::{entropy, simplex_coords};
use pluralism_core::case::PriorSimplex;
use pluralism_core::normative::derive_prior_features;
use pluralism_core::stack::calibrate;
use pluralism_core::synth::{generate, SynthConfig};

fn to_js(r: Result<Value, String>) -> Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

/// Plurality features and triangle position of a raw (alpha, beta, gamma) score.
pub fn prior_features_json(alpha: f64, beta: f64, gamma: f64) -> Result<Value, String> {
    let prior = PriorSimplex::from_scores(alpha, beta, gamma).map_err(|e| e.to_string())?;
    let f = derive_prior_features(&prior);
    let (x, y) = simplex_coords(&prior);
    Ok(json!({
        "prior": prior.components(),
        "margin": f.margin,
        "entropy_norm": f.entropy_norm,
        "top_ratio": f.top_ratio,
        "dominant": format!("{:?}", f.dominant),
        "xy": [x, y],
    }))
}

/// Temperature-scales a distribution given as a JSON array.
pub fn calibrate_json(dist: &str, temperature: f64) -> Result<Value, String> {
    let dist: Vec<f64> = serde_json::from_str(dist).map_err(|e| format!("expected a JSON array of numbers: {e}"))?;
    let out = calibrate(&dist, temperature).map_err(|e| e.to_string())?;
    Ok(json!({
        "calibrated": out.as_slice(),
        "entropy_before": entropy(&dist, true),
        "entropy_after": entropy(out.as_slice(), true),
        "argmax": out.argmax(),
    }))
}

/// Synthetic cases placed on the school triangle, one point per case.
pub fn synthetic_simplex_json(overlap: f64, per_class: usize, seed: u64) -> Result<Value, String> {
    let cfg = SynthConfig { seed, overlap, cases_per_subtheory: per_class, ..Default::default() };
    let (cases, _) = generate(&cfg).map_err(|e| e.to_string())?;
    let mut points = Vec::with_capacity(cases.len());
    for c in &cases {
        let Some(prior) = c.prior else { continue };
        let (x, y) = simplex_coords(&prior);
        let school = c.subtheory_label.map(|s| s.school().index());
        points.push(json!({ "id": c.case_id, "x": x, "y": y, "school": school }));
    }
    Ok(json!({ "points": points }))
}

#[wasm_bindgen]
pub fn prior_features(alpha: f64, beta: f64, gamma: f64) -> Result<String, JsError> {
    to_js(prior_features_json(alpha, beta, gamma))
}

#[wasm_bindgen]
pub fn calibrate_distribution(dist: &str, temperature: f64) -> Result<String, JsError> {
    to_js(calibrate_json(dist, temperature))
}

#[wasm_bindgen]
pub fn synthetic_simplex(overlap: f64, per_class: usize, seed: u64) -> Result<String, JsError> {
    to_js(synthetic_simplex_json(overlap, per_class, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn features_of_a_known_prior() {
        let v = prior_features_json(0.5, 0.3, 0.2).unwrap();
        assert!((v["margin"].as_f64().unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(v["dominant"], "Consequentialism");
        assert!(prior_features_json(0.9, 0.9, 0.9).is_err());
    }

    #[test]
    fn calibration_sharpens() {
        let v = calibrate_json("[0.8, 0.2]", 0.5).unwrap();
        assert!((v["calibrated"][0].as_f64().unwrap() - 16.0 / 17.0).abs() < 1e-12);
        assert!(v["entropy_after"].as_f64() < v["entropy_before"].as_f64());
        assert!(calibrate_json("nope", 1.0).is_err());
    }

    #[test]
    fn synthetic_points_cover_every_case() {
        let v = synthetic_simplex_json(0.3, 4, 1).unwrap();
        assert_eq!(v["points"].as_array().unwrap().len(), 60);
        assert!(synthetic_simplex_json(1.5, 4, 1).is_err());
    }
}
