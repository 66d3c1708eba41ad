use pvfault_web::{daily_profile_json, gaussian_jsd_value, run_fleet_json};
use serde_json::Value;

fn normal(x: f64, m: f64, s: f64) -> f64 {
    (-(x - m) * (x - m) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
}

/// Midpoint-rule JSD on a much finer grid than the export uses.
fn quadrature_jsd(mp: f64, sp: f64, mq: f64, sq: f64) -> f64 {
    let lo = (mp - 12.0 * sp).min(mq - 12.0 * sq);
    let hi = (mp + 12.0 * sp).max(mq + 12.0 * sq);
    let n = 200_000;
    let dx = (hi - lo) / n as f64;
    let mut total = 0.0;
    for i in 0..n {
        let x = lo + (i as f64 + 0.5) * dx;
        let (p, q) = (normal(x, mp, sp), normal(x, mq, sq));
        let m = 0.5 * (p + q);
        if p > 0.0 {
            total += 0.5 * p * (p / m).ln() * dx;
        }
        if q > 0.0 {
            total += 0.5 * q * (q / m).ln() * dx;
        }
    }
    total
}

#[test]
fn gaussian_jsd_matches_quadrature() {
    for &(mp, sp, mq, sq) in &[(0.0, 1.0, 1.0, 1.0), (0.0, 1.0, 3.0, 1.0), (2.0, 0.5, 2.5, 2.0)] {
        let got = gaussian_jsd_value(mp, sp, mq, sq, 2048).unwrap();
        let want = quadrature_jsd(mp, sp, mq, sq);
        assert!((got - want).abs() < 2e-3 * want.max(1e-3), "{got} vs {want}");
        let swapped = gaussian_jsd_value(mq, sq, mp, sp, 2048).unwrap();
        assert!((got - swapped).abs() < 1e-12);
    }
    assert_eq!(gaussian_jsd_value(1.0, 2.0, 1.0, 2.0, 512).unwrap(), 0.0);
    assert!(gaussian_jsd_value(0.0, 1.0, 1e3, 1.0, 512).unwrap() <= std::f64::consts::LN_2);
    assert!(gaussian_jsd_value(0.0, 0.0, 1.0, 1.0, 512).is_err());
}

#[test]
fn profile_c_reconstructs_power() {
    let p: Value = serde_json::from_str(&daily_profile_json(25.0, 135.0, 45.0, 100, 3).unwrap()).unwrap();
    let b: Vec<f64> = serde_json::from_value(p["b"].clone()).unwrap();
    let power: Vec<f64> = serde_json::from_value(p["power"].clone()).unwrap();
    let c: Vec<[f64; 4]> = serde_json::from_value(p["c"].clone()).unwrap();
    assert_eq!(power.len(), 24);
    assert!(power.iter().any(|&v| v > 10.0));
    for (pw, ck) in power.iter().zip(&c) {
        let back: f64 = b.iter().zip(ck).map(|(x, y)| x * y).sum();
        assert!((back - pw).abs() <= 1e-9 * pw.abs().max(1.0));
    }
    assert!(daily_profile_json(95.0, 180.0, 45.0, 100, 3).is_err());
    assert!(daily_profile_json(30.0, 180.0, 45.0, 400, 3).is_err());
}

#[test]
fn fleet_run_returns_report_and_heatmaps() {
    let req = r#"{
        "modules": [
            {"id": 1, "tilt": 30, "azimuth": 160},
            {"id": 2, "tilt": 20, "azimuth": 200},
            {"id": 3, "tilt": 35, "azimuth": 150},
            {"id": 4, "tilt": 25, "azimuth": 210}
        ],
        "training_records": 600,
        "components": 2
    }"#;
    let r: Value = serde_json::from_str(&run_fleet_json(req).unwrap()).unwrap();
    assert_eq!(r["report"]["format"], "pvfault.report/1");
    assert_eq!(r["report"]["training_records"], 600);
    for key in ["heatmap_c", "heatmap_power"] {
        let svg = r[key].as_str().unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }
    assert!(r["table"].as_str().unwrap().contains("threshold"));
    assert_eq!(run_fleet_json(r#"{"modules": []}"#).unwrap_err(), "no modules");
    assert!(run_fleet_json("not json").unwrap_err().starts_with("bad request"));
}
