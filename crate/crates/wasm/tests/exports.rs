use serde_json::Value;
use steklov_wasm::{optimize, shape_derivative, solve_cap};

fn parse(text: String) -> Value {
    let v: Value = serde_json::from_str(&text).unwrap();
    assert!(v.get("error").is_none(), "{v}");
    v
}

#[test]
fn solve_cap_returns_a_picture() {
    let v = parse(solve_cap(0.2, 2.0, 5.0, 0.0, 1.0));
    assert!(v["converged"].as_bool().unwrap());
    let pic = &v["picture"];
    let nv = pic["vertices"].as_array().unwrap().len();
    assert_eq!(pic["u"].as_array().unwrap().len(), nv);
    assert_eq!(pic["edges"].as_array().unwrap().len(), pic["phi"].as_array().unwrap().len());
    let lambda = v["lambda"].as_f64().unwrap();
    let free = parse(solve_cap(0.2, 2.0, 0.0, 0.0, 1.0))["lambda"].as_f64().unwrap();
    assert!(lambda > free);
}

#[test]
fn optimize_trace_descends() {
    let v = parse(optimize(0.2, 2.0, 5.0, 1.5, 4));
    let lambdas: Vec<f64> = v["lambdas"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert!(lambdas.windows(2).all(|w| w[1] <= w[0] + 1e-10));
    assert!(v["arc_defect"].as_f64().unwrap() <= v["defect_bound"].as_f64().unwrap());
}

#[test]
fn shape_derivative_agrees_with_differences() {
    let v = parse(shape_derivative(0.1, 2.0, 1.0, 0.05, 1.62));
    assert!(v["sign_consistent"].as_bool().unwrap());
    assert!(v["relative_error"].as_f64().unwrap() < 0.05);
}

#[test]
fn bad_inputs_report_errors() {
    for text in [solve_cap(0.001, 2.0, 1.0, 0.0, 1.0), optimize(0.2, 2.0, 1.0, 100.0, 1), solve_cap(0.2, 0.5, 1.0, 0.0, 1.0)] {
        let v: Value = serde_json::from_str(&text).unwrap();
        assert!(v["error"].is_string(), "{v}");
    }
}
