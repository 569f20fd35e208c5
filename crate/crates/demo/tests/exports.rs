use condfgm_demo::{fit_demo_json, simulate_preview_json, smoothing_json};

#[test]
fn preview_lists_truth_and_curves() {
    let v = simulate_preview_json("s3", 6, 1).unwrap();
    assert_eq!(v["scenario"], "S3");
    assert_eq!(v["samples"].as_array().unwrap().len(), 2);
    assert_eq!(v["samples"][0]["nodes"].as_array().unwrap().len(), 6);
    assert!(!v["truth"]["g1"].as_array().unwrap().is_empty());
}

#[test]
fn fit_demo_scores_small_problem() {
    let v = fit_demo_json("S1", 4, 30, 2, "OR").unwrap();
    let f1 = v["scores"]["g0"]["f1"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&f1));
    assert_eq!(v["lambda"].as_array().unwrap().len(), 4);
}

#[test]
fn smoothing_without_noise_tracks_the_curve() {
    let v = smoothing_json("fourier", 15, 0.0, 0.0, 3).unwrap();
    let grid = v["grid"].as_array().unwrap();
    assert_eq!(grid.len(), 200);
    assert_eq!(v["fitted"].as_array().unwrap().len(), 200);
    assert_eq!(v["observed"], v["truth"]);
}

#[test]
fn bad_arguments_are_errors() {
    assert!(simulate_preview_json("S9", 6, 1).is_err());
    assert!(fit_demo_json("S1", 40, 30, 1, "OR").is_err());
    assert!(fit_demo_json("S1", 5, 30, 1, "XOR").is_err());
    assert!(smoothing_json("wavelet", 9, 0.0, 0.1, 1).is_err());
}
