//! Spherical-harmonics fitting and the adaptive degree search on one patch.
//! Synthesizes a range field from known coefficients, fits it back, then
//! shows the per-degree error trace the codec uses to pick a patch degree.
//!
//! Run with `cargo run --example sh_fitting`.

use curl_codec::codec::{encode_patch, split_cells, PatchLayout, RefinementConfig};
use curl_codec::geometry::{DepthImage, SensorModel};
use curl_codec::spharm::{evaluate, evaluate_one, fit_least_squares, SampleSet, ShCoefficients};
use std::f64::consts::{FRAC_PI_2, PI, TAU};

fn main() {
    // plain fit: recover known degree-2 coefficients from samples
    let truth =
        ShCoefficients::new(2, vec![35.0, 0.8, -1.2, 0.5, 1.0, -0.7, 0.9, 0.3, -0.4]).unwrap();
    let mut angles = Vec::new();
    for i in 0..12 {
        for j in 0..12 {
            angles.push(((i as f64 + 0.5) * PI / 12.0, (j as f64 + 0.5) * TAU / 12.0));
        }
    }
    let targets = evaluate(&truth, &angles);
    let samples = SampleSet::new(angles, targets).unwrap();
    let (fitted, residual) = fit_least_squares(&samples, 2).unwrap();
    let worst = fitted
        .values
        .iter()
        .zip(&truth.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    println!("degree-2 fit: worst coefficient error {worst:.2e}, residual {residual:.2e} m");

    // adaptive refinement: a full-image patch over the same field
    let sensor = SensorModel::new(PI / 2.0, TAU, 8, 8, 1, 1).unwrap();
    let mut image = DepthImage::empty(sensor);
    for r in 0..8 {
        for c in 0..8 {
            let polar = FRAC_PI_2 - sensor.row_elevation(r);
            let azimuth = sensor.col_azimuth(c);
            image.set(r, c, evaluate_one(&truth, polar, azimuth));
        }
    }
    let layout = PatchLayout::new(8, 0, &sensor).unwrap();
    let cells = split_cells(&layout, 0, 0, &image);
    println!(
        "patch cells: {} training, {} testing, {} extended",
        cells.training.len(),
        cells.testing.len(),
        cells.extended.len()
    );
    let cfg = RefinementConfig::new(9.0, 1e-8, 0, 64).unwrap();
    let (encoding, trace) = encode_patch(&image, &cells, &cfg).unwrap();
    println!("degree search trace (E_t = alpha*E_a + beta*E_b):");
    for trial in &trace {
        println!(
            "  l = {}: E_a {:.3e}  E_b {:.3e}  E_t {:.3e}",
            trial.degree, trial.training_error, trial.testing_error, trial.total_error
        );
    }
    println!("selected degree: {:?}", encoding.degree());
}
