//! Numerical differential geometry on metric fields: Christoffel symbols
//! by central differences, RK4 geodesic integration, energy conservation,
//! and next-point prediction by geodesic continuation.
//!
//! Run with: cargo run --example geodesic_playground

use nalgebra::DMatrix;
use reality_forge::geodesic::{
    christoffel, integrate_geodesic, predict_next, AnalyticMetric, Metric,
};

fn main() {
    // Conformally flat plane g = exp(2 a.x) I: geodesics bend away from
    // the growth direction of the conformal factor.
    let a = [0.6, -0.3];
    let metric = AnalyticMetric {
        dim: 2,
        f: move |x: &[f64]| DMatrix::identity(2, 2) * (2.0 * (a[0] * x[0] + a[1] * x[1])).exp(),
    };

    // Closed form: Gamma^k_ij = d^k_i a_j + d^k_j a_i - d_ij a_k.
    let gamma = christoffel(&metric, &[0.2, 0.1], 1e-4).expect("christoffel");
    println!("Gamma^0 at (0.2, 0.1):");
    for i in 0..2 {
        println!("  [{:+.6} {:+.6}]   (exact [{:+.6} {:+.6}])",
            gamma[0][(i, 0)], gamma[0][(i, 1)],
            if i == 0 { a[0] } else { a[1] },
            if i == 0 { a[1] } else { -a[0] },
        );
    }

    let path = integrate_geodesic(&metric, &[0.0, 0.0], &[0.5, 0.2], 0.01, 300, 1e-4)
        .expect("integration");
    let energy = |x: &[f64], v: &[f64]| {
        let g = metric.metric_at(x).unwrap();
        (0..2).map(|i| (0..2).map(|j| g[(i, j)] * v[i] * v[j]).sum::<f64>()).sum::<f64>()
    };
    let e0 = energy(&path.points[0], &path.velocities[0]);
    let drift = path
        .points
        .iter()
        .zip(&path.velocities)
        .map(|(x, v)| (energy(x, v) / e0 - 1.0).abs())
        .fold(0.0, f64::max);
    let end = path.points.last().unwrap();
    println!("\n300 RK4 steps: end ({:+.4}, {:+.4}), energy drift {drift:.1e}", end[0], end[1]);

    // Continue an observed polyline one interval forward.
    let observed: Vec<Vec<f64>> = path.points.iter().step_by(30).cloned().collect();
    let pred = predict_next(&metric, &observed, 16, 1e-4).expect("prediction");
    println!(
        "prediction from {} observed points: ({:+.4}, {:+.4}), truncated = {}",
        observed.len(),
        pred.point[0],
        pred.point[1],
        pred.truncated
    );
}
