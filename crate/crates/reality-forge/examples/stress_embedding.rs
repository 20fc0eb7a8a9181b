//! Embed a layered skeleton into R^{2+1} by stress descent and compare the
//! recovered geometry with the planted one.
//!
//! Run with: cargo run --release --example stress_embedding

use reality_forge::clicklog::{synthesize, SyntheticConfig, SyntheticMode};
use reality_forge::embedding::{embed_incremental, procrustes_map, EmbedParams};
use reality_forge::prespace::{build_skeleton, complete_layer, DistanceScheme};

fn main() {
    let config = SyntheticConfig {
        num_streams: 12,
        stream_len: 15,
        mode: SyntheticMode::PlantedGeodesic,
        latent_dim: 2,
        step_len: 0.02,
        start_span: 0.3,
        ..SyntheticConfig::default()
    };
    let synth = synthesize(&config, 7).expect("synthetic streams");
    let latent = synth.latent.as_ref().expect("planted mode");

    let skeleton = build_skeleton(&synth.collection, DistanceScheme::Cosine, 8);
    let params = EmbedParams {
        n: 2,
        seed: 7,
        temporal_stiffness: 1e-5,
        time_scale: config.step_len,
        hinge_above: Some(0.45),
        max_iters: 8000,
        tol: 1e-14,
    };

    // Solve the first layer densely, then grow layer by layer along the
    // stream threads; folds show up as visibly higher final stress.
    let dense0 = complete_layer(&synth.collection, DistanceScheme::Cosine, 0);
    let emb = embed_incremental(&skeleton, &params, 16, 3, dense0.as_ref()).expect("embedding");
    println!("final stress {:.3e} after {} accepted steps", emb.final_stress, emb.stress_trace.len());

    // Rigidly align the spatial coordinates onto the planted plane.
    let reference: Vec<Vec<f64>> = emb
        .points
        .iter()
        .map(|p| latent[p.stream_index][p.seq].clone())
        .collect();
    let spatial: Vec<Vec<f64>> = emb.coords.iter().map(|x| x[1..].to_vec()).collect();
    let (map, residual) = procrustes_map(&reference, &spatial).expect("alignment");
    let rms = (residual / reference.len() as f64).sqrt();
    println!("alignment rms {rms:.3e}");

    println!("\nstream 0, aligned vs planted:");
    for (p, x) in emb.points.iter().zip(&emb.coords) {
        if p.stream_index != 0 {
            continue;
        }
        let aligned = map.apply(&x[1..]);
        let truth = &latent[0][p.seq];
        println!(
            "  seq {:>2}  ({:+.4}, {:+.4})  vs  ({:+.4}, {:+.4})",
            p.seq, aligned[0], aligned[1], truth[0], truth[1]
        );
    }
}
