//! Projection of the layered skeleton into `R^{n+1}`: the time coordinate is
//! fixed to `layer × Δt`, the `n` spatial coordinates come from iterative
//! stress descent over skeleton edge lengths, with a thread-continuity
//! penalty tying consecutive clicks of a stream together.

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prespace::{EdgeKind, Layer, LayeredSkeleton, PointRef};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("skeleton has no points")]
    EmptySkeleton,
    #[error("no coordinates for point ({0}, {1})")]
    MissingCoord(usize, usize),
    #[error("invalid embedding parameters: {0}")]
    BadParams(String),
    #[error("point sets have mismatched size or dimension")]
    DimensionMismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedParams {
    /// Spatial dimension n (the embedding lives in `R^{n+1}`).
    pub n: usize,
    pub max_iters: usize,
    /// Relative stress improvement threshold for termination.
    pub tol: f64,
    /// Temporal spacing Δt between consecutive layers.
    pub time_scale: f64,
    /// Weight λ of the thread-continuity penalty.
    pub temporal_stiffness: f64,
    /// Edges at least this long act as lower bounds only (they push points
    /// apart but never pull them together). Saturating dissimilarities
    /// under-measure long distances, so such edges are trustworthy only as
    /// minimum separations. `None` keeps every edge symmetric.
    #[serde(default)]
    pub hinge_above: Option<f64>,
    pub seed: u64,
}

impl Default for EmbedParams {
    fn default() -> Self {
        EmbedParams {
            n: 2,
            max_iters: 2000,
            tol: 1e-9,
            time_scale: 1.0,
            temporal_stiffness: 0.1,
            hinge_above: None,
            seed: 0,
        }
    }
}

impl EmbedParams {
    fn validate(&self) -> Result<(), EmbedError> {
        if self.n == 0 || self.max_iters == 0 || self.tol <= 0.0 || self.time_scale <= 0.0 {
            return Err(EmbedError::BadParams(
                "n, max_iters, tol, time_scale must be positive".to_string(),
            ));
        }
        if self.temporal_stiffness < 0.0 {
            return Err(EmbedError::BadParams(
                "temporal_stiffness must be nonnegative".to_string(),
            ));
        }
        if let Some(h) = self.hinge_above {
            if h <= 0.0 {
                return Err(EmbedError::BadParams(
                    "hinge_above must be positive".to_string(),
                ));
            }
        }
        Ok(())
    }
}

/// Coordinates in `R^{n+1}`; index 0 is time, fixed to `layer × Δt`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpacetimeEmbedding {
    pub points: Vec<PointRef>,
    /// coords[i] has length n+1 and belongs to points[i].
    pub coords: Vec<Vec<f64>>,
    pub params: EmbedParams,
    pub final_stress: f64,
    /// Stress after initialization and after each accepted step.
    pub stress_trace: Vec<f64>,
}

impl SpacetimeEmbedding {
    pub fn coord(&self, p: PointRef) -> Option<&[f64]> {
        self.points
            .iter()
            .position(|&q| q == p)
            .map(|i| self.coords[i].as_slice())
    }

    /// CSV rows `stream,seq,t,x1..xn` with a header.
    pub fn to_csv(&self) -> String {
        let n = self.params.n;
        let mut out = String::from("stream,seq,t");
        for a in 1..=n {
            write!(out, ",x{a}").unwrap();
        }
        out.push('\n');
        for (p, x) in self.points.iter().zip(&self.coords) {
            write!(out, "{},{}", p.stream_index, p.seq).unwrap();
            for v in x {
                write!(out, ",{:.16e}", v).unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// JSON sidecar with the parameters and the final stress.
    pub fn sidecar_json(&self) -> String {
        serde_json::to_string_pretty(&serde_json::json!({
            "params": self.params,
            "final_stress": self.final_stress,
        }))
        .expect("sidecar serializes")
            + "\n"
    }
}

/// Normalized edge stress plus thread-continuity penalty:
/// `Σ_e (‖Δx‖_s − d_e)² / Σ_e d_e²  +  λ Σ_threads ‖Δx‖_s²`
/// where `‖·‖_s` ignores the time coordinate.
pub fn stress(
    skeleton: &LayeredSkeleton,
    points: &[PointRef],
    coords: &[Vec<f64>],
    lambda: f64,
) -> Result<f64, EmbedError> {
    let index: HashMap<PointRef, usize> = points.iter().copied().enumerate().map(|(i, p)| (p, i)).collect();
    let mut misfit = 0.0;
    let mut denom = 0.0;
    let mut penalty = 0.0;
    for e in &skeleton.edges {
        let i = *index
            .get(&e.a)
            .ok_or(EmbedError::MissingCoord(e.a.stream_index, e.a.seq))?;
        let j = *index
            .get(&e.b)
            .ok_or(EmbedError::MissingCoord(e.b.stream_index, e.b.seq))?;
        let s2: f64 = coords[i][1..]
            .iter()
            .zip(&coords[j][1..])
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        let s = s2.sqrt();
        misfit += (s - e.length) * (s - e.length);
        denom += e.length * e.length;
        if e.kind == EdgeKind::Thread {
            penalty += s2;
        }
    }
    let edge_term = if denom > 0.0 { misfit / denom } else { misfit };
    Ok(edge_term + lambda * penalty)
}

/// Gradient descent with backtracking line search on the spatial block of
/// `coords`, at thread-penalty weight `lambda`. Returns the accepted-stress
/// trace (starting with the initial value).
fn descend(
    edges: &[(usize, usize, f64, bool, bool)],
    denom: f64,
    coords: &mut Vec<Vec<f64>>,
    n: usize,
    lambda: f64,
    max_iters: usize,
    tol: f64,
) -> Vec<f64> {
    descend_masked(edges, denom, coords, n, lambda, max_iters, tol, None)
}

/// [`descend`] with an optional mask: points whose `free` entry is false
/// keep their coordinates (their edges still contribute to the objective).
#[allow(clippy::too_many_arguments)]
fn descend_masked(
    edges: &[(usize, usize, f64, bool, bool)],
    denom: f64,
    coords: &mut Vec<Vec<f64>>,
    n: usize,
    lambda: f64,
    max_iters: usize,
    tol: f64,
    free: Option<&[bool]>,
) -> Vec<f64> {
    let eval = |coords: &[Vec<f64>]| -> f64 {
        let mut misfit = 0.0;
        let mut penalty = 0.0;
        for &(i, j, d, thread, hinge) in edges {
            let s2: f64 = coords[i][1..]
                .iter()
                .zip(&coords[j][1..])
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            let s = s2.sqrt();
            if !(hinge && s >= d) {
                misfit += (s - d) * (s - d);
            }
            if thread {
                penalty += s2;
            }
        }
        misfit / denom + lambda * penalty
    };

    let mut current = eval(coords);
    let mut trace = vec![current];
    let mut step = 0.1;
    let mut grad = vec![vec![0.0f64; n]; coords.len()];
    let mut delta = vec![0.0f64; n];
    for _ in 0..max_iters {
        for g in &mut grad {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        for &(i, j, d, thread, hinge) in edges {
            for (a, slot) in delta.iter_mut().enumerate() {
                *slot = coords[i][1 + a] - coords[j][1 + a];
            }
            let s2: f64 = delta.iter().map(|v| v * v).sum();
            let s = s2.sqrt();
            let mut coeff = 0.0;
            if s > 0.0 && !(hinge && s >= d) {
                coeff += 2.0 * (s - d) / (denom * s);
            }
            if thread {
                coeff += 2.0 * lambda;
            }
            for (a, v) in delta.iter().enumerate() {
                grad[i][a] += coeff * v;
                grad[j][a] -= coeff * v;
            }
        }
        if let Some(mask) = free {
            for (g, &f) in grad.iter_mut().zip(mask) {
                if !f {
                    g.iter_mut().for_each(|v| *v = 0.0);
                }
            }
        }
        // Backtracking line search: halve until the stress decreases.
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<Vec<f64>> = coords
                .iter()
                .zip(&grad)
                .map(|(x, g)| {
                    let mut y = x.clone();
                    for a in 0..n {
                        y[1 + a] -= step * g[a];
                    }
                    y
                })
                .collect();
            let value = eval(&trial);
            if value < current {
                *coords = trial;
                current = value;
                trace.push(current);
                accepted = true;
                step *= 1.5;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        let len = trace.len();
        if len >= 2 {
            let prev = trace[len - 2];
            if prev - current < tol * prev.max(f64::MIN_POSITIVE) {
                break;
            }
        }
    }
    trace
}

fn indexed_edges(
    skeleton: &LayeredSkeleton,
    points: &[PointRef],
    hinge_above: Option<f64>,
) -> (Vec<(usize, usize, f64, bool, bool)>, f64) {
    let index: HashMap<PointRef, usize> =
        points.iter().copied().enumerate().map(|(i, p)| (p, i)).collect();
    let hinge_at = hinge_above.unwrap_or(f64::INFINITY);
    let edges: Vec<(usize, usize, f64, bool, bool)> = skeleton
        .edges
        .iter()
        .map(|e| {
            (
                index[&e.a],
                index[&e.b],
                e.length,
                e.kind == EdgeKind::Thread,
                e.length >= hinge_at,
            )
        })
        .collect();
    let denom: f64 = edges.iter().map(|&(_, _, d, _, _)| d * d).sum();
    let denom = if denom > 0.0 { denom } else { 1.0 };
    (edges, denom)
}

/// Embed the skeleton: fixed time coordinates, seeded uniform spatial
/// initialization in `[-0.5, 0.5]^n`, then gradient descent on the stress
/// with backtracking line search. Deterministic for fixed inputs; the
/// accepted stress sequence is nonincreasing.
pub fn embed(skeleton: &LayeredSkeleton, params: &EmbedParams) -> Result<SpacetimeEmbedding, EmbedError> {
    embed_annealed(skeleton, params, &[])
}

/// [`embed`] with a thread-stiffness continuation schedule: the descent
/// runs once per entry of `schedule` (warm-starting each stage from the
/// previous one) and a final time at `params.temporal_stiffness`. A stiff
/// start locks the layers into a common rigid layout and suppresses the
/// slow inter-layer twist that plain descent from noise falls into; the
/// later stages release the threads. `schedule` entries are absolute
/// stiffness values, typically decreasing. An empty schedule is exactly
/// single-stage descent.
pub fn embed_annealed(
    skeleton: &LayeredSkeleton,
    params: &EmbedParams,
    schedule: &[f64],
) -> Result<SpacetimeEmbedding, EmbedError> {
    params.validate()?;
    if schedule.iter().any(|&l| l < 0.0 || !l.is_finite()) {
        return Err(EmbedError::BadParams(
            "stiffness schedule entries must be finite and nonnegative".into(),
        ));
    }
    let points: Vec<PointRef> = skeleton.points().collect();
    if points.is_empty() {
        return Err(EmbedError::EmptySkeleton);
    }
    let n = params.n;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut coords: Vec<Vec<f64>> = points
        .iter()
        .map(|p| {
            let mut x = Vec::with_capacity(n + 1);
            x.push(p.seq as f64 * params.time_scale);
            for _ in 0..n {
                x.push(rng.gen_range(-0.5..0.5));
            }
            x
        })
        .collect();

    let (edges, denom) = indexed_edges(skeleton, &points, params.hinge_above);
    for &lambda in schedule {
        descend(
            &edges,
            denom,
            &mut coords,
            n,
            lambda,
            params.max_iters,
            params.tol,
        );
    }
    let trace = descend(
        &edges,
        denom,
        &mut coords,
        n,
        params.temporal_stiffness,
        params.max_iters,
        params.tol,
    );

    Ok(SpacetimeEmbedding {
        points,
        coords,
        params: params.clone(),
        final_stress: *trace.last().expect("trace is nonempty"),
        stress_trace: trace,
    })
}

/// Single descent stage from caller-provided spatial coordinates (one row
/// per skeleton point, in skeleton point order). Time coordinates are
/// overwritten with `layer × Δt` regardless of the initializer's values.
pub fn embed_from(
    skeleton: &LayeredSkeleton,
    params: &EmbedParams,
    spatial_init: &[Vec<f64>],
) -> Result<SpacetimeEmbedding, EmbedError> {
    params.validate()?;
    let points: Vec<PointRef> = skeleton.points().collect();
    if points.is_empty() {
        return Err(EmbedError::EmptySkeleton);
    }
    let n = params.n;
    if spatial_init.len() != points.len() || spatial_init.iter().any(|x| x.len() != n) {
        return Err(EmbedError::BadParams(
            "spatial_init must provide one n-vector per skeleton point".into(),
        ));
    }
    let mut coords: Vec<Vec<f64>> = points
        .iter()
        .zip(spatial_init)
        .map(|(p, x)| {
            let mut row = Vec::with_capacity(n + 1);
            row.push(p.seq as f64 * params.time_scale);
            row.extend(x.iter().copied());
            row
        })
        .collect();
    let (edges, denom) = indexed_edges(skeleton, &points, params.hinge_above);
    let trace = descend(
        &edges,
        denom,
        &mut coords,
        n,
        params.temporal_stiffness,
        params.max_iters,
        params.tol,
    );
    Ok(SpacetimeEmbedding {
        points,
        coords,
        params: params.clone(),
        final_stress: *trace.last().expect("trace is nonempty"),
        stress_trace: trace,
    })
}

/// Layer-by-layer embedding: descend on the first layer alone (seeded
/// uniform start), then repeatedly append the next layer — each new point
/// initialized at its thread predecessor's position — and relax the grown
/// subgraph. A final descent runs over the whole skeleton.
///
/// Plain descent from noise on a large skeleton reliably lands in folded
/// local minima; growing along the time axis keeps every stage a small
/// perturbation of an already-sound layout and tracks the global optimum
/// far more closely, while remaining deterministic gradient descent.
pub fn embed_incremental(
    skeleton: &LayeredSkeleton,
    params: &EmbedParams,
    first_layer_restarts: u64,
    growth_attempts: u64,
    dense_first_layer: Option<&LayeredSkeleton>,
) -> Result<SpacetimeEmbedding, EmbedError> {
    params.validate()?;
    if skeleton.layers.is_empty() {
        return Err(EmbedError::EmptySkeleton);
    }
    let n = params.n;

    // The first layer fixes the global arrangement of streams, so it gets a
    // best-of-restarts solve, preferably on a complete distance graph of the
    // layer; later stages are local.
    let first = {
        let layer0 = skeleton.layers[0].clone();
        let member: std::collections::HashSet<PointRef> =
            layer0.points.iter().copied().collect();
        let sub = LayeredSkeleton {
            edges: skeleton
                .edges
                .iter()
                .filter(|e| member.contains(&e.a) && member.contains(&e.b))
                .copied()
                .collect(),
            layers: vec![layer0],
        };
        let solve_on = dense_first_layer.unwrap_or(&sub);
        let mut best: Option<SpacetimeEmbedding> = None;
        for offset in 0..first_layer_restarts.max(1) {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(offset));
            let init: Vec<Vec<f64>> = solve_on
                .points()
                .map(|_| (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect())
                .collect();
            let e = embed_from(solve_on, params, &init)?;
            if best
                .as_ref()
                .map_or(true, |b| e.final_stress < b.final_stress)
            {
                best = Some(e);
            }
        }
        best.expect("at least one restart")
    };

    // Jitter scale for growth retries: a fraction of the typical thread step.
    let mut thread_lengths: Vec<f64> = skeleton
        .edges
        .iter()
        .filter(|e| e.kind == EdgeKind::Thread)
        .map(|e| e.length)
        .collect();
    thread_lengths.sort_by(|a, b| a.total_cmp(b));
    let jitter_base = thread_lengths
        .get(thread_lengths.len() / 2)
        .copied()
        .unwrap_or(0.0);

    // Growing layer by layer is greedy: a point seeded on its thread
    // predecessor can settle into a folded branch that the later full descent
    // cannot unfold. Retry the whole growth with jittered seeds and keep the
    // configuration with the lowest final stress (attempt 0 is jitter-free).
    let mut best: Option<SpacetimeEmbedding> = None;
    for attempt in 0..growth_attempts.max(1) {
        let mut jitter_rng = ChaCha8Rng::seed_from_u64(
            params.seed.wrapping_add(0x9e37_79b9).wrapping_add(attempt),
        );
        // Escalating amplitude: early attempts explore near the greedy
        // placement, later ones can hop over basin walls a few steps wide.
        let jitter = 0.5 * jitter_base * attempt as f64;
        let mut placed: HashMap<PointRef, Vec<f64>> = HashMap::new();
        for (p, x) in first.points.iter().zip(&first.coords) {
            placed.insert(*p, x[1..].to_vec());
        }
        for upto in 1..skeleton.layers.len() {
            let layers: Vec<Layer> = skeleton.layers[..=upto].to_vec();
            let member: std::collections::HashSet<PointRef> =
                layers.iter().flat_map(|l| l.points.iter().copied()).collect();
            let sub = LayeredSkeleton {
                edges: skeleton
                    .edges
                    .iter()
                    .filter(|e| member.contains(&e.a) && member.contains(&e.b))
                    .copied()
                    .collect(),
                layers,
            };
            let init: Vec<Vec<f64>> = sub
                .points()
                .map(|p| {
                    if let Some(x) = placed.get(&p) {
                        return x.clone();
                    }
                    let pred = PointRef {
                        stream_index: p.stream_index,
                        seq: p.seq.wrapping_sub(1),
                    };
                    let prev = PointRef {
                        stream_index: p.stream_index,
                        seq: p.seq.wrapping_sub(2),
                    };
                    // Inertial seed: continue the thread's last step, so
                    // weakly constrained points start moving instead of
                    // collapsing onto their predecessor.
                    let mut x = match (placed.get(&pred), placed.get(&prev)) {
                        (Some(a), Some(b)) => {
                            a.iter().zip(b).map(|(u, v)| 2.0 * u - v).collect()
                        }
                        (Some(a), None) => a.clone(),
                        _ => vec![0.0; n],
                    };
                    for c in x.iter_mut() {
                        *c += jitter_rng.gen_range(-1.0..1.0) * jitter;
                    }
                    x
                })
                .collect();
            let stage = embed_from(&sub, params, &init)?;
            for (p, x) in stage.points.iter().zip(&stage.coords) {
                placed.insert(*p, x[1..].to_vec());
            }
        }
        let init: Vec<Vec<f64>> = skeleton
            .points()
            .map(|p| placed[&p].clone())
            .collect();
        let e = embed_from(skeleton, params, &init)?;
        if best
            .as_ref()
            .map_or(true, |b| e.final_stress < b.final_stress)
        {
            best = Some(e);
        }
    }
    Ok(best.expect("at least one attempt"))
}

/// Local repair for folded stream tails. Greedy layer-by-layer growth can
/// leave the last few clicks of a stream in a wrong basin that full
/// descent cannot exit (the tail's own edges are locally consistent). For
/// each stream this re-grows the last `tail_len` points as straight rays
/// in `restarts` seeded directions (thread steps at their measured
/// lengths, all other points frozen), descends only the tail, and keeps
/// the relocation when it lowers the objective. Ends with a full descent.
pub fn refine_tails(
    skeleton: &LayeredSkeleton,
    params: &EmbedParams,
    emb: &SpacetimeEmbedding,
    tail_len: usize,
    restarts: usize,
    rounds: usize,
) -> Result<SpacetimeEmbedding, EmbedError> {
    params.validate()?;
    let n = params.n;
    let points = emb.points.clone();
    let mut coords = emb.coords.clone();
    let (edges, denom) = indexed_edges(skeleton, &points, params.hinge_above);
    let index: HashMap<PointRef, usize> =
        points.iter().copied().enumerate().map(|(i, p)| (p, i)).collect();
    // Measured thread lengths keyed by the later endpoint.
    let mut thread_len: HashMap<PointRef, f64> = HashMap::new();
    for e in &skeleton.edges {
        if e.kind == EdgeKind::Thread {
            thread_len.insert(e.b.max(e.a), e.length);
        }
    }
    let mut streams: Vec<usize> = points.iter().map(|p| p.stream_index).collect();
    streams.sort_unstable();
    streams.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x7a11_5eed);
    for _ in 0..rounds.max(1) {
        for &s in &streams {
            let mut seqs: Vec<usize> = points
                .iter()
                .filter(|p| p.stream_index == s)
                .map(|p| p.seq)
                .collect();
            seqs.sort_unstable();
            if seqs.len() < 2 {
                continue;
            }
            // Keep at least the first point anchored.
            let start = seqs.len().saturating_sub(tail_len).max(1);
            let tail: Vec<PointRef> = seqs[start..]
                .iter()
                .map(|&seq| PointRef { stream_index: s, seq })
                .collect();
            if tail.is_empty() {
                continue;
            }
            let anchor = PointRef {
                stream_index: s,
                seq: seqs[start - 1],
            };
            let mut free = vec![false; points.len()];
            for p in &tail {
                free[index[p]] = true;
            }
            // Only edges touching the tail can change; the global denom
            // keeps candidate objectives comparable.
            let local: Vec<(usize, usize, f64, bool, bool)> = edges
                .iter()
                .copied()
                .filter(|&(i, j, ..)| free[i] || free[j])
                .collect();
            let settle = |coords: &mut Vec<Vec<f64>>| -> f64 {
                *descend_masked(
                    &local,
                    denom,
                    coords,
                    n,
                    params.temporal_stiffness,
                    2000,
                    params.tol,
                    Some(&free),
                )
                .last()
                .expect("trace has initial value")
            };
            let mut best_val = settle(&mut coords);
            for _ in 0..restarts {
                let mut cand = coords.clone();
                let dir: Vec<f64> = {
                    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
                    raw.into_iter().map(|v| v / norm).collect()
                };
                let mut pos: Vec<f64> = cand[index[&anchor]][1..].to_vec();
                for p in &tail {
                    let step = thread_len.get(p).copied().unwrap_or(0.0);
                    for (a, v) in pos.iter_mut().enumerate() {
                        *v += step * dir[a];
                    }
                    cand[index[p]][1..].copy_from_slice(&pos);
                }
                let val = settle(&mut cand);
                if val < best_val {
                    best_val = val;
                    coords = cand;
                }
            }
        }
    }
    let trace = descend(
        &edges,
        denom,
        &mut coords,
        n,
        params.temporal_stiffness,
        params.max_iters,
        params.tol,
    );
    let final_stress = *trace.last().expect("trace has initial value");
    Ok(SpacetimeEmbedding {
        points,
        coords,
        params: params.clone(),
        final_stress,
        stress_trace: trace,
    })
}

/// Run [`embed`] with seeds `params.seed .. params.seed + restarts` and keep
/// the lowest-stress result. Deterministic; ties keep the earliest seed.
pub fn embed_restarts(
    skeleton: &LayeredSkeleton,
    params: &EmbedParams,
    restarts: u64,
) -> Result<SpacetimeEmbedding, EmbedError> {
    let mut best: Option<SpacetimeEmbedding> = None;
    for offset in 0..restarts.max(1) {
        let mut p = params.clone();
        p.seed = params.seed.wrapping_add(offset);
        let e = embed(skeleton, &p)?;
        if best.as_ref().map_or(true, |b| e.final_stress < b.final_stress) {
            best = Some(e);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Rigid alignment (rotation, reflection, translation; no scaling) of `pts`
/// onto `reference`, minimizing the sum of squared differences. Returns the
/// aligned points and that minimal sum.
/// Rigid map `y ↦ R (y − cp) + cr` fitted by [`procrustes`]; lets callers
/// carry extra points (e.g. predictions) into the reference frame.
#[derive(Debug, Clone)]
pub struct ProcrustesMap {
    rot: DMatrix<f64>,
    cp: Vec<f64>,
    cr: Vec<f64>,
}

impl ProcrustesMap {
    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        let d = self.cp.len();
        let mut z = vec![0.0; d];
        for r in 0..d {
            let mut acc = 0.0;
            for c in 0..d {
                acc += self.rot[(r, c)] * (y[c] - self.cp[c]);
            }
            z[r] = acc + self.cr[r];
        }
        z
    }
}

/// Best rigid (rotation + translation) map from `pts` onto `reference`;
/// returns the map and the summed squared residual.
pub fn procrustes_map(
    reference: &[Vec<f64>],
    pts: &[Vec<f64>],
) -> Result<(ProcrustesMap, f64), EmbedError> {
    if reference.len() != pts.len() || reference.is_empty() {
        return Err(EmbedError::DimensionMismatch);
    }
    let d = reference[0].len();
    if d == 0 || reference.iter().chain(pts).any(|x| x.len() != d) {
        return Err(EmbedError::DimensionMismatch);
    }
    let m = reference.len();
    let centroid = |set: &[Vec<f64>]| -> Vec<f64> {
        let mut c = vec![0.0; d];
        for x in set {
            for (a, v) in x.iter().enumerate() {
                c[a] += v;
            }
        }
        c.iter_mut().for_each(|v| *v /= m as f64);
        c
    };
    let cr = centroid(reference);
    let cp = centroid(pts);
    // Cross-covariance M = Σ (x_i − x̄)(y_i − ȳ)ᵀ, rotation R = U Vᵀ.
    let mut cross = DMatrix::<f64>::zeros(d, d);
    for (x, y) in reference.iter().zip(pts) {
        for r in 0..d {
            for c in 0..d {
                cross[(r, c)] += (x[r] - cr[r]) * (y[c] - cp[c]);
            }
        }
    }
    let svd = cross.svd(true, true);
    let u = svd.u.expect("svd u");
    let vt = svd.v_t.expect("svd v_t");
    let map = ProcrustesMap {
        rot: u * vt,
        cp,
        cr,
    };
    let mut residual = 0.0;
    for (x, y) in reference.iter().zip(pts) {
        let z = map.apply(y);
        for r in 0..d {
            residual += (z[r] - x[r]) * (z[r] - x[r]);
        }
    }
    Ok((map, residual))
}

pub fn procrustes(reference: &[Vec<f64>], pts: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, f64), EmbedError> {
    let (map, residual) = procrustes_map(reference, pts)?;
    let aligned = pts.iter().map(|y| map.apply(y)).collect();
    Ok((aligned, residual))
}

/// Align the spatial block of an embedding onto reference spatial points
/// (time coordinates are untouched). Returns the RMS residual per point.
pub fn procrustes_align_spatial(
    reference: &[Vec<f64>],
    embedding: &SpacetimeEmbedding,
) -> Result<(Vec<Vec<f64>>, f64), EmbedError> {
    let spatial: Vec<Vec<f64>> = embedding.coords.iter().map(|x| x[1..].to_vec()).collect();
    let (aligned, residual) = procrustes(reference, &spatial)?;
    let rms = (residual / reference.len() as f64).sqrt();
    Ok((aligned, rms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clicklog::{synthesize, SyntheticConfig, SyntheticMode};
    use crate::prespace::{build_skeleton, complete_layer, DistanceScheme, SkeletonEdge};

    fn pt(stream_index: usize, seq: usize) -> PointRef {
        PointRef { stream_index, seq }
    }

    fn triangle_skeleton() -> LayeredSkeleton {
        // Three points in one layer with pairwise distances 3, 4, 5.
        let points = vec![pt(0, 0), pt(1, 0), pt(2, 0)];
        LayeredSkeleton {
            layers: vec![Layer {
                label: 0,
                points: points.clone(),
            }],
            edges: vec![
                SkeletonEdge {
                    a: pt(0, 0),
                    b: pt(1, 0),
                    length: 3.0,
                    kind: EdgeKind::Neighbor,
                },
                SkeletonEdge {
                    a: pt(0, 0),
                    b: pt(2, 0),
                    length: 4.0,
                    kind: EdgeKind::Neighbor,
                },
                SkeletonEdge {
                    a: pt(1, 0),
                    b: pt(2, 0),
                    length: 5.0,
                    kind: EdgeKind::Neighbor,
                },
            ],
        }
    }

    #[test]
    fn stress_perfect_fit_is_zero() {
        let sk = triangle_skeleton();
        let points: Vec<PointRef> = sk.points().collect();
        // 3-4-5 right triangle placed exactly.
        let coords = vec![
            vec![0.0, 0.0, 0.0],
            vec![0.0, 3.0, 0.0],
            vec![0.0, 0.0, 4.0],
        ];
        let s = stress(&sk, &points, &coords, 0.0).unwrap();
        assert!(s < 1e-24, "stress {s}");
    }

    #[test]
    fn stress_single_collapsed_edge() {
        let sk = LayeredSkeleton {
            layers: vec![Layer {
                label: 0,
                points: vec![pt(0, 0), pt(1, 0)],
            }],
            edges: vec![SkeletonEdge {
                a: pt(0, 0),
                b: pt(1, 0),
                length: 1.0,
                kind: EdgeKind::Neighbor,
            }],
        };
        let points: Vec<PointRef> = sk.points().collect();
        let coords = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        assert_eq!(stress(&sk, &points, &coords, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn stress_scale_invariance() {
        let sk = triangle_skeleton();
        let points: Vec<PointRef> = sk.points().collect();
        let coords = vec![
            vec![0.0, 0.3, 1.0],
            vec![0.0, 2.0, 0.5],
            vec![0.0, -1.0, 2.0],
        ];
        let base = stress(&sk, &points, &coords, 0.0).unwrap();
        let c = 3.7;
        let mut scaled_sk = sk.clone();
        for e in &mut scaled_sk.edges {
            e.length *= c;
        }
        let scaled_coords: Vec<Vec<f64>> = coords
            .iter()
            .map(|x| {
                let mut y = x.clone();
                y[1] *= c;
                y[2] *= c;
                y
            })
            .collect();
        let s = stress(&scaled_sk, &points, &scaled_coords, 0.0).unwrap();
        assert!((s - base).abs() < 1e-12);
    }

    #[test]
    fn stress_missing_coord() {
        let sk = triangle_skeleton();
        let points = vec![pt(0, 0), pt(1, 0)];
        let coords = vec![vec![0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]];
        assert!(matches!(
            stress(&sk, &points, &coords, 0.0),
            Err(EmbedError::MissingCoord(2, 0))
        ));
    }

    #[test]
    fn embed_single_point() {
        let sk = LayeredSkeleton {
            layers: vec![Layer {
                label: 0,
                points: vec![pt(0, 0)],
            }],
            edges: vec![],
        };
        let e = embed(&sk, &EmbedParams::default()).unwrap();
        assert_eq!(e.coords[0][0], 0.0);
        assert_eq!(e.final_stress, 0.0);
    }

    #[test]
    fn embed_empty_skeleton() {
        let sk = LayeredSkeleton {
            layers: vec![],
            edges: vec![],
        };
        assert!(matches!(
            embed(&sk, &EmbedParams::default()),
            Err(EmbedError::EmptySkeleton)
        ));
    }

    #[test]
    fn triangle_embeds_exactly() {
        let sk = triangle_skeleton();
        let params = EmbedParams {
            temporal_stiffness: 0.0,
            max_iters: 5000,
            tol: 1e-14,
            ..EmbedParams::default()
        };
        let e = embed_restarts(&sk, &params, 4).unwrap();
        assert!(e.final_stress < 1e-6, "final stress {}", e.final_stress);
    }

    #[test]
    fn stress_trace_is_nonincreasing_and_deterministic() {
        let sk = triangle_skeleton();
        let params = EmbedParams {
            temporal_stiffness: 0.0,
            seed: 5,
            ..EmbedParams::default()
        };
        let e1 = embed(&sk, &params).unwrap();
        let e2 = embed(&sk, &params).unwrap();
        assert_eq!(e1.coords, e2.coords);
        assert_eq!(e1.stress_trace, e2.stress_trace);
        for w in e1.stress_trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
        // final_stress is the stress of the returned coords.
        let points: Vec<PointRef> = sk.points().collect();
        let recomputed = stress(&sk, &points, &e1.coords, 0.0).unwrap();
        assert!((recomputed - e1.final_stress).abs() < 1e-9);
    }

    #[test]
    fn time_coordinates_exact() {
        let cfg = SyntheticConfig {
            num_streams: 3,
            stream_len: 4,
            ..SyntheticConfig::default()
        };
        let c = crate::clicklog::generate_synthetic(&cfg, 2).unwrap();
        let sk = build_skeleton(&c, DistanceScheme::Cosine, 2);
        let params = EmbedParams {
            time_scale: 2.5,
            max_iters: 50,
            ..EmbedParams::default()
        };
        let e = embed(&sk, &params).unwrap();
        for (p, x) in e.points.iter().zip(&e.coords) {
            assert_eq!(x[0], p.seq as f64 * 2.5);
        }
    }

    #[test]
    fn scale_consistency() {
        let sk = triangle_skeleton();
        let params = EmbedParams {
            temporal_stiffness: 0.0,
            max_iters: 20000,
            tol: 1e-15,
            seed: 1,
            ..EmbedParams::default()
        };
        let e1 = embed_restarts(&sk, &params, 4).unwrap();
        let c = 2.0;
        let mut scaled = sk.clone();
        for e in &mut scaled.edges {
            e.length *= c;
        }
        let e2 = embed_restarts(&scaled, &params, 4).unwrap();
        let scaled_coords: Vec<Vec<f64>> = e1.coords.iter().map(|x| vec![x[1] * c, x[2] * c]).collect();
        let spatial2: Vec<Vec<f64>> = e2.coords.iter().map(|x| x[1..].to_vec()).collect();
        let (_, residual) = procrustes(&scaled_coords, &spatial2).unwrap();
        assert!(residual < 1e-6, "residual {residual}");
    }

    #[test]
    fn procrustes_identity_and_rigid_motion() {
        let pts = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 2.0],
            vec![3.0, 1.0],
        ];
        let (_, r) = procrustes(&pts, &pts).unwrap();
        assert!(r < 1e-18);

        let theta: f64 = 0.7;
        let moved: Vec<Vec<f64>> = pts
            .iter()
            .map(|p| {
                vec![
                    theta.cos() * p[0] - theta.sin() * p[1] + 5.0,
                    theta.sin() * p[0] + theta.cos() * p[1] - 2.0,
                ]
            })
            .collect();
        let (aligned, r) = procrustes(&pts, &moved).unwrap();
        assert!(r < 1e-9, "residual {r}");
        for (a, p) in aligned.iter().zip(&pts) {
            assert!((a[0] - p[0]).abs() < 1e-9 && (a[1] - p[1]).abs() < 1e-9);
        }
        // Reflection is allowed too.
        let reflected: Vec<Vec<f64>> = pts.iter().map(|p| vec![-p[0], p[1]]).collect();
        let (_, r) = procrustes(&pts, &reflected).unwrap();
        assert!(r < 1e-9, "reflection residual {r}");
    }

    #[test]
    fn procrustes_dimension_mismatch() {
        let a = vec![vec![0.0, 0.0]];
        let b = vec![vec![0.0, 0.0, 0.0]];
        assert!(matches!(procrustes(&a, &b), Err(EmbedError::DimensionMismatch)));
        let c: Vec<Vec<f64>> = vec![];
        assert!(matches!(procrustes(&c, &c), Err(EmbedError::DimensionMismatch)));
    }

    #[test]
    fn planted_geodesic_recovery_small() {
        let cfg = SyntheticConfig {
            num_streams: 8,
            stream_len: 10,
            mode: SyntheticMode::PlantedGeodesic,
            latent_dim: 2,
            step_len: 0.02,
            start_span: 0.3,
            ..SyntheticConfig::default()
        };
        let synth = synthesize(&cfg, 17).unwrap();
        let sk = build_skeleton(&synth.collection, DistanceScheme::Cosine, 6);
        let dense0 = complete_layer(&synth.collection, DistanceScheme::Cosine, 0).unwrap();
        let params = EmbedParams {
            temporal_stiffness: 1e-3,
            max_iters: 4000,
            tol: 1e-12,
            ..EmbedParams::default()
        };
        let e = embed_incremental(&sk, &params, 16, 3, Some(&dense0)).unwrap();
        assert!(e.final_stress < 0.05, "final stress {}", e.final_stress);

        let latent = synth.latent.unwrap();
        let reference: Vec<Vec<f64>> = e
            .points
            .iter()
            .map(|p| latent[p.stream_index][p.seq].clone())
            .collect();
        let (_, rms) = procrustes_align_spatial(&reference, &e).unwrap();
        let diameter = latent_diameter(&reference);
        assert!(
            rms < 0.1 * diameter,
            "rms {rms} vs diameter {diameter}"
        );
    }

    fn latent_diameter(pts: &[Vec<f64>]) -> f64 {
        let mut best = 0.0f64;
        for a in pts {
            for b in pts {
                let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
                best = best.max(d);
            }
        }
        best
    }

    #[test]
    fn csv_export_shape() {
        let sk = triangle_skeleton();
        let e = embed(&sk, &EmbedParams::default()).unwrap();
        let csv = e.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "stream,seq,t,x1,x2");
        assert_eq!(lines.count(), 3);
        assert!(e.sidecar_json().contains("final_stress"));
    }
}
