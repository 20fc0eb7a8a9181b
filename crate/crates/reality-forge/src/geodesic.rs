//! Continuous spacetime geometry recovered from a discrete skeleton.
//!
//! A [`MetricField`] stores a symmetric positive-definite tensor on a
//! regular grid over the embedded point cloud. It is fitted by weighted
//! least squares so that for each skeleton edge the quadratic form of the
//! local tensor reproduces the edge's squared length. On top of the field
//! sit finite-difference Christoffel symbols, a fourth-order Runge-Kutta
//! geodesic integrator, and next-click prediction by geodesic continuation.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::SpacetimeEmbedding;
use crate::prespace::LayeredSkeleton;

#[derive(Debug, Error)]
pub enum GeodesicError {
    #[error("point {point:?} lies outside the metric field hull")]
    OutOfHull { point: Vec<f64> },
    #[error("metric tensor is numerically singular at {point:?}")]
    SingularMetric { point: Vec<f64> },
    #[error("trajectory prefix has {0} points; need at least 2")]
    ShortPrefix(usize),
    #[error("bad parameter: {0}")]
    BadParams(String),
    #[error("metric field JSON: {0}")]
    Json(String),
}

/// Anything that can report a metric tensor at a spacetime point.
pub trait Metric {
    fn dim(&self) -> usize;
    fn metric_at(&self, x: &[f64]) -> Result<DMatrix<f64>, GeodesicError>;
}

/// Smooth metric given by a closure; used for analytic references.
pub struct AnalyticMetric<F: Fn(&[f64]) -> DMatrix<f64> + Sync> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> DMatrix<f64> + Sync> Metric for AnalyticMetric<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn metric_at(&self, x: &[f64]) -> Result<DMatrix<f64>, GeodesicError> {
        Ok((self.f)(x))
    }
}

/// One fitting constraint: a displacement anchored at its midpoint whose
/// quadratic form should equal the squared edge length.
#[derive(Debug, Clone)]
pub struct MetricSample {
    pub midpoint: Vec<f64>,
    pub displacement: Vec<f64>,
    pub squared_length: f64,
}

/// Turn every skeleton edge into a fitting sample. Displacements live in
/// full spacetime, so thread edges (which advance the time coordinate)
/// constrain the time-time component as well.
pub fn samples_from_embedding(
    skeleton: &LayeredSkeleton,
    emb: &SpacetimeEmbedding,
) -> Vec<MetricSample> {
    let index: std::collections::HashMap<_, _> = emb
        .points
        .iter()
        .enumerate()
        .map(|(i, &p)| (p, i))
        .collect();
    skeleton
        .edges
        .iter()
        .filter_map(|e| {
            let a = &emb.coords[*index.get(&e.a)?];
            let b = &emb.coords[*index.get(&e.b)?];
            let midpoint: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
            let displacement: Vec<f64> = b.iter().zip(a).map(|(y, x)| y - x).collect();
            Some(MetricSample {
                midpoint,
                displacement,
                squared_length: e.length * e.length,
            })
        })
        .collect()
}

/// Fit configuration for [`MetricField::fit`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FitParams {
    /// Grid nodes per axis.
    pub grid_res: usize,
    /// Bounding box is inflated by this fraction of its extent on each side.
    pub margin: f64,
    /// Kernel bandwidth as a multiple of the mean grid spacing.
    pub bandwidth_scale: f64,
}

impl Default for FitParams {
    fn default() -> Self {
        FitParams {
            grid_res: 8,
            margin: 0.25,
            bandwidth_scale: 1.5,
        }
    }
}

/// Symmetric positive-definite tensor field on a regular grid, queried by
/// multilinear interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricField {
    pub dim: usize,
    pub origin: Vec<f64>,
    pub spacing: Vec<f64>,
    /// Nodes per axis; all entries >= 2.
    pub shape: Vec<usize>,
    /// Row-major over grid nodes (last axis fastest).
    tensors: Vec<DMatrix<f64>>,
    /// Eigenvalue floor applied to every queried tensor.
    pub floor: f64,
}

fn symmetric_from_solution(dim: usize, theta: &DVector<f64>) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(dim, dim);
    let mut k = 0;
    for i in 0..dim {
        for j in i..dim {
            g[(i, j)] = theta[k];
            g[(j, i)] = theta[k];
            k += 1;
        }
    }
    g
}

/// Clamp eigenvalues of a symmetric matrix from below.
fn spd_floor(g: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let sym = (g + g.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let vals = eig.eigenvalues.map(|v| v.max(floor));
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

impl MetricField {
    fn num_nodes(&self) -> usize {
        self.shape.iter().product()
    }

    fn node_position(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .enumerate()
            .map(|(a, &i)| self.origin[a] + self.spacing[a] * i as f64)
            .collect()
    }

    fn flat_index(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for (a, &i) in idx.iter().enumerate() {
            flat = flat * self.shape[a] + i;
        }
        flat
    }

    fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim];
        for a in (0..self.dim).rev() {
            idx[a] = flat % self.shape[a];
            flat /= self.shape[a];
        }
        idx
    }

    /// Upper corner of the hull.
    fn upper(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|a| self.origin[a] + self.spacing[a] * (self.shape[a] - 1) as f64)
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let upper = self.upper();
        x.len() == self.dim
            && (0..self.dim).all(|a| {
                let tol = 1e-9 * self.spacing[a];
                x[a] >= self.origin[a] - tol && x[a] <= upper[a] + tol
            })
    }

    /// Build a field by sampling an analytic tensor at every grid node.
    /// No eigenvalue floor is applied beyond `floor`.
    pub fn from_fn<F: Fn(&[f64]) -> DMatrix<f64>>(
        origin: Vec<f64>,
        spacing: Vec<f64>,
        shape: Vec<usize>,
        floor: f64,
        f: F,
    ) -> Self {
        let dim = origin.len();
        assert_eq!(spacing.len(), dim);
        assert_eq!(shape.len(), dim);
        assert!(shape.iter().all(|&s| s >= 2));
        let mut field = MetricField {
            dim,
            origin,
            spacing,
            shape,
            tensors: Vec::new(),
            floor,
        };
        let n = field.num_nodes();
        field.tensors = (0..n)
            .map(|flat| {
                let idx = field.multi_index(flat);
                f(&field.node_position(&idx))
            })
            .collect();
        field
    }

    /// Weighted least-squares fit of the tensor field from edge samples.
    ///
    /// Each grid node solves `min sum_e w_e (d_e^T g d_e - L_e^2)^2` over
    /// symmetric `g`, with Gaussian weights in the distance from the node to
    /// the edge midpoint. Nodes with no effective weight fall back to the
    /// identity. All tensors are then clamped to a positive-definite floor
    /// of `1e-3` times the median fitted diagonal.
    pub fn fit(samples: &[MetricSample], params: &FitParams) -> Result<Self, GeodesicError> {
        if samples.is_empty() {
            return Err(GeodesicError::BadParams("no metric samples".into()));
        }
        if params.grid_res < 2 {
            return Err(GeodesicError::BadParams("grid_res must be >= 2".into()));
        }
        let dim = samples[0].midpoint.len();
        if samples
            .iter()
            .any(|s| s.midpoint.len() != dim || s.displacement.len() != dim)
        {
            return Err(GeodesicError::BadParams("inconsistent sample dimension".into()));
        }

        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for s in samples {
            for a in 0..dim {
                lo[a] = lo[a].min(s.midpoint[a] - 0.5 * s.displacement[a].abs());
                hi[a] = hi[a].max(s.midpoint[a] + 0.5 * s.displacement[a].abs());
            }
        }
        let mut origin = vec![0.0; dim];
        let mut spacing = vec![0.0; dim];
        let shape = vec![params.grid_res; dim];
        // Axes with (near-)zero spread still get a usable hull: inflate
        // them to a tenth of the widest axis so finite differencing and
        // interpolation stay inside bounds.
        let global_extent = (0..dim)
            .map(|a| hi[a] - lo[a])
            .fold(0.0f64, f64::max)
            .max(1e-9);
        for a in 0..dim {
            let extent = (hi[a] - lo[a]).max(0.1 * global_extent);
            let pad = params.margin * extent;
            let center = 0.5 * (lo[a] + hi[a]);
            origin[a] = center - 0.5 * extent - pad;
            spacing[a] = (extent + 2.0 * pad) / (params.grid_res - 1) as f64;
        }
        let mean_spacing = spacing.iter().sum::<f64>() / dim as f64;
        let sigma = params.bandwidth_scale * mean_spacing;
        let two_sigma_sq = 2.0 * sigma * sigma;

        let mut field = MetricField {
            dim,
            origin,
            spacing,
            shape,
            tensors: Vec::new(),
            floor: 0.0,
        };
        let unknowns = dim * (dim + 1) / 2;
        let features: Vec<DVector<f64>> = samples
            .iter()
            .map(|s| {
                let mut row = DVector::zeros(unknowns);
                let mut k = 0;
                for i in 0..dim {
                    for j in i..dim {
                        let c = if i == j { 1.0 } else { 2.0 };
                        row[k] = c * s.displacement[i] * s.displacement[j];
                        k += 1;
                    }
                }
                row
            })
            .collect();

        let n = field.num_nodes();
        field.tensors = (0..n)
            .into_par_iter()
            .map(|flat| {
                let idx = field.multi_index(flat);
                let pos = field.node_position(&idx);
                let mut xtwx = DMatrix::zeros(unknowns, unknowns);
                let mut xtwy = DVector::zeros(unknowns);
                let mut total_w = 0.0;
                for (s, row) in samples.iter().zip(&features) {
                    let dist_sq: f64 = pos
                        .iter()
                        .zip(&s.midpoint)
                        .map(|(p, m)| (p - m) * (p - m))
                        .sum();
                    let w = (-dist_sq / two_sigma_sq).exp();
                    if w < 1e-12 {
                        continue;
                    }
                    total_w += w;
                    xtwy += row * (w * s.squared_length);
                    xtwx += row * row.transpose() * w;
                }
                if total_w < 1e-9 {
                    return DMatrix::identity(dim, dim);
                }
                // Mild Tikhonov ridge toward the identity keeps sparse
                // neighborhoods well-posed without biasing dense ones.
                let ridge = 1e-6 * total_w;
                let mut k = 0;
                for i in 0..dim {
                    for j in i..dim {
                        xtwx[(k, k)] += ridge;
                        if i == j {
                            xtwy[k] += ridge;
                        }
                        k += 1;
                    }
                }
                match xtwx.clone().svd(true, true).solve(&xtwy, 1e-12) {
                    Ok(theta) => symmetric_from_solution(dim, &theta),
                    Err(_) => DMatrix::identity(dim, dim),
                }
            })
            .collect();

        let mut diags: Vec<f64> = field
            .tensors
            .iter()
            .flat_map(|g| (0..dim).map(|i| g[(i, i)]).collect::<Vec<_>>())
            .collect();
        diags.sort_by(|a, b| a.total_cmp(b));
        let median = diags[diags.len() / 2].abs().max(1e-6);
        field.floor = 1e-3 * median;
        for g in &mut field.tensors {
            *g = spd_floor(g, field.floor);
        }
        Ok(field)
    }

    pub fn to_json(&self) -> String {
        let tensors: Vec<Vec<Vec<f64>>> = self
            .tensors
            .iter()
            .map(|g| {
                (0..self.dim)
                    .map(|i| (0..self.dim).map(|j| g[(i, j)]).collect())
                    .collect()
            })
            .collect();
        serde_json::to_string_pretty(&serde_json::json!({
            "dim": self.dim,
            "origin": self.origin,
            "spacing": self.spacing,
            "shape": self.shape,
            "floor": self.floor,
            "tensors": tensors,
        }))
        .expect("metric field serializes")
            + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, GeodesicError> {
        #[derive(Deserialize)]
        struct Doc {
            dim: usize,
            origin: Vec<f64>,
            spacing: Vec<f64>,
            shape: Vec<usize>,
            floor: f64,
            tensors: Vec<Vec<Vec<f64>>>,
        }
        let doc: Doc = serde_json::from_str(text).map_err(|e| GeodesicError::Json(e.to_string()))?;
        let nodes: usize = doc.shape.iter().product();
        if doc.origin.len() != doc.dim
            || doc.spacing.len() != doc.dim
            || doc.shape.len() != doc.dim
            || doc.tensors.len() != nodes
        {
            return Err(GeodesicError::Json("inconsistent field dimensions".into()));
        }
        let tensors = doc
            .tensors
            .iter()
            .map(|rows| {
                if rows.len() != doc.dim || rows.iter().any(|r| r.len() != doc.dim) {
                    return Err(GeodesicError::Json("bad tensor shape".into()));
                }
                Ok(DMatrix::from_fn(doc.dim, doc.dim, |i, j| rows[i][j]))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(MetricField {
            dim: doc.dim,
            origin: doc.origin,
            spacing: doc.spacing,
            shape: doc.shape,
            tensors,
            floor: doc.floor,
        })
    }
}

impl Metric for MetricField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn metric_at(&self, x: &[f64]) -> Result<DMatrix<f64>, GeodesicError> {
        if !self.contains(x) {
            return Err(GeodesicError::OutOfHull { point: x.to_vec() });
        }
        // Cell containing x, plus fractional coordinates inside it.
        let mut base = vec![0usize; self.dim];
        let mut frac = vec![0.0f64; self.dim];
        for a in 0..self.dim {
            let u = ((x[a] - self.origin[a]) / self.spacing[a])
                .clamp(0.0, (self.shape[a] - 1) as f64);
            let cell = (u.floor() as usize).min(self.shape[a] - 2);
            base[a] = cell;
            frac[a] = u - cell as f64;
        }
        let mut g = DMatrix::zeros(self.dim, self.dim);
        for corner in 0..(1usize << self.dim) {
            let mut w = 1.0;
            let mut idx = base.clone();
            for a in 0..self.dim {
                if corner & (1 << a) != 0 {
                    idx[a] += 1;
                    w *= frac[a];
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            g += &self.tensors[self.flat_index(&idx)] * w;
        }
        Ok(spd_floor(&g, self.floor))
    }
}

/// Christoffel symbols of the second kind at `x`, by central differences of
/// the metric with half-step `h / 2` along each axis. Returned as
/// `gamma[k][(i, j)]`.
pub fn christoffel<M: Metric>(
    metric: &M,
    x: &[f64],
    h: f64,
) -> Result<Vec<DMatrix<f64>>, GeodesicError> {
    let dim = metric.dim();
    if h <= 0.0 {
        return Err(GeodesicError::BadParams("finite-difference step must be positive".into()));
    }
    let g = metric.metric_at(x)?;
    let g_inv = g
        .clone()
        .try_inverse()
        .filter(|inv| inv.iter().all(|v| v.is_finite()))
        .ok_or_else(|| GeodesicError::SingularMetric { point: x.to_vec() })?;

    // dg[a] = dg / dx_a
    let mut dg = Vec::with_capacity(dim);
    for a in 0..dim {
        let mut plus = x.to_vec();
        let mut minus = x.to_vec();
        plus[a] += 0.5 * h;
        minus[a] -= 0.5 * h;
        let gp = metric.metric_at(&plus)?;
        let gm = metric.metric_at(&minus)?;
        dg.push((gp - gm) / h);
    }

    let mut gamma = vec![DMatrix::zeros(dim, dim); dim];
    for k in 0..dim {
        for i in 0..dim {
            for j in 0..dim {
                let mut sum = 0.0;
                for l in 0..dim {
                    sum += g_inv[(k, l)] * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
                }
                gamma[k][(i, j)] = 0.5 * sum;
            }
        }
    }
    Ok(gamma)
}

/// Integrated geodesic: positions and velocities per accepted step.
#[derive(Debug, Clone)]
pub struct GeodesicPath {
    pub points: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    /// True when integration stopped early because the path left the hull
    /// of the metric field.
    pub truncated: bool,
}

impl GeodesicPath {
    /// CSV with header `step,x0,...` followed by `v0,...` columns.
    pub fn to_csv(&self) -> String {
        let dim = self.points.first().map_or(0, |p| p.len());
        let mut out = String::from("step");
        for a in 0..dim {
            out.push_str(&format!(",x{a}"));
        }
        for a in 0..dim {
            out.push_str(&format!(",v{a}"));
        }
        out.push('\n');
        for (k, (p, v)) in self.points.iter().zip(&self.velocities).enumerate() {
            out.push_str(&k.to_string());
            for value in p.iter().chain(v.iter()) {
                out.push_str(&format!(",{value:.16e}"));
            }
            out.push('\n');
        }
        out
    }
}

fn accel<M: Metric>(metric: &M, x: &[f64], v: &[f64], h: f64) -> Result<Vec<f64>, GeodesicError> {
    let gamma = christoffel(metric, x, h)?;
    let dim = metric.dim();
    let mut a = vec![0.0; dim];
    for k in 0..dim {
        let mut sum = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                sum += gamma[k][(i, j)] * v[i] * v[j];
            }
        }
        a[k] = -sum;
    }
    Ok(a)
}

/// Classic fourth-order Runge-Kutta on the first-order system
/// `x' = v`, `v'^k = -Gamma^k_ij v^i v^j`. `fd_h` is the finite-difference
/// step used for the Christoffel symbols. Leaving the field's hull sets the
/// `truncated` flag and returns the path so far instead of an error.
pub fn integrate_geodesic<M: Metric>(
    metric: &M,
    x0: &[f64],
    v0: &[f64],
    step: f64,
    num_steps: usize,
    fd_h: f64,
) -> Result<GeodesicPath, GeodesicError> {
    if step <= 0.0 {
        return Err(GeodesicError::BadParams("integration step must be positive".into()));
    }
    let dim = metric.dim();
    if x0.len() != dim || v0.len() != dim {
        return Err(GeodesicError::BadParams("state dimension mismatch".into()));
    }
    let mut path = GeodesicPath {
        points: vec![x0.to_vec()],
        velocities: vec![v0.to_vec()],
        truncated: false,
    };
    let mut x = x0.to_vec();
    let mut v = v0.to_vec();
    let add = |p: &[f64], q: &[f64], s: f64| -> Vec<f64> {
        p.iter().zip(q).map(|(a, b)| a + s * b).collect()
    };
    for _ in 0..num_steps {
        let stage = |xs: &[f64], vs: &[f64]| -> Result<(Vec<f64>, Vec<f64>), GeodesicError> {
            Ok((vs.to_vec(), accel(metric, xs, vs, fd_h)?))
        };
        let result = (|| -> Result<(Vec<f64>, Vec<f64>), GeodesicError> {
            let (k1x, k1v) = stage(&x, &v)?;
            let (k2x, k2v) = stage(&add(&x, &k1x, 0.5 * step), &add(&v, &k1v, 0.5 * step))?;
            let (k3x, k3v) = stage(&add(&x, &k2x, 0.5 * step), &add(&v, &k2v, 0.5 * step))?;
            let (k4x, k4v) = stage(&add(&x, &k3x, step), &add(&v, &k3v, step))?;
            let combine = |a: &[f64], k1: &[f64], k2: &[f64], k3: &[f64], k4: &[f64]| {
                a.iter()
                    .enumerate()
                    .map(|(i, &ai)| {
                        ai + step / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                    })
                    .collect::<Vec<f64>>()
            };
            let xn = combine(&x, &k1x, &k2x, &k3x, &k4x);
            let vn = combine(&v, &k1v, &k2v, &k3v, &k4v);
            // Probe the new point so a hull exit truncates cleanly.
            metric.metric_at(&xn)?;
            Ok((xn, vn))
        })();
        match result {
            Ok((xn, vn)) => {
                x = xn;
                v = vn;
                path.points.push(x.clone());
                path.velocities.push(v.clone());
            }
            Err(GeodesicError::OutOfHull { .. }) => {
                path.truncated = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(path)
}

/// Prediction of the next trajectory point by geodesic continuation.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub point: Vec<f64>,
    /// True when the continuation left the field hull before covering a
    /// full inter-click interval; `point` is then the last in-hull state.
    pub truncated: bool,
}

/// Continue an observed trajectory one inter-click interval forward. The
/// initial velocity is the last observed displacement per unit affine
/// parameter; the interval is covered in `substeps` Runge-Kutta steps.
pub fn predict_next<M: Metric>(
    metric: &M,
    prefix: &[Vec<f64>],
    substeps: usize,
    fd_h: f64,
) -> Result<Prediction, GeodesicError> {
    if prefix.len() < 2 {
        return Err(GeodesicError::ShortPrefix(prefix.len()));
    }
    if substeps == 0 {
        return Err(GeodesicError::BadParams("substeps must be positive".into()));
    }
    let last = &prefix[prefix.len() - 1];
    let prev = &prefix[prefix.len() - 2];
    let v0: Vec<f64> = last.iter().zip(prev).map(|(a, b)| a - b).collect();
    let path = integrate_geodesic(metric, last, &v0, 1.0 / substeps as f64, substeps, fd_h)?;
    Ok(Prediction {
        point: path.points.last().expect("path has initial point").clone(),
        truncated: path.truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Conformally flat metric g = exp(2 a.x) I in 2-d.
    fn conformal(a: [f64; 2]) -> AnalyticMetric<impl Fn(&[f64]) -> DMatrix<f64> + Sync> {
        AnalyticMetric {
            dim: 2,
            f: move |x: &[f64]| {
                let phi = a[0] * x[0] + a[1] * x[1];
                DMatrix::identity(2, 2) * (2.0 * phi).exp()
            },
        }
    }

    /// Closed form for the conformal metric: Gamma^k_ij =
    /// delta^k_i a_j + delta^k_j a_i - delta_ij a_k.
    fn conformal_gamma(a: [f64; 2]) -> Vec<DMatrix<f64>> {
        let mut gamma = vec![DMatrix::zeros(2, 2); 2];
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    let mut v = 0.0;
                    if k == i {
                        v += a[j];
                    }
                    if k == j {
                        v += a[i];
                    }
                    if i == j {
                        v -= a[k];
                    }
                    gamma[k][(i, j)] = v;
                }
            }
        }
        gamma
    }

    #[test]
    fn christoffel_matches_conformal_closed_form() {
        let a = [0.3, -0.2];
        let metric = conformal(a);
        let expected = conformal_gamma(a);
        let got = christoffel(&metric, &[0.4, 0.1], 1e-4).unwrap();
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    assert_relative_eq!(
                        got[k][(i, j)],
                        expected[k][(i, j)],
                        epsilon = 1e-6,
                        max_relative = 1e-6
                    );
                }
            }
        }
    }

    #[test]
    fn christoffel_central_difference_is_second_order() {
        // Error against the closed form should shrink ~4x when h halves.
        let a = [0.7, 0.4];
        let metric = conformal(a);
        let expected = conformal_gamma(a);
        let x = [0.2, -0.3];
        let err = |h: f64| -> f64 {
            let got = christoffel(&metric, &x, h).unwrap();
            let mut worst: f64 = 0.0;
            for k in 0..2 {
                worst = worst.max((&got[k] - &expected[k]).abs().max());
            }
            worst
        };
        let e1 = err(0.2);
        let e2 = err(0.1);
        assert!(e1 > 1e-8, "step too small to resolve truncation error");
        let ratio = e1 / e2;
        assert!((2.5..6.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn flat_field_geodesics_are_straight() {
        let field = MetricField::from_fn(
            vec![-1.0, -1.0],
            vec![0.25, 0.25],
            vec![9, 9],
            1e-9,
            |_| DMatrix::identity(2, 2),
        );
        let x0 = [-0.5, -0.25];
        let v0 = [0.3, 0.2];
        let path = integrate_geodesic(&field, &x0, &v0, 0.05, 40, 0.05).unwrap();
        assert!(!path.truncated);
        assert_eq!(path.points.len(), 41);
        for (k, p) in path.points.iter().enumerate() {
            let s = 0.05 * k as f64;
            assert_relative_eq!(p[0], x0[0] + v0[0] * s, epsilon = 1e-9);
            assert_relative_eq!(p[1], x0[1] + v0[1] * s, epsilon = 1e-9);
        }
    }

    #[test]
    fn geodesic_conserves_energy() {
        let metric = conformal([0.3, -0.2]);
        let x0 = [0.0, 0.0];
        let v0 = [0.4, 0.1];
        let path = integrate_geodesic(&metric, &x0, &v0, 1e-3, 1000, 1e-4).unwrap();
        let energy = |x: &[f64], v: &[f64]| -> f64 {
            let g = metric.metric_at(x).unwrap();
            let mut e = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    e += g[(i, j)] * v[i] * v[j];
                }
            }
            e
        };
        let e0 = energy(&path.points[0], &path.velocities[0]);
        for (p, v) in path.points.iter().zip(&path.velocities) {
            assert!((energy(p, v) - e0).abs() / e0 < 1e-4);
        }
    }

    #[test]
    fn geodesic_is_time_reversible() {
        let metric = conformal([0.25, 0.15]);
        let x0 = [0.1, -0.2];
        let v0 = [0.3, 0.25];
        let fwd = integrate_geodesic(&metric, &x0, &v0, 1e-2, 200, 1e-4).unwrap();
        let xe = fwd.points.last().unwrap().clone();
        let ve: Vec<f64> = fwd.velocities.last().unwrap().iter().map(|v| -v).collect();
        let back = integrate_geodesic(&metric, &xe, &ve, 1e-2, 200, 1e-4).unwrap();
        let xb = back.points.last().unwrap();
        for a in 0..2 {
            assert!((xb[a] - x0[a]).abs() < 1e-6, "axis {a}: {} vs {}", xb[a], x0[a]);
        }
    }

    #[test]
    fn hull_exit_truncates() {
        let field = MetricField::from_fn(
            vec![0.0, 0.0],
            vec![0.5, 0.5],
            vec![3, 3],
            1e-9,
            |_| DMatrix::identity(2, 2),
        );
        let path = integrate_geodesic(&field, &[0.5, 0.5], &[1.0, 0.0], 0.1, 50, 0.05).unwrap();
        assert!(path.truncated);
        assert!(path.points.len() < 51);
        for p in &path.points {
            assert!(field.contains(p));
        }
    }

    #[test]
    fn metric_at_rejects_outside_points() {
        let field = MetricField::from_fn(
            vec![0.0],
            vec![1.0],
            vec![2],
            1e-9,
            |_| DMatrix::identity(1, 1),
        );
        assert!(matches!(
            field.metric_at(&[1.5]),
            Err(GeodesicError::OutOfHull { .. })
        ));
        assert!(field.metric_at(&[1.0]).is_ok());
    }

    #[test]
    fn interpolation_is_exact_for_linear_fields() {
        // Multilinear interpolation reproduces entries that are linear in
        // each coordinate.
        let field = MetricField::from_fn(
            vec![0.0, 0.0],
            vec![0.5, 0.5],
            vec![5, 5],
            1e-9,
            |x| {
                let mut g = DMatrix::identity(2, 2);
                g[(0, 0)] = 1.0 + 0.5 * x[0];
                g[(1, 1)] = 2.0 + 0.25 * x[1];
                g
            },
        );
        let g = field.metric_at(&[0.6, 1.3]).unwrap();
        assert_relative_eq!(g[(0, 0)], 1.3, epsilon = 1e-12);
        assert_relative_eq!(g[(1, 1)], 2.325, epsilon = 1e-12);
    }

    #[test]
    fn fit_recovers_identity_metric() {
        // Edge lengths equal to Euclidean distances should fit g ~ I.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut samples = Vec::new();
        for _ in 0..600 {
            let m = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            let d = [rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2)];
            samples.push(MetricSample {
                midpoint: m.to_vec(),
                displacement: d.to_vec(),
                squared_length: d[0] * d[0] + d[1] * d[1],
            });
        }
        let field = MetricField::fit(&samples, &FitParams::default()).unwrap();
        for probe in [[0.3, 0.3], [0.5, 0.5], [0.7, 0.4]] {
            let g = field.metric_at(&probe).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!(
                        (g[(i, j)] - want).abs() < 0.05,
                        "g[{i}{j}] = {} at {probe:?}",
                        g[(i, j)]
                    );
                }
            }
        }
    }

    #[test]
    fn fit_recovers_anisotropic_metric() {
        // Lengths measured with diag(4, 1) should fit back that tensor.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut samples = Vec::new();
        for _ in 0..600 {
            let m = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            let d = [rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2)];
            samples.push(MetricSample {
                midpoint: m.to_vec(),
                displacement: d.to_vec(),
                squared_length: 4.0 * d[0] * d[0] + d[1] * d[1],
            });
        }
        let field = MetricField::fit(&samples, &FitParams::default()).unwrap();
        let g = field.metric_at(&[0.5, 0.5]).unwrap();
        assert!((g[(0, 0)] - 4.0).abs() < 0.2, "g00 = {}", g[(0, 0)]);
        assert!((g[(1, 1)] - 1.0).abs() < 0.1, "g11 = {}", g[(1, 1)]);
        assert!(g[(0, 1)].abs() < 0.1, "g01 = {}", g[(0, 1)]);
    }

    #[test]
    fn fitted_tensors_are_positive_definite() {
        // Degenerate data (all displacements along one axis) still yields
        // an invertible tensor thanks to the eigenvalue floor.
        let samples: Vec<MetricSample> = (0..50)
            .map(|k| MetricSample {
                midpoint: vec![k as f64 / 50.0, 0.5],
                displacement: vec![0.1, 0.0],
                squared_length: 0.01,
            })
            .collect();
        let field = MetricField::fit(&samples, &FitParams::default()).unwrap();
        let g = field.metric_at(&[0.5, 0.5]).unwrap();
        let eig = g.symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|&v| v > 0.0));
        assert!(christoffel(&field, &[0.5, 0.5], 0.01).is_ok());
    }

    #[test]
    fn predict_next_continues_straight_lines() {
        let field = MetricField::from_fn(
            vec![-2.0, -2.0],
            vec![0.5, 0.5],
            vec![9, 9],
            1e-9,
            |_| DMatrix::identity(2, 2),
        );
        let prefix = vec![vec![0.0, 0.0], vec![0.1, 0.05], vec![0.2, 0.1]];
        let pred = predict_next(&field, &prefix, 10, 0.05).unwrap();
        assert!(!pred.truncated);
        assert_relative_eq!(pred.point[0], 0.3, epsilon = 1e-9);
        assert_relative_eq!(pred.point[1], 0.15, epsilon = 1e-9);

        assert!(matches!(
            predict_next(&field, &prefix[..1], 10, 0.05),
            Err(GeodesicError::ShortPrefix(1))
        ));
    }

    #[test]
    fn metric_field_json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let samples: Vec<MetricSample> = (0..200)
            .map(|_| {
                let d = [rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2)];
                MetricSample {
                    midpoint: vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)],
                    displacement: d.to_vec(),
                    squared_length: d[0] * d[0] + d[1] * d[1],
                }
            })
            .collect();
        let field = MetricField::fit(&samples, &FitParams::default()).unwrap();
        let back = MetricField::from_json(&field.to_json()).unwrap();
        assert_eq!(field.shape, back.shape);
        assert_eq!(field.origin, back.origin);
        let ga = field.metric_at(&[0.5, 0.5]).unwrap();
        let gb = back.metric_at(&[0.5, 0.5]).unwrap();
        assert_relative_eq!(ga[(0, 0)], gb[(0, 0)], epsilon = 1e-12);

        assert!(MetricField::from_json("{\"dim\": 2}").is_err());
    }

    #[test]
    fn geodesic_csv_has_header_and_rows() {
        let field = MetricField::from_fn(
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![2, 2],
            1e-9,
            |_| DMatrix::identity(2, 2),
        );
        let path = integrate_geodesic(&field, &[0.1, 0.1], &[0.1, 0.0], 0.5, 2, 0.1).unwrap();
        let csv = path.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "step,x0,x1,v0,v1");
        assert_eq!(csv.lines().count(), 1 + path.points.len());
    }
}
