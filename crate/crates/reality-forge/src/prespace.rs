//! The discrete pre-space: pairwise click distances, transversal layers
//! indexed by click position, and the layered skeleton linking nearest
//! neighbors across threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clicklog::{ClickstreamCollection, TermBag};

#[derive(Debug, Error)]
pub enum PrespaceError {
    #[error("skeleton JSON: {0}")]
    Json(String),
}

/// Distance scheme over combined query ⊎ response term bags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceScheme {
    /// `1 − cos` angle between count vectors.
    Cosine,
    /// `1 − |A∩B| / |A∪B|` on term sets.
    Jaccard,
}

/// Reference to one click of the source collection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PointRef {
    pub stream_index: usize,
    pub seq: usize,
}

/// All k-th clicks across streams: the analog of a spacelike hypersurface.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layer {
    pub label: usize,
    /// Sorted by stream_index.
    pub points: Vec<PointRef>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Thread,
    Neighbor,
}

/// Undirected weighted edge; endpoints are stored in canonical
/// `(stream_index, seq)` order with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkeletonEdge {
    pub a: PointRef,
    pub b: PointRef,
    pub length: f64,
    pub kind: EdgeKind,
}

/// Discrete metric pre-space: transversal layers plus thread and
/// nearest-neighbor edges. The edge list is canonical (sorted, each
/// undirected edge stored once).
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredSkeleton {
    pub layers: Vec<Layer>,
    pub edges: Vec<SkeletonEdge>,
}

/// Distance between two term bags under the given scheme. Both bags empty
/// gives 0; exactly one empty gives 1 (keeps the function total and
/// `d(x,x) = 0`).
pub fn bag_distance(a: &TermBag, b: &TermBag, scheme: DistanceScheme) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return 0.0,
        (true, false) | (false, true) => return 1.0,
        _ => {}
    }
    // Exact zero for identical bags; the cosine branch would otherwise
    // leave rounding residue on the order of machine epsilon.
    if a == b {
        return 0.0;
    }
    match scheme {
        DistanceScheme::Cosine => {
            let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
            let (ea, eb) = (a.entries(), b.entries());
            let (mut i, mut j) = (0, 0);
            while i < ea.len() && j < eb.len() {
                let (x, y) = (ea[i], eb[j]);
                if x.0 < y.0 {
                    i += 1;
                } else if x.0 > y.0 {
                    j += 1;
                } else {
                    dot += x.1 as f64 * y.1 as f64;
                    i += 1;
                    j += 1;
                }
            }
            for &(_, c) in ea {
                na += (c as f64) * (c as f64);
            }
            for &(_, c) in eb {
                nb += (c as f64) * (c as f64);
            }
            (1.0 - dot / (na.sqrt() * nb.sqrt())).clamp(0.0, 1.0)
        }
        DistanceScheme::Jaccard => {
            let (ea, eb) = (a.entries(), b.entries());
            let (mut i, mut j) = (0, 0);
            let mut inter = 0usize;
            while i < ea.len() && j < eb.len() {
                if ea[i].0 < eb[j].0 {
                    i += 1;
                } else if ea[i].0 > eb[j].0 {
                    j += 1;
                } else {
                    inter += 1;
                    i += 1;
                    j += 1;
                }
            }
            let union = ea.len() + eb.len() - inter;
            1.0 - inter as f64 / union as f64
        }
    }
}

/// Distance between two clicks of a collection.
pub fn click_distance(
    c: &ClickstreamCollection,
    p: PointRef,
    q: PointRef,
    scheme: DistanceScheme,
) -> f64 {
    bag_distance(
        c.bag(p.stream_index, p.seq),
        c.bag(q.stream_index, q.seq),
        scheme,
    )
}

/// Group points by click position: layer k holds the k-th click of every
/// stream long enough to have one.
pub fn build_layers(c: &ClickstreamCollection) -> Vec<Layer> {
    let num_layers = c.max_stream_len();
    (0..num_layers)
        .map(|label| {
            let points = c
                .streams()
                .iter()
                .enumerate()
                .filter(|(_, s)| label < s.clicks.len())
                .map(|(stream_index, _)| PointRef {
                    stream_index,
                    seq: label,
                })
                .collect();
            Layer { label, points }
        })
        .collect()
}

/// Single-layer skeleton with the complete distance graph over that
/// layer's points. Useful as a dense anchor for embedding initializers:
/// unlike the k-nearest-neighbor skeleton it pins the global arrangement of
/// streams, at quadratic cost in the layer size.
pub fn complete_layer(
    c: &ClickstreamCollection,
    scheme: DistanceScheme,
    layer_index: usize,
) -> Option<LayeredSkeleton> {
    let layers = build_layers(c);
    let layer = layers.get(layer_index)?.clone();
    let mut edges = Vec::new();
    for (i, &a) in layer.points.iter().enumerate() {
        for &b in layer.points.iter().skip(i + 1) {
            edges.push(SkeletonEdge {
                a,
                b,
                length: click_distance(c, a, b, scheme),
                kind: EdgeKind::Neighbor,
            });
        }
    }
    Some(LayeredSkeleton {
        layers: vec![layer],
        edges,
    })
}

/// Thread edges for consecutive clicks, plus K-nearest-neighbor edges within
/// the union of a point's own layer and the two adjacent layers (thread
/// partners excluded). The neighbor relation is symmetrized by union and the
/// result sorted into a canonical order. KNN ties break lexicographically on
/// `(layer, stream_index, seq)`.
pub fn build_skeleton(
    c: &ClickstreamCollection,
    scheme: DistanceScheme,
    k: usize,
) -> LayeredSkeleton {
    let layers = build_layers(c);
    let mut edges: Vec<SkeletonEdge> = Vec::new();
    for (si, s) in c.streams().iter().enumerate() {
        for seq in 1..s.clicks.len() {
            let a = PointRef {
                stream_index: si,
                seq: seq - 1,
            };
            let b = PointRef {
                stream_index: si,
                seq,
            };
            edges.push(SkeletonEdge {
                a,
                b,
                length: click_distance(c, a, b, scheme),
                kind: EdgeKind::Thread,
            });
        }
    }
    if k > 0 {
        let points: Vec<PointRef> = layers.iter().flat_map(|l| l.points.iter().copied()).collect();
        let neighbor_lists: Vec<Vec<(PointRef, f64)>> = points
            .par_iter()
            .map(|&p| knn_of(c, &layers, p, scheme, k))
            .collect();
        let mut pairs: Vec<(PointRef, PointRef, f64)> = Vec::new();
        for (i, list) in neighbor_lists.iter().enumerate() {
            let p = points[i];
            for &(q, d) in list {
                let (a, b) = if p < q { (p, q) } else { (q, p) };
                pairs.push((a, b, d));
            }
        }
        pairs.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        pairs.dedup_by(|x, y| x.0 == y.0 && x.1 == y.1);
        for (a, b, length) in pairs {
            edges.push(SkeletonEdge {
                a,
                b,
                length,
                kind: EdgeKind::Neighbor,
            });
        }
    }
    edges.sort_by(|x, y| (x.a, x.b, x.kind).cmp(&(y.a, y.b, y.kind)));
    LayeredSkeleton { layers, edges }
}

fn knn_of(
    c: &ClickstreamCollection,
    layers: &[Layer],
    p: PointRef,
    scheme: DistanceScheme,
    k: usize,
) -> Vec<(PointRef, f64)> {
    let label = p.seq;
    let lo = label.saturating_sub(1);
    let hi = (label + 1).min(layers.len().saturating_sub(1));
    let stream_len = c.streams()[p.stream_index].clicks.len();
    let mut cands: Vec<(f64, usize, usize, usize, PointRef)> = Vec::new();
    for layer in &layers[lo..=hi] {
        for &q in &layer.points {
            if q == p {
                continue;
            }
            // Thread partners (previous/next click of the same stream).
            if q.stream_index == p.stream_index
                && (q.seq + 1 == p.seq || (p.seq + 1 == q.seq && q.seq < stream_len))
            {
                continue;
            }
            let d = click_distance(c, p, q, scheme);
            cands.push((d, layer.label, q.stream_index, q.seq, q));
        }
    }
    cands.sort_by(|x, y| {
        x.0.partial_cmp(&y.0)
            .expect("distances are finite")
            .then((x.1, x.2, x.3).cmp(&(y.1, y.2, y.3)))
    });
    cands
        .into_iter()
        .take(k)
        .map(|(d, _, _, _, q)| (q, d))
        .collect()
}

impl LayeredSkeleton {
    pub fn num_points(&self) -> usize {
        self.layers.iter().map(|l| l.points.len()).sum()
    }

    pub fn points(&self) -> impl Iterator<Item = PointRef> + '_ {
        self.layers.iter().flat_map(|l| l.points.iter().copied())
    }

    /// JSON document with `layers` and `edges`; lengths printed at 17
    /// significant digits.
    pub fn to_json(&self) -> String {
        let mut out = String::from("{\n  \"layers\": [\n");
        for (i, layer) in self.layers.iter().enumerate() {
            let pts: Vec<String> = layer
                .points
                .iter()
                .map(|p| format!("[{},{}]", p.stream_index, p.seq))
                .collect();
            out.push_str(&format!(
                "    {{\"label\": {}, \"points\": [{}]}}{}\n",
                layer.label,
                pts.join(","),
                if i + 1 < self.layers.len() { "," } else { "" }
            ));
        }
        out.push_str("  ],\n  \"edges\": [\n");
        for (i, e) in self.edges.iter().enumerate() {
            let kind = match e.kind {
                EdgeKind::Thread => "thread",
                EdgeKind::Neighbor => "neighbor",
            };
            out.push_str(&format!(
                "    {{\"i_stream\": {}, \"i_seq\": {}, \"j_stream\": {}, \"j_seq\": {}, \"length\": {:.16e}, \"kind\": \"{}\"}}{}\n",
                e.a.stream_index,
                e.a.seq,
                e.b.stream_index,
                e.b.seq,
                e.length,
                kind,
                if i + 1 < self.edges.len() { "," } else { "" }
            ));
        }
        out.push_str("  ]\n}\n");
        out
    }

    pub fn from_json(text: &str) -> Result<Self, PrespaceError> {
        #[derive(Deserialize)]
        struct LayerRec {
            label: usize,
            points: Vec<(usize, usize)>,
        }
        #[derive(Deserialize)]
        struct EdgeRec {
            i_stream: usize,
            i_seq: usize,
            j_stream: usize,
            j_seq: usize,
            length: f64,
            kind: EdgeKind,
        }
        #[derive(Deserialize)]
        struct Doc {
            layers: Vec<LayerRec>,
            edges: Vec<EdgeRec>,
        }
        let doc: Doc = serde_json::from_str(text).map_err(|e| PrespaceError::Json(e.to_string()))?;
        Ok(LayeredSkeleton {
            layers: doc
                .layers
                .into_iter()
                .map(|l| Layer {
                    label: l.label,
                    points: l
                        .points
                        .into_iter()
                        .map(|(stream_index, seq)| PointRef { stream_index, seq })
                        .collect(),
                })
                .collect(),
            edges: doc
                .edges
                .into_iter()
                .map(|e| SkeletonEdge {
                    a: PointRef {
                        stream_index: e.i_stream,
                        seq: e.i_seq,
                    },
                    b: PointRef {
                        stream_index: e.j_stream,
                        seq: e.j_seq,
                    },
                    length: e.length,
                    kind: e.kind,
                })
                .collect(),
        })
    }
}
