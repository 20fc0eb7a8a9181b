//! Incidence-style matrix algebras over directed acyclic graphs.
//!
//! A DAG induces a template: the boolean support mask allowing a matrix
//! entry wherever the graph has an arrow, plus the full diagonal. Sets of
//! matrices with such a support are closed under products exactly when the
//! support relation is transitive. The reverse direction — spatialization —
//! starts from a plain linear subspace of matrices and recovers a finite
//! topological space (and, in the acyclic case, a DAG) from the union of
//! the supports.

use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RotaError {
    #[error("edge list contains a cycle through vertex {0}")]
    CycleError(usize),
    #[error("edge ({0}, {1}) out of range for {2} vertices")]
    EdgeOutOfRange(usize, usize, usize),
    #[error("weight[{row}][{col}] = {value} is nonzero outside the mask")]
    MaskViolation { row: usize, col: usize, value: f64 },
    #[error("matrix subspace has no spanning matrices")]
    EmptySubspace,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("JSON: {0}")]
    Json(String),
}

/// Directed acyclic graph on vertices `0..m`. Self-loops are rejected;
/// reflexivity lives in the template, not the graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    m: usize,
    edges: Vec<(usize, usize)>,
}

impl Dag {
    pub fn new(m: usize, mut edges: Vec<(usize, usize)>) -> Result<Self, RotaError> {
        for &(j, k) in &edges {
            if j >= m || k >= m {
                return Err(RotaError::EdgeOutOfRange(j, k, m));
            }
        }
        edges.sort_unstable();
        edges.dedup();
        if let Some(&(j, _)) = edges.iter().find(|&&(j, k)| j == k) {
            return Err(RotaError::CycleError(j));
        }
        // Kahn's algorithm; leftover vertices witness a cycle.
        let mut indeg = vec![0usize; m];
        for &(_, k) in &edges {
            indeg[k] += 1;
        }
        let mut queue: Vec<usize> = (0..m).filter(|&v| indeg[v] == 0).collect();
        let mut seen = 0;
        while let Some(v) = queue.pop() {
            seen += 1;
            for &(j, k) in &edges {
                if j == v {
                    indeg[k] -= 1;
                    if indeg[k] == 0 {
                        queue.push(k);
                    }
                }
            }
        }
        if seen != m {
            let v = (0..m).find(|&v| indeg[v] > 0).unwrap_or(0);
            return Err(RotaError::CycleError(v));
        }
        Ok(Dag { m, edges })
    }

    pub fn num_vertices(&self) -> usize {
        self.m
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// JSON format `{m, edges}`.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&serde_json::json!({
            "m": self.m,
            "edges": self.edges,
        }))
        .expect("dag serializes")
            + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, RotaError> {
        #[derive(Deserialize)]
        struct Doc {
            m: usize,
            edges: Vec<(usize, usize)>,
        }
        let doc: Doc = serde_json::from_str(text).map_err(|e| RotaError::Json(e.to_string()))?;
        Dag::new(doc.m, doc.edges)
    }
}

/// Boolean support mask with a guaranteed true diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateMatrix {
    pub m: usize,
    /// mask[j][k]: entry (j, k) may be nonzero.
    pub mask: Vec<Vec<bool>>,
}

impl TemplateMatrix {
    pub fn from_mask(mask: Vec<Vec<bool>>) -> Result<Self, RotaError> {
        let m = mask.len();
        if mask.iter().any(|row| row.len() != m) {
            return Err(RotaError::Dimension("mask must be square".into()));
        }
        let mut mask = mask;
        for (j, row) in mask.iter_mut().enumerate() {
            row[j] = true;
        }
        Ok(TemplateMatrix { m, mask })
    }

    pub fn allows(&self, j: usize, k: usize) -> bool {
        self.mask[j][k]
    }

    /// Dense basis of the allowed entries: one unit matrix per true cell.
    pub fn basis(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for j in 0..self.m {
            for k in 0..self.m {
                if self.mask[j][k] {
                    let mut e = vec![0.0; self.m * self.m];
                    e[j * self.m + k] = 1.0;
                    out.push(e);
                }
            }
        }
        out
    }
}

/// Support mask of a DAG: wildcard wherever `j -> k` is an arrow, plus the
/// diagonal. Only direct arrows count; a chain does not allow its two-step
/// composite until closure.
pub fn template_matrix(d: &Dag) -> TemplateMatrix {
    let m = d.num_vertices();
    let mut mask = vec![vec![false; m]; m];
    for j in 0..m {
        mask[j][j] = true;
    }
    for &(j, k) in d.edges() {
        mask[j][k] = true;
    }
    TemplateMatrix { m, mask }
}

/// The set of matrices with this support is closed under products iff the
/// support relation is transitive, i.e. the boolean square of the mask
/// stays inside the mask.
pub fn is_closed_algebra(t: &TemplateMatrix) -> bool {
    let m = t.m;
    for j in 0..m {
        for l in 0..m {
            for k in 0..m {
                if t.mask[j][k] && t.mask[k][l] && !t.mask[j][l] {
                    return false;
                }
            }
        }
    }
    true
}

/// Least closed superset of the mask: reflexive-transitive (Warshall)
/// closure of the support relation.
pub fn algebra_closure(t: &TemplateMatrix) -> TemplateMatrix {
    let m = t.m;
    let mut mask = t.mask.clone();
    for k in 0..m {
        for j in 0..m {
            if mask[j][k] {
                for l in 0..m {
                    if mask[k][l] {
                        mask[j][l] = true;
                    }
                }
            }
        }
    }
    TemplateMatrix { m, mask }
}

/// Multiply the signal by the weight matrix `layers` times. Weights must
/// vanish outside the template's support.
pub fn propagate(
    t: &TemplateMatrix,
    weights: &[Vec<f64>],
    signal: &[f64],
    layers: usize,
) -> Result<Vec<f64>, RotaError> {
    let m = t.m;
    if weights.len() != m || weights.iter().any(|r| r.len() != m) {
        return Err(RotaError::Dimension(format!("weights must be {m}x{m}")));
    }
    if signal.len() != m {
        return Err(RotaError::Dimension(format!("signal must have length {m}")));
    }
    for (j, row) in weights.iter().enumerate() {
        for (k, &w) in row.iter().enumerate() {
            if !t.mask[j][k] && w != 0.0 {
                return Err(RotaError::MaskViolation {
                    row: j,
                    col: k,
                    value: w,
                });
            }
        }
    }
    let mut out = signal.to_vec();
    for _ in 0..layers {
        let prev = out;
        out = (0..m)
            .map(|j| (0..m).map(|k| weights[j][k] * prev[k]).sum())
            .collect();
    }
    Ok(out)
}

/// Spanning set of an m x m matrix subspace, matrices dense row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSubspace {
    pub m: usize,
    pub matrices: Vec<Vec<f64>>,
}

impl MatrixSubspace {
    pub fn new(m: usize, matrices: Vec<Vec<f64>>) -> Result<Self, RotaError> {
        if matrices.is_empty() {
            return Err(RotaError::EmptySubspace);
        }
        if matrices.iter().any(|mat| mat.len() != m * m) {
            return Err(RotaError::Dimension(format!(
                "every spanning matrix must have {m}*{m} entries"
            )));
        }
        Ok(MatrixSubspace { m, matrices })
    }

    /// JSON input: list of dense row-major matrices (list of rows).
    pub fn from_json(text: &str) -> Result<Self, RotaError> {
        let rows: Vec<Vec<Vec<f64>>> =
            serde_json::from_str(text).map_err(|e| RotaError::Json(e.to_string()))?;
        let m = rows.first().map_or(0, |mat| mat.len());
        let matrices = rows
            .into_iter()
            .map(|mat| {
                if mat.len() != m || mat.iter().any(|r| r.len() != m) {
                    return Err(RotaError::Dimension("ragged matrix in subspace".into()));
                }
                Ok(mat.into_iter().flatten().collect())
            })
            .collect::<Result<Vec<Vec<f64>>, _>>()?;
        MatrixSubspace::new(m, matrices)
    }
}

/// Finite Alexandrov space: T0 quotient of the support preorder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinitePreorderTopology {
    /// Equivalence classes of matrix indices, each sorted; classes ordered
    /// by smallest member.
    pub classes: Vec<Vec<usize>>,
    /// leq[a][b]: class a specializes to class b (a <= b); reflexive,
    /// transitive, antisymmetric.
    pub leq: Vec<Vec<bool>>,
}

impl FinitePreorderTopology {
    /// Minimal open neighborhood of a class: its up-set.
    pub fn min_open(&self, class: usize) -> Vec<usize> {
        (0..self.classes.len())
            .filter(|&b| self.leq[class][b])
            .collect()
    }

    /// All open sets (unions of up-sets). Exponential; intended for small
    /// spaces.
    pub fn open_sets(&self) -> Vec<Vec<usize>> {
        let n = self.classes.len();
        assert!(n <= 20, "open-set enumeration caps at 20 classes");
        let mut opens = Vec::new();
        'subset: for s in 0u32..(1 << n) {
            for a in 0..n {
                if s & (1 << a) != 0 {
                    for b in 0..n {
                        if self.leq[a][b] && s & (1 << b) == 0 {
                            continue 'subset;
                        }
                    }
                }
            }
            opens.push((0..n).filter(|&a| s & (1 << a) != 0).collect());
        }
        opens
    }

    pub fn to_json(&self) -> String {
        let edges: Vec<(usize, usize)> = (0..self.classes.len())
            .flat_map(|a| {
                (0..self.classes.len())
                    .filter(move |&b| a != b && self.leq[a][b])
                    .map(move |b| (a, b))
            })
            .collect();
        serde_json::to_string_pretty(&serde_json::json!({
            "classes": self.classes,
            "order": edges,
        }))
        .expect("topology serializes")
            + "\n"
    }
}

/// Result of spatialization: always a topology, plus the recovered DAG
/// when the support preorder has no nontrivial cycles.
#[derive(Debug, Clone)]
pub struct Spatialization {
    pub topology: FinitePreorderTopology,
    /// Transitive reduction of the quotient order, present iff every
    /// equivalence class is a singleton.
    pub dag: Option<Dag>,
    /// Classes with more than one index (mutual-reachability cycles).
    pub cycles: Vec<Vec<usize>>,
}

/// Recover a space from a matrix subspace: union the supports of the
/// spanning matrices (|entry| > 1e-12), add the diagonal, close
/// reflexively-transitively, quotient by mutual reachability, and read off
/// the Alexandrov topology of the quotient order.
pub fn spatialize(s: &MatrixSubspace) -> Result<Spatialization, RotaError> {
    if s.matrices.is_empty() {
        return Err(RotaError::EmptySubspace);
    }
    let m = s.m;
    let mut reach = vec![vec![false; m]; m];
    for j in 0..m {
        reach[j][j] = true;
    }
    for mat in &s.matrices {
        for j in 0..m {
            for k in 0..m {
                if mat[j * m + k].abs() > 1e-12 {
                    reach[j][k] = true;
                }
            }
        }
    }
    for k in 0..m {
        for j in 0..m {
            if reach[j][k] {
                for l in 0..m {
                    if reach[k][l] {
                        reach[j][l] = true;
                    }
                }
            }
        }
    }

    // Quotient by mutual reachability.
    let mut class_of = vec![usize::MAX; m];
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for j in 0..m {
        if class_of[j] != usize::MAX {
            continue;
        }
        let id = classes.len();
        let members: Vec<usize> = (j..m).filter(|&k| reach[j][k] && reach[k][j]).collect();
        for &k in &members {
            class_of[k] = id;
        }
        classes.push(members);
    }
    let n = classes.len();
    let mut leq = vec![vec![false; n]; n];
    for j in 0..m {
        for k in 0..m {
            if reach[j][k] {
                leq[class_of[j]][class_of[k]] = true;
            }
        }
    }
    let cycles: Vec<Vec<usize>> = classes.iter().filter(|c| c.len() > 1).cloned().collect();

    let dag = if cycles.is_empty() {
        // Transitive reduction: drop a <= b when some c sits strictly
        // between them.
        let mut edges = Vec::new();
        for a in 0..n {
            for b in 0..n {
                if a == b || !leq[a][b] {
                    continue;
                }
                let shortcut = (0..n)
                    .any(|c| c != a && c != b && leq[a][c] && leq[c][b]);
                if !shortcut {
                    edges.push((classes[a][0], classes[b][0]));
                }
            }
        }
        Some(Dag::new(m, edges).expect("quotient order is acyclic"))
    } else {
        None
    };

    Ok(Spatialization {
        topology: FinitePreorderTopology { classes, leq },
        dag,
        cycles,
    })
}
