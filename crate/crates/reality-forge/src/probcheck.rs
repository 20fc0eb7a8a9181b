//! Tests for classical (single sample space) structure in measured
//! frequencies: the three-variable Bell sum, the Accardi–Fedullo closed form
//! for dichotomic triples, a general LP feasibility check for a Kolmogorovian
//! joint distribution, and the Accardi statistical invariant with its
//! classical bound `0 ≤ A ≤ 1`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProbError {
    #[error("probability {0} outside [0,1]")]
    Range(f64),
    #[error("n^T = {0} atoms exceeds the desk-scale limit of 10^6")]
    Scale(f64),
    #[error("inconsistent input: {0}")]
    InconsistentInput(String),
    #[error("conditionals P(X|R) and P(X|notR) coincide; invariant undefined")]
    DegenerateDenominator,
}

const EXACT_TOL: f64 = 1e-12;
const LP_TOL: f64 = 1e-9;

fn check_unit(x: f64) -> Result<(), ProbError> {
    if !(0.0..=1.0).contains(&x) || !x.is_finite() {
        return Err(ProbError::Range(x));
    }
    Ok(())
}

/// The single parameters of the three pairwise bistochastic transition
/// matrices `P(A|B)`, `P(B|C)`, `P(C|A)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DichotomicTriple {
    pub p: f64,
    pub q: f64,
    pub r: f64,
}

impl DichotomicTriple {
    pub fn new(p: f64, q: f64, r: f64) -> Result<Self, ProbError> {
        for v in [p, q, r] {
            check_unit(v)?;
        }
        Ok(DichotomicTriple { p, q, r })
    }
}

/// Measured conditional/marginal frequencies around a relevance check and a
/// term-X detector.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MelucciStats {
    pub p_x: f64,
    pub p_x_given_r: f64,
    pub p_x_given_not_r: f64,
    pub p_r: f64,
}

impl MelucciStats {
    pub fn new(p_x: f64, p_x_given_r: f64, p_x_given_not_r: f64, p_r: f64) -> Result<Self, ProbError> {
        for v in [p_x, p_x_given_r, p_x_given_not_r, p_r] {
            check_unit(v)?;
        }
        Ok(MelucciStats {
            p_x,
            p_x_given_r,
            p_x_given_not_r,
            p_r,
        })
    }
}

/// `P(a=b) + P(b=c) + P(a=c)` and whether it clears the classical bound of 1.
/// Three ±1-valued variables must agree in at least one pair, so any joint
/// distribution forces the sum to 1 or more.
pub fn bell_sum(p_ab: f64, p_bc: f64, p_ac: f64) -> Result<(f64, bool), ProbError> {
    for v in [p_ab, p_bc, p_ac] {
        check_unit(v)?;
    }
    let sum = p_ab + p_bc + p_ac;
    Ok((sum, sum >= 1.0 - EXACT_TOL))
}

/// Closed-form classicality of a dichotomic triple:
/// `|p+q-1| <= r <= 1-|p-q|`, both within 1e-12.
pub fn accardi_fedullo_classical(t: &DichotomicTriple) -> bool {
    (t.p + t.q - 1.0).abs() <= t.r + EXACT_TOL && t.r <= 1.0 - (t.p - t.q).abs() + EXACT_TOL
}

/// Family of discrete observables with measured conditionals and marginals.
/// `cond[alpha][beta][i][j] = P(A_beta = j | A_alpha = i)`;
/// `marg[alpha][i] = P(A_alpha = i)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservableFamily {
    #[serde(rename = "T")]
    pub num_observables: usize,
    pub n: usize,
    pub cond: Vec<Vec<Vec<Vec<f64>>>>,
    pub marg: Vec<Vec<f64>>,
}

impl ObservableFamily {
    pub fn validate(&self) -> Result<(), ProbError> {
        let (t, n) = (self.num_observables, self.n);
        if self.cond.len() != t || self.marg.len() != t {
            return Err(ProbError::InconsistentInput(
                "cond/marg shape does not match T".to_string(),
            ));
        }
        for alpha in 0..t {
            if self.marg[alpha].len() != n {
                return Err(ProbError::InconsistentInput(format!(
                    "marg[{alpha}] has wrong arity"
                )));
            }
            let s: f64 = self.marg[alpha].iter().sum();
            if (s - 1.0).abs() > LP_TOL {
                return Err(ProbError::InconsistentInput(format!(
                    "marg[{alpha}] sums to {s}"
                )));
            }
            for v in &self.marg[alpha] {
                check_unit(*v)?;
            }
            if self.cond[alpha].len() != t {
                return Err(ProbError::InconsistentInput(format!(
                    "cond[{alpha}] has wrong arity"
                )));
            }
            for beta in 0..t {
                let m = &self.cond[alpha][beta];
                if m.len() != n || m.iter().any(|row| row.len() != n) {
                    return Err(ProbError::InconsistentInput(format!(
                        "cond[{alpha}][{beta}] is not {n}x{n}"
                    )));
                }
                for row in m {
                    let s: f64 = row.iter().sum();
                    if (s - 1.0).abs() > LP_TOL {
                        return Err(ProbError::InconsistentInput(format!(
                            "cond[{alpha}][{beta}] row sums to {s}"
                        )));
                    }
                    for v in row {
                        check_unit(*v)?;
                    }
                }
            }
        }
        Ok(())
    }

    /// The T=3, n=2 family induced by a dichotomic triple, with the uniform
    /// marginals forced by bistochasticity. Observables are ordered A, B, C;
    /// `p = P(a=b)`, `q = P(b=c)`, `r = P(c=a)`.
    pub fn from_triple(t: &DichotomicTriple) -> ObservableFamily {
        let sym = |v: f64| vec![vec![v, 1.0 - v], vec![1.0 - v, v]];
        let ident = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        // Bistochastic symmetric matrices are their own transpose, so the
        // reverse conditionals coincide under uniform marginals.
        let cond = vec![
            vec![ident.clone(), sym(t.p), sym(t.r)],
            vec![sym(t.p), ident.clone(), sym(t.q)],
            vec![sym(t.r), sym(t.q), ident],
        ];
        ObservableFamily {
            num_observables: 3,
            n: 2,
            cond,
            marg: vec![vec![0.5, 0.5]; 3],
        }
    }
}

/// Decide whether a single probability space reproduces all conditionals and
/// marginals. Atoms are the `n^T` value-assignment functions; the constraints
/// (total mass, marginals, pairwise joints) form a linear feasibility
/// problem solved by phase-1 simplex with Bland's rule. Returns the atom
/// weights when feasible.
pub fn kolmogorov_feasible(f: &ObservableFamily) -> Result<(bool, Option<Vec<f64>>), ProbError> {
    f.validate()?;
    let (t, n) = (f.num_observables, f.n);
    let atoms_f = (n as f64).powi(t as i32);
    if atoms_f > 1e6 {
        return Err(ProbError::Scale(atoms_f));
    }
    let atoms = atoms_f as usize;
    // atom index -> value of observable alpha (mixed radix, alpha 0 least
    // significant).
    let value_of = |atom: usize, alpha: usize| -> usize {
        (atom / n.pow(alpha as u32)) % n
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    // Total mass.
    rows.push(vec![1.0; atoms]);
    rhs.push(1.0);
    // Marginals.
    for alpha in 0..t {
        for i in 0..n {
            let mut row = vec![0.0; atoms];
            for (atom, slot) in row.iter_mut().enumerate() {
                if value_of(atom, alpha) == i {
                    *slot = 1.0;
                }
            }
            rows.push(row);
            rhs.push(f.marg[alpha][i]);
        }
    }
    // Pairwise joints: P(A_alpha = i, A_beta = j) = cond * marg.
    for alpha in 0..t {
        for beta in 0..t {
            if alpha == beta {
                continue;
            }
            for i in 0..n {
                for j in 0..n {
                    let mut row = vec![0.0; atoms];
                    for (atom, slot) in row.iter_mut().enumerate() {
                        if value_of(atom, alpha) == i && value_of(atom, beta) == j {
                            *slot = 1.0;
                        }
                    }
                    rows.push(row);
                    rhs.push(f.cond[alpha][beta][i][j] * f.marg[alpha][i]);
                }
            }
        }
    }

    let solution = phase_one_simplex(&rows, &rhs);
    Ok(match solution {
        Some(x) => (true, Some(x)),
        None => (false, None),
    })
}

/// Phase-1 simplex: find x >= 0 with `A x = b`, or report infeasibility.
/// Dense tableau, Bland's rule for anti-cycling.
fn phase_one_simplex(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let m = a.len();
    let n = a[0].len();
    // Tableau: n structural columns, m artificial columns, rhs.
    let mut tab: Vec<Vec<f64>> = Vec::with_capacity(m);
    for (i, row) in a.iter().enumerate() {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        let mut r: Vec<f64> = row.iter().map(|&v| sign * v).collect();
        r.resize(n + m + 1, 0.0);
        r[n + i] = 1.0;
        r[n + m] = sign * b[i];
        tab.push(r);
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    // Phase-1 objective row: sum of the constraint rows over structural
    // columns; value = sum of rhs.
    let mut obj = vec![0.0f64; n + m + 1];
    for row in &tab {
        for (j, v) in row.iter().enumerate() {
            obj[j] += v;
        }
    }
    for j in n..n + m {
        obj[j] = 0.0;
    }

    loop {
        // Bland: smallest-index column with positive reduced cost.
        let entering = (0..n + m).find(|&j| obj[j] > LP_TOL && !basis.contains(&j));
        let Some(col) = entering else { break };
        // Ratio test; ties leave the smallest basis variable (Bland).
        let mut pivot: Option<(usize, f64)> = None;
        for (i, row) in tab.iter().enumerate() {
            if row[col] > LP_TOL {
                let ratio = row[n + m] / row[col];
                match pivot {
                    None => pivot = Some((i, ratio)),
                    Some((pi, pr)) => {
                        if ratio < pr - LP_TOL
                            || ((ratio - pr).abs() <= LP_TOL && basis[i] < basis[pi])
                        {
                            pivot = Some((i, ratio));
                        }
                    }
                }
            }
        }
        let Some((prow, _)) = pivot else {
            // Unbounded phase-1 objective cannot happen (bounded below by 0);
            // treat as numerically stuck.
            break;
        };
        let pval = tab[prow][col];
        for v in tab[prow].iter_mut() {
            *v /= pval;
        }
        for i in 0..m {
            if i != prow && tab[i][col].abs() > 0.0 {
                let factor = tab[i][col];
                let prow_copy = tab[prow].clone();
                for (v, pv) in tab[i].iter_mut().zip(&prow_copy) {
                    *v -= factor * pv;
                }
            }
        }
        let factor = obj[col];
        for (v, pv) in obj.iter_mut().zip(&tab[prow]) {
            *v -= factor * pv;
        }
        basis[prow] = col;
    }

    let infeasibility = obj[n + m];
    if infeasibility.abs() > LP_TOL {
        return None;
    }
    let mut x = vec![0.0f64; n];
    for (i, &bv) in basis.iter().enumerate() {
        if bv < n {
            x[bv] = tab[i][n + m].max(0.0);
        } else if tab[i][n + m].abs() > LP_TOL {
            return None;
        }
    }
    Some(x)
}

/// Accardi statistical invariant
/// `A = (P(X) - P(X|notR)) / (P(X|R) - P(X|notR))`.
pub fn accardi_invariant(s: &MelucciStats) -> Result<f64, ProbError> {
    let den = s.p_x_given_r - s.p_x_given_not_r;
    if den.abs() <= EXACT_TOL {
        return Err(ProbError::DegenerateDenominator);
    }
    Ok((s.p_x - s.p_x_given_not_r) / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classicality {
    Classical,
    Nonclassical,
}

/// `classical` iff `-tol <= A <= 1 + tol`. The default strict call uses
/// tol = 0; statistical callers pass a CI-derived tol.
pub fn classify_accardi(a: f64, tol: f64) -> Classicality {
    if a >= -tol && a <= 1.0 + tol {
        Classicality::Classical
    } else {
        Classicality::Nonclassical
    }
}

/// `P(X) - [P(X|R)P(R) + P(X|notR)(1-P(R))]`: the failure of the law of
/// total probability.
pub fn total_probability_residual(s: &MelucciStats) -> f64 {
    s.p_x - (s.p_x_given_r * s.p_r + s.p_x_given_not_r * (1.0 - s.p_r))
}
