//! Criticality, accessibility, reducible normal form and the 3-type case table.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::ModelError;

/// |rho - 1| below this counts as critical.
pub const CRITICALITY_TOLERANCE: f64 = 1e-10;
/// Entries with absolute value at most this are structural zeros in case detection.
pub const ZERO_TOLERANCE: f64 = 1e-12;

const POWER_ITERATION_CAP: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criticality {
    Subcritical,
    Critical,
    Supercritical,
}

impl Criticality {
    fn from_radius(rho: f64) -> Self {
        if (rho - 1.0).abs() <= CRITICALITY_TOLERANCE {
            Criticality::Critical
        } else if rho < 1.0 {
            Criticality::Subcritical
        } else {
            Criticality::Supercritical
        }
    }
}

fn check_nonnegative_square(a: &DMatrix<f64>) -> Result<(), ModelError> {
    if !a.is_square() {
        return Err(ModelError::NotSquare(a.nrows(), a.ncols()));
    }
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let x = a[(i, j)];
            if !(x.is_finite() && x >= 0.0) {
                return Err(ModelError::NegativeEntry(i, j));
            }
        }
    }
    Ok(())
}

fn is_triangular(a: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    let lower = (0..n).all(|i| (i + 1..n).all(|j| a[(i, j)] == 0.0));
    let upper = (0..n).all(|i| (0..i).all(|j| a[(i, j)] == 0.0));
    lower || upper
}

/// Spectral radius of a nonnegative square matrix.
///
/// Triangular matrices are read off the diagonal. Otherwise the radius is the
/// largest Perron root over the irreducible diagonal blocks of the normal form,
/// each found by power iteration on `B + I` (primitive for irreducible `B`)
/// until the Collatz-Wielandt bounds are within 1e-10.
pub fn spectral_radius(a: &DMatrix<f64>) -> Result<f64, ModelError> {
    check_nonnegative_square(a)?;
    if is_triangular(a) {
        return Ok(a.diagonal().iter().fold(0.0, |m, &d| m.max(d.abs())));
    }
    let form = reducible_normal_form(a)?;
    Ok(form.block_radii().into_iter().fold(0.0, f64::max))
}

fn perron_root_irreducible(block: &DMatrix<f64>) -> f64 {
    let n = block.nrows();
    if n == 1 {
        return block[(0, 0)];
    }
    let shifted = block + DMatrix::identity(n, n);
    let mut x = nalgebra::DVector::from_element(n, 1.0);
    let mut estimate = 0.0;
    for _ in 0..POWER_ITERATION_CAP {
        let y = &shifted * &x;
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..n {
            let ratio = y[i] / x[i];
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
        estimate = 0.5 * (lo + hi);
        let scale = y.max();
        x = y / scale;
        if hi - lo <= CRITICALITY_TOLERANCE {
            break;
        }
    }
    estimate - 1.0
}

pub fn classify_criticality(a: &DMatrix<f64>) -> Result<Criticality, ModelError> {
    spectral_radius(a).map(Criticality::from_radius)
}

/// Block lower-triangular normal form `P A P^T` with irreducible diagonal blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalForm {
    /// `order[r]` is the original (0-based) type placed at position `r`.
    pub order: Vec<usize>,
    pub block_sizes: Vec<usize>,
    pub permuted: DMatrix<f64>,
}

impl NormalForm {
    /// The permutation matrix P with `P A P^T = permuted`.
    pub fn permutation_matrix(&self) -> DMatrix<f64> {
        let n = self.order.len();
        let mut p = DMatrix::zeros(n, n);
        for (r, &o) in self.order.iter().enumerate() {
            p[(r, o)] = 1.0;
        }
        p
    }

    pub fn blocks(&self) -> Vec<DMatrix<f64>> {
        let mut start = 0;
        self.block_sizes
            .iter()
            .map(|&s| {
                let b = self.permuted.view((start, start), (s, s)).into_owned();
                start += s;
                b
            })
            .collect()
    }

    fn block_radii(&self) -> Vec<f64> {
        self.blocks().iter().map(perron_root_irreducible).collect()
    }
}

/// Digraph of the types: an edge `j -> i` whenever `a[i][j] > 0`.
fn successors(a: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let n = a.nrows();
    (0..n).map(|j| (0..n).filter(|&i| a[(i, j)] > 0.0).collect()).collect()
}

/// Tarjan's algorithm; returns the component index of every vertex.
fn strongly_connected_components(adj: &[Vec<usize>]) -> (Vec<usize>, usize) {
    struct State<'a> {
        adj: &'a [Vec<usize>],
        index: Vec<Option<usize>>,
        low: Vec<usize>,
        on_stack: Vec<bool>,
        stack: Vec<usize>,
        next: usize,
        comp: Vec<usize>,
        n_comp: usize,
    }
    fn visit(s: &mut State, v: usize) {
        s.index[v] = Some(s.next);
        s.low[v] = s.next;
        s.next += 1;
        s.stack.push(v);
        s.on_stack[v] = true;
        for k in 0..s.adj[v].len() {
            let w = s.adj[v][k];
            match s.index[w] {
                None => {
                    visit(s, w);
                    s.low[v] = s.low[v].min(s.low[w]);
                }
                Some(iw) if s.on_stack[w] => s.low[v] = s.low[v].min(iw),
                _ => {}
            }
        }
        if Some(s.low[v]) == s.index[v] {
            while let Some(w) = s.stack.pop() {
                s.on_stack[w] = false;
                s.comp[w] = s.n_comp;
                if w == v {
                    break;
                }
            }
            s.n_comp += 1;
        }
    }
    let n = adj.len();
    let mut s = State {
        adj,
        index: vec![None; n],
        low: vec![0; n],
        on_stack: vec![false; n],
        stack: Vec::new(),
        next: 0,
        comp: vec![0; n],
        n_comp: 0,
    };
    for v in 0..n {
        if s.index[v].is_none() {
            visit(&mut s, v);
        }
    }
    (s.comp, s.n_comp)
}

/// Reducible normal form via strongly connected components of the type digraph,
/// ordered topologically (ancestor classes first, ties broken by smallest type
/// index, so an already block lower-triangular matrix keeps `P = I`).
pub fn reducible_normal_form(a: &DMatrix<f64>) -> Result<NormalForm, ModelError> {
    check_nonnegative_square(a)?;
    let n = a.nrows();
    let adj = successors(a);
    let (comp, n_comp) = strongly_connected_components(&adj);

    let mut members = vec![Vec::new(); n_comp];
    for v in 0..n {
        members[comp[v]].push(v);
    }
    let mut indegree = vec![0usize; n_comp];
    let mut cond = vec![Vec::new(); n_comp];
    for v in 0..n {
        for &w in &adj[v] {
            let (cv, cw) = (comp[v], comp[w]);
            if cv != cw && !cond[cv].contains(&cw) {
                cond[cv].push(cw);
                indegree[cw] += 1;
            }
        }
    }
    let mut ready: BinaryHeap<Reverse<(usize, usize)>> = (0..n_comp)
        .filter(|&c| indegree[c] == 0)
        .map(|c| Reverse((members[c][0], c)))
        .collect();
    let mut order = Vec::with_capacity(n);
    let mut block_sizes = Vec::with_capacity(n_comp);
    while let Some(Reverse((_, c))) = ready.pop() {
        order.extend(&members[c]);
        block_sizes.push(members[c].len());
        for &d in &cond[c] {
            indegree[d] -= 1;
            if indegree[d] == 0 {
                ready.push(Reverse((members[d][0], d)));
            }
        }
    }
    let permuted = DMatrix::from_fn(n, n, |r, s| a[(order[r], order[s])]);
    Ok(NormalForm { order, block_sizes, permuted })
}

/// Every irreducible diagonal block of the normal form has spectral radius 1.
pub fn is_strongly_critical(a: &DMatrix<f64>) -> Result<bool, ModelError> {
    let form = reducible_normal_form(a)?;
    Ok(form.block_radii().into_iter().all(|r| (r - 1.0).abs() <= CRITICALITY_TOLERANCE))
}

/// Whether type `j` is accessible from type `i` (0-based): `(A^l)[j][i] > 0`
/// for some `0 <= l <= p`. The `l = 0` term makes every type accessible from itself.
pub fn accessible(a: &DMatrix<f64>, i: usize, j: usize) -> Result<bool, ModelError> {
    check_nonnegative_square(a)?;
    let p = a.nrows();
    for index in [i, j] {
        if index >= p {
            return Err(ModelError::IndexOutOfRange { index, p });
        }
    }
    let adj = successors(a);
    let mut seen = vec![false; p];
    let mut queue = vec![i];
    seen[i] = true;
    while let Some(v) = queue.pop() {
        if v == j {
            return Ok(true);
        }
        for &w in &adj[v] {
            if !std::mem::replace(&mut seen[w], true) {
                queue.push(w);
            }
        }
    }
    Ok(false)
}

/// Lower triangular with unit diagonal, entries compared at [`ZERO_TOLERANCE`].
pub fn is_lower_unipotent(a: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    a.is_square()
        && (0..n).all(|i| {
            (a[(i, i)] - 1.0).abs() <= ZERO_TOLERANCE
                && (i + 1..n).all(|j| a[(i, j)].abs() <= ZERO_TOLERANCE)
        })
}

/// The four sign patterns of a 3x3 lower-unipotent offspring mean matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Case {
    /// A = I.
    One,
    /// a21 = 0, a31 > 0, a32 >= 0.
    Two,
    /// a21 > 0, a31 > 0, a32 = 0.
    Three,
    /// a21 > 0, a31 >= 0, a32 > 0.
    Four,
}

impl Case {
    pub const ALL: [Case; 4] = [Case::One, Case::Two, Case::Three, Case::Four];

    pub fn number(self) -> u8 {
        match self {
            Case::One => 1,
            Case::Two => 2,
            Case::Three => 3,
            Case::Four => 4,
        }
    }

    /// Classifies `(a21, a31, a32)`; `None` for the two patterns outside the table.
    pub fn from_pattern(a21: f64, a31: f64, a32: f64) -> Option<Case> {
        let pos = |x: f64| x > ZERO_TOLERANCE;
        match (pos(a21), pos(a31), pos(a32)) {
            (false, false, false) => Some(Case::One),
            (false, true, _) => Some(Case::Two),
            (true, true, false) => Some(Case::Three),
            (true, _, true) => Some(Case::Four),
            _ => None,
        }
    }
}

impl From<Case> for u8 {
    fn from(c: Case) -> u8 {
        c.number()
    }
}

impl TryFrom<u8> for Case {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            1 => Ok(Case::One),
            2 => Ok(Case::Two),
            3 => Ok(Case::Three),
            4 => Ok(Case::Four),
            _ => Err(format!("case must be 1, 2, 3 or 4, got {v}")),
        }
    }
}

impl std::fmt::Display for Case {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// Detected case plus the relabelling of types that realises it:
/// new type `r` is original type `permutation[r]` (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseId {
    pub case: Case,
    pub permutation: [usize; 3],
}

impl CaseId {
    pub fn is_identity(&self) -> bool {
        self.permutation == [0, 1, 2]
    }
}

// Identity first, then (1 2) and (2 3), which normalise patterns (a) and (b).
const RELABELLINGS: [[usize; 3]; 6] = [[0, 1, 2], [1, 0, 2], [0, 2, 1], [2, 1, 0], [1, 2, 0], [2, 0, 1]];

/// Detects which case of the table a 3x3 offspring mean matrix belongs to.
///
/// The first relabelling (identity, (1 2), (2 3), (1 3), then the 3-cycles)
/// that turns `A` into a lower-unipotent matrix matching a row of the table
/// wins. Any two matching relabellings describe isomorphic type digraphs, so
/// the case itself is unambiguous.
pub fn detect_case(a: &DMatrix<f64>) -> Result<CaseId, ModelError> {
    check_nonnegative_square(a)?;
    if a.nrows() != 3 {
        return Err(ModelError::DimensionMismatch(format!("case detection needs 3 types, got {}", a.nrows())));
    }
    for perm in RELABELLINGS {
        let b = DMatrix::from_fn(3, 3, |r, s| a[(perm[r], perm[s])]);
        if !is_lower_unipotent(&b) {
            continue;
        }
        if let Some(case) = Case::from_pattern(b[(1, 0)], b[(2, 0)], b[(2, 1)]) {
            return Ok(CaseId { case, permutation: perm });
        }
    }
    Err(ModelError::NotUnipotent)
}
