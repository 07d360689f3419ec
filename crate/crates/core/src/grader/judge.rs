use std::collections::{BTreeMap, BTreeSet};

use num_rational::BigRational;
use num_traits::{FromPrimitive, Signed};
use serde::{Deserialize, Serialize};

use super::expr::Expr;
use super::parse::normalize_text;
use super::value::{AnswerValue, Interval, Matrix};
use crate::rng::CounterRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VerdictKind {
    Equivalent,
    NotEquivalent,
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub kind: VerdictKind,
    pub reason: String,
}

impl Verdict {
    fn yes(reason: impl Into<String>) -> Self {
        Self { kind: VerdictKind::Equivalent, reason: reason.into() }
    }

    fn no(reason: impl Into<String>) -> Self {
        Self { kind: VerdictKind::NotEquivalent, reason: reason.into() }
    }

    fn unknown(reason: impl Into<String>) -> Self {
        Self { kind: VerdictKind::Indeterminate, reason: reason.into() }
    }

    pub fn is_equivalent(&self) -> bool {
        self.kind == VerdictKind::Equivalent
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerance {
    /// Relative tolerance applied when either side was written as a decimal.
    pub rel: f64,
    /// Absolute tolerance for probe evaluation, scaled by magnitude above 1.
    pub abs: f64,
    pub n_probe: u32,
    pub probe_seed: u64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            rel: 1e-4,
            abs: 1e-9,
            n_probe: 8,
            probe_seed: 0x5EED_0F_9A0BE,
        }
    }
}

/// Probe values are drawn from `[PROBE_LO, PROBE_HI)`.
const PROBE_LO: f64 = 0.5;
const PROBE_HI: f64 = 3.0;

pub fn judge_equivalence(a: &AnswerValue, b: &AnswerValue, tol: &Tolerance) -> Verdict {
    if a == b {
        return Verdict::yes("identical");
    }
    use AnswerValue as V;
    match (a, b) {
        (x, y) if x.is_numeric() && y.is_numeric() => compare_exact(x, y, tol),
        (V::Symbolic(_), y) | (y, V::Symbolic(_)) if y.is_numeric() || matches!(y, V::Symbolic(_)) => {
            compare_symbolic(a, b, tol)
        }
        (V::Tuple(xs), V::Tuple(ys)) => {
            if xs.len() != ys.len() {
                return Verdict::no(format!("tuple lengths {} and {}", xs.len(), ys.len()));
            }
            combine_all(xs.iter().zip(ys).map(|(x, y)| judge_equivalence(x, y, tol)), "tuple")
        }
        (V::SetValue(xs), V::SetValue(ys)) => compare_sets(xs, ys, tol),
        (V::Interval(x), V::Interval(y)) => compare_intervals(x, y, tol),
        (V::Tuple(t), V::Interval(iv)) | (V::Interval(iv), V::Tuple(t)) => {
            if t.len() == 2 && !iv.lo_closed && !iv.hi_closed {
                combine_all(
                    [judge_equivalence(&t[0], &iv.lo, tol), judge_equivalence(&t[1], &iv.hi, tol)],
                    "open interval as pair",
                )
            } else {
                Verdict::no("tuple vs interval")
            }
        }
        (V::Matrix(x), V::Matrix(y)) => compare_matrices(x, y, tol),
        (V::Tuple(t), V::Matrix(m)) | (V::Matrix(m), V::Tuple(t)) => {
            if m.is_vector() && m.cells().len() == t.len() {
                combine_all(
                    t.iter().zip(m.cells()).map(|(x, y)| judge_equivalence(x, y, tol)),
                    "vector",
                )
            } else {
                Verdict::no("tuple vs non-vector matrix")
            }
        }
        (V::Boolean(x), V::Boolean(y)) => {
            if x == y {
                Verdict::yes("boolean")
            } else {
                Verdict::no("boolean")
            }
        }
        (V::Text(x), V::Text(y)) => {
            if normalize_text(x) == normalize_text(y) {
                Verdict::yes("text")
            } else {
                Verdict::no("text")
            }
        }
        _ => Verdict::no(format!("{} vs {}", a.kind(), b.kind())),
    }
}

/// `NotEquivalent` dominates, then `Indeterminate`.
fn combine_all(verdicts: impl IntoIterator<Item = Verdict>, what: &str) -> Verdict {
    let mut undecided = None;
    for v in verdicts {
        match v.kind {
            VerdictKind::NotEquivalent => return Verdict::no(format!("{what}: {}", v.reason)),
            VerdictKind::Indeterminate => undecided = Some(v),
            VerdictKind::Equivalent => {}
        }
    }
    match undecided {
        Some(v) => Verdict::unknown(format!("{what}: {}", v.reason)),
        None => Verdict::yes(what.to_string()),
    }
}

fn compare_exact(a: &AnswerValue, b: &AnswerValue, tol: &Tolerance) -> Verdict {
    let (Some(x), Some(y)) = (a.exact(), b.exact()) else {
        return Verdict::no("non-numeric");
    };
    if x == y {
        return Verdict::yes("exact");
    }
    let rounded = matches!(a, AnswerValue::Decimal(_)) || matches!(b, AnswerValue::Decimal(_));
    if rounded {
        let rel = BigRational::from_f64(tol.rel).unwrap_or_default();
        let scale = if x.abs() > y.abs() { x.abs() } else { y.abs() };
        if (&x - &y).abs() <= rel * scale {
            return Verdict::yes("within relative tolerance");
        }
    }
    Verdict::no("numeric mismatch")
}

fn values_agree(x: f64, y: f64, rounded: bool, tol: &Tolerance) -> Option<bool> {
    if x.is_nan() || y.is_nan() {
        return None;
    }
    if x.is_infinite() || y.is_infinite() {
        return Some(x == y);
    }
    let diff = (x - y).abs();
    let mag = x.abs().max(y.abs());
    let mut ok = diff < tol.abs * mag.max(1.0);
    if rounded {
        ok |= diff <= tol.rel * mag;
    }
    Some(ok)
}

fn compare_symbolic(a: &AnswerValue, b: &AnswerValue, tol: &Tolerance) -> Verdict {
    let (Some(ea), Some(eb)) = (a.as_expr(), b.as_expr()) else {
        return Verdict::no("non-numeric");
    };
    let vars_a = ea.free_vars();
    let vars_b = eb.free_vars();
    if vars_a != vars_b {
        return Verdict::unknown(format!(
            "free variables differ: {{{}}} vs {{{}}}",
            join(&vars_a),
            join(&vars_b)
        ));
    }
    let rounded = ea.has_decimal() || eb.has_decimal();
    if vars_a.is_empty() {
        let empty = BTreeMap::new();
        let (x, y) = (ea.eval(&empty), eb.eval(&empty));
        return match values_agree(x, y, rounded, tol) {
            Some(true) => Verdict::yes("numeric evaluation"),
            Some(false) => Verdict::no(format!("values differ: {x} vs {y}")),
            None if x.is_nan() && y.is_nan() => Verdict::unknown("both sides undefined"),
            None => Verdict::no("one side undefined"),
        };
    }
    probe(&ea, &eb, &vars_a, rounded, tol)
}

fn probe(a: &Expr, b: &Expr, vars: &BTreeSet<String>, rounded: bool, tol: &Tolerance) -> Verdict {
    // one independent stream per variable name, so assignment never depends
    // on iteration order
    let streams: Vec<(String, CounterRng)> = vars
        .iter()
        .map(|v| (v.clone(), CounterRng::keyed(tol.probe_seed, v)))
        .collect();
    let mut valid = 0;
    let mut env = BTreeMap::new();
    for i in 0..u64::from(tol.n_probe) {
        for (name, rng) in &streams {
            env.insert(name.clone(), PROBE_LO + (PROBE_HI - PROBE_LO) * rng.uniform(i));
        }
        let (x, y) = (a.eval(&env), b.eval(&env));
        match values_agree(x, y, rounded, tol) {
            Some(true) => valid += 1,
            Some(false) => return Verdict::no(format!("probe {i} differs: {x} vs {y}")),
            None => {}
        }
    }
    if valid == 0 {
        Verdict::unknown("no probe point evaluated on both sides")
    } else {
        Verdict::yes(format!("{valid} probe points agree"))
    }
}

fn join(vars: &BTreeSet<String>) -> String {
    vars.iter().cloned().collect::<Vec<_>>().join(", ")
}

fn compare_intervals(x: &Interval, y: &Interval, tol: &Tolerance) -> Verdict {
    if x.lo_closed != y.lo_closed || x.hi_closed != y.hi_closed {
        return Verdict::no("interval closedness differs");
    }
    combine_all(
        [judge_equivalence(&x.lo, &y.lo, tol), judge_equivalence(&x.hi, &y.hi, tol)],
        "interval",
    )
}

fn compare_matrices(x: &Matrix, y: &Matrix, tol: &Tolerance) -> Verdict {
    if x.shape() != y.shape() {
        return Verdict::no(format!("matrix shapes {:?} and {:?}", x.shape(), y.shape()));
    }
    combine_all(
        x.cells().iter().zip(y.cells()).map(|(a, b)| judge_equivalence(a, b, tol)),
        "matrix",
    )
}

/// Multiset match: a perfect matching over `Equivalent` pairs means
/// `Equivalent`; one that needs `Indeterminate` pairs means `Indeterminate`.
fn compare_sets(xs: &[AnswerValue], ys: &[AnswerValue], tol: &Tolerance) -> Verdict {
    if xs.len() != ys.len() {
        return Verdict::no(format!("set sizes {} and {}", xs.len(), ys.len()));
    }
    let kinds: Vec<Vec<VerdictKind>> = xs
        .iter()
        .map(|x| ys.iter().map(|y| judge_equivalence(x, y, tol).kind).collect())
        .collect();
    if perfect_matching(&kinds, |k| k == VerdictKind::Equivalent) {
        Verdict::yes("set")
    } else if perfect_matching(&kinds, |k| k != VerdictKind::NotEquivalent) {
        Verdict::unknown("set elements only match up to indeterminate pairs")
    } else {
        Verdict::no("set elements differ")
    }
}

/// Kuhn's augmenting-path bipartite matching.
fn perfect_matching(kinds: &[Vec<VerdictKind>], edge: impl Fn(VerdictKind) -> bool + Copy) -> bool {
    let n = kinds.len();
    let mut owner: Vec<Option<usize>> = vec![None; n];
    fn augment(
        u: usize,
        kinds: &[Vec<VerdictKind>],
        edge: impl Fn(VerdictKind) -> bool + Copy,
        seen: &mut [bool],
        owner: &mut [Option<usize>],
    ) -> bool {
        for v in 0..kinds[u].len() {
            if edge(kinds[u][v]) && !seen[v] {
                seen[v] = true;
                if owner[v].is_none_or(|w| augment(w, kinds, edge, seen, owner)) {
                    owner[v] = Some(u);
                    return true;
                }
            }
        }
        false
    }
    (0..n).all(|u| {
        let mut seen = vec![false; n];
        augment(u, kinds, edge, &mut seen, &mut owner)
    })
}
