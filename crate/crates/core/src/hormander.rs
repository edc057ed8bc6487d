//! Lie brackets, bracket bases and the numerical rank test for the
//! Hörmander condition.

use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{DiffusionSpec, VectorField};

pub const DEFAULT_TOL: f64 = 1e-9;

/// Total expression size a basis may reach before generation gives up.
/// Brackets of cutoff-weighted fields grow by roughly 20x per level.
pub const MAX_BASIS_NODES: usize = 4_000_000;

pub fn default_depth(n: usize) -> usize {
    n + 2
}

/// `[V, W]_i = Σ_j (v_j ∂_j w_i − w_j ∂_j v_i)`.
pub fn lie_bracket(v: &VectorField, w: &VectorField) -> Result<VectorField> {
    let n = v.dim();
    if w.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: w.dim(),
        });
    }
    let coeffs = (0..n)
        .map(|i| v.apply(&w.coeffs[i]).sub(w.apply(&v.coeffs[i])))
        .collect();
    Ok(VectorField::new(coeffs))
}

/// How a basis element was obtained.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Word {
    /// `U_q`, `q ≥ 1`.
    Noise(usize),
    /// `[U_q, U_0]`.
    DriftBracket(usize),
    Bracket(Box<Word>, Box<Word>),
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Word::Noise(q) => write!(f, "U{q}"),
            Word::DriftBracket(q) => write!(f, "[U{q},U0]"),
            Word::Bracket(a, b) => write!(f, "[{a},{b}]"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BasisElement {
    pub field: VectorField,
    pub word: Word,
    pub depth: usize,
}

#[derive(Clone, Debug)]
pub struct BracketBasis {
    pub depth: usize,
    pub elements: Vec<BasisElement>,
    seeds: Vec<VectorField>,
}

impl BracketBasis {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Recompute an element from its word.
    pub fn rederive(&self, word: &Word) -> Result<VectorField> {
        match word {
            Word::Noise(q) => Ok(self.seeds[2 * (q - 1)].clone()),
            Word::DriftBracket(q) => Ok(self.seeds[2 * (q - 1) + 1].clone()),
            Word::Bracket(a, b) => lie_bracket(&self.rederive(a)?, &self.rederive(b)?),
        }
    }
}

/// Seeds `{U_q} ∪ {[U_q, U_0]}` at depth 0, then at each further depth the
/// brackets of every seed with every element added at the previous depth.
/// Left-normed brackets of generators span the generated Lie algebra, so
/// this reaches the same span as bracketing all pairs while growing far
/// more slowly. Zero fields and structural duplicates (up to sign) are
/// dropped.
pub fn generate_basis(spec: &DiffusionSpec, depth: usize) -> Result<BracketBasis> {
    let u0 = spec.make_u(0)?;
    let mut seeds = Vec::new();
    let mut seed_words = Vec::new();
    for q in 1..=spec.d {
        let uq = spec.make_u(q)?;
        let br = lie_bracket(&uq, &u0)?;
        seeds.push(uq);
        seeds.push(br);
        seed_words.push(Word::Noise(q));
        seed_words.push(Word::DriftBracket(q));
    }
    let mut elements: Vec<BasisElement> = Vec::new();
    let mut frontier = Vec::new();
    for (field, word) in seeds.iter().zip(&seed_words) {
        if push_unique(&mut elements, field.clone(), word.clone(), 0) {
            frontier.push(elements.len() - 1);
        }
    }
    let mut nodes: usize = elements.iter().map(|e| e.field.size()).sum();
    for k in 1..=depth {
        let mut next = Vec::new();
        for (seed, seed_word) in seeds.iter().zip(&seed_words) {
            if seed.is_zero() {
                continue;
            }
            for &idx in &frontier {
                let other = &elements[idx];
                if other.field == *seed {
                    continue;
                }
                let field = lie_bracket(seed, &other.field)?;
                nodes += field.size();
                if nodes > MAX_BASIS_NODES {
                    return Err(Error::BasisTooLarge { depth: k, nodes });
                }
                let word = Word::Bracket(Box::new(seed_word.clone()), Box::new(other.word.clone()));
                if push_unique(&mut elements, field, word, k) {
                    next.push(elements.len() - 1);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    Ok(BracketBasis {
        depth,
        elements,
        seeds,
    })
}

fn push_unique(
    elements: &mut Vec<BasisElement>,
    field: VectorField,
    word: Word,
    depth: usize,
) -> bool {
    if field.is_zero() {
        return false;
    }
    let negated = field.neg();
    if elements
        .iter()
        .any(|e| e.field == field || e.field == negated)
    {
        return false;
    }
    elements.push(BasisElement { field, word, depth });
    true
}

#[derive(Clone, Debug, Serialize)]
pub struct RankReport {
    pub point: Vec<f64>,
    pub depth: usize,
    pub singular_values: Vec<f64>,
    pub rank: usize,
    pub satisfied: bool,
}

/// Stack the basis fields evaluated at `x`, scale each row to unit length
/// and count singular values above `tol · σ_max`. Deep brackets near a
/// singularity can be many orders of magnitude larger than the seeds; the
/// scaling keeps them from hiding the small directions.
pub fn rank_at(basis: &BracketBasis, x: &[f64], tol: f64) -> Result<RankReport> {
    let n = x.len();
    let mut rows: Vec<Vec<f64>> = basis
        .elements
        .iter()
        .map(|e| e.field.eval(x))
        .collect::<Result<_>>()?;
    for r in rows.iter_mut() {
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            r.iter_mut().for_each(|v| *v /= norm);
        }
    }
    for r in &rows {
        if r.len() != n {
            return Err(Error::DimensionMismatch {
                expected: r.len(),
                got: n,
            });
        }
    }
    let singular_values = if rows.is_empty() {
        Vec::new()
    } else {
        let m = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
        let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        sv
    };
    let top = singular_values.first().copied().unwrap_or(0.0);
    let rank = if top > 0.0 {
        singular_values.iter().filter(|&&s| s > tol * top).count()
    } else {
        0
    };
    Ok(RankReport {
        point: x.to_vec(),
        depth: basis.depth,
        singular_values,
        rank,
        satisfied: rank == n,
    })
}

/// `rank_at` over many points in parallel, in input order.
pub fn rank_at_points(
    basis: &BracketBasis,
    points: &[Vec<f64>],
    tol: f64,
) -> Result<Vec<RankReport>> {
    points.par_iter().map(|x| rank_at(basis, x, tol)).collect()
}

/// Report the rank at each point, raising the depth one level at a time up
/// to `depth` and stopping early once every point has full rank.
pub fn check(
    spec: &DiffusionSpec,
    points: &[Vec<f64>],
    depth: usize,
    tol: f64,
) -> Result<Vec<RankReport>> {
    let mut k = 0;
    loop {
        let basis = generate_basis(spec, k)?;
        let reports = rank_at_points(&basis, points, tol)?;
        if k >= depth || reports.iter().all(|r| r.satisfied) {
            return Ok(reports);
        }
        k += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, Expr};

    fn field(src: &[&str]) -> VectorField {
        VectorField::new(src.iter().map(|s| parse(s, src.len()).unwrap()).collect())
    }

    #[test]
    fn langevin_bracket() {
        let b = lie_bracket(&field(&["0", "1"]), &field(&["x2", "0"])).unwrap();
        assert_eq!(b.coeffs, vec![Expr::one(), Expr::zero()]);
    }

    #[test]
    fn self_bracket_vanishes() {
        let v = field(&["sin(x2)", "x1*x2"]);
        assert!(lie_bracket(&v, &v).unwrap().is_zero());
    }

    #[test]
    fn sle_two_point_bracket() {
        let k = 2.0f64;
        let u1 = VectorField::new(vec![Expr::constant(k.sqrt()), Expr::zero()]);
        let u0 = field(&["0", "2/(x2-x1)"]);
        let b = lie_bracket(&u1, &u0).unwrap();
        let x = [0.3f64, 1.1];
        let want = k.sqrt() * 2.0 / (x[1] - x[0]).powi(2);
        let got = b.eval(&x).unwrap();
        assert_eq!(got[0], 0.0);
        assert!((got[1] - want).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(lie_bracket(&field(&["1"]), &field(&["1", "0"])).is_err());
    }

    #[test]
    fn embedded_bm_never_spans() {
        let s = DiffusionSpec::parse(&[vec!["1"], vec!["0"]], &["0", "0"], "true").unwrap();
        for depth in 0..4 {
            let basis = generate_basis(&s, depth).unwrap();
            assert_eq!(basis.len(), 1);
            let r = rank_at(&basis, &[0.2, -3.0], DEFAULT_TOL).unwrap();
            assert_eq!(r.rank, 1);
            assert!(!r.satisfied);
        }
    }

    #[test]
    fn langevin_spans_at_depth_zero() {
        let s = DiffusionSpec::parse(&[vec!["0"], vec!["1"]], &["x2", "0"], "true").unwrap();
        let basis = generate_basis(&s, 0).unwrap();
        assert_eq!(basis.len(), 2);
        let r = rank_at(&basis, &[1.0, 2.0], DEFAULT_TOL).unwrap();
        assert_eq!(r.rank, 2);
        assert!(r.satisfied);
    }

    #[test]
    fn words_rederive_their_fields() {
        let s = DiffusionSpec::parse(
            &[vec!["1", "0"], vec!["0", "x1"], vec!["0", "0"]],
            &["0", "0", "x1*x2"],
            "true",
        )
        .unwrap();
        let basis = generate_basis(&s, 3).unwrap();
        for e in &basis.elements {
            assert_eq!(basis.rederive(&e.word).unwrap(), e.field, "{}", e.word);
        }
    }
}
