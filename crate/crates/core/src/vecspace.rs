//! The semi-ordered normed space `E_k`.
//!
//! Vectors carry the max-norm and the componentwise order in which `X > Y`
//! means every component of `X - Y` is nonnegative and at least one is
//! positive. All comparisons are exact; callers that need a tolerance
//! should round their inputs first.

use std::fmt;
use std::ops::{Add, Index, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of `E_k` with finite entries and `k >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Vector {
    entries: Vec<f64>,
}

impl Vector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidInput("vector must have at least one entry".into()));
        }
        if let Some(p) = entries.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "vector entry {p} is not finite ({})",
                entries[p]
            )));
        }
        Ok(Self { entries })
    }

    pub fn from_slice(entries: &[f64]) -> Result<Self> {
        Self::new(entries.to_vec())
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        Self {
            entries: vec![0.0; dim],
        }
    }

    /// Vector with every entry equal to `value`.
    pub fn splat(dim: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; dim])
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.entries
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.entries.iter()
    }

    /// `max_p |x_p|`.
    pub fn norm_inf(&self) -> f64 {
        self.entries.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn scale(&self, c: f64) -> Vector {
        Vector {
            entries: self.entries.iter().map(|x| c * x).collect(),
        }
    }

    pub fn add_integer(&self, q: &IntegerVector) -> Vector {
        assert_eq!(self.dim(), q.dim(), "dimension mismatch");
        Vector {
            entries: self
                .entries
                .iter()
                .zip(q.iter())
                .map(|(x, &n)| x + n as f64)
                .collect(),
        }
    }

    /// Max-norm distance to `other`.
    pub fn dist_inf(&self, other: &Vector) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        self.entries
            .iter()
            .zip(&other.entries)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() == expected {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected,
                found: self.dim(),
            })
        }
    }

    /// Componentwise mean of a nonempty set of same-dimension vectors.
    pub fn mean<'a>(items: impl IntoIterator<Item = &'a Vector>) -> Option<Vector> {
        let mut iter = items.into_iter();
        let first = iter.next()?;
        let mut sum = first.entries.clone();
        let mut count = 1usize;
        for v in iter {
            for (s, x) in sum.iter_mut().zip(&v.entries) {
                *s += x;
            }
            count += 1;
        }
        let n = count as f64;
        Some(Vector {
            entries: sum.into_iter().map(|s| s / n).collect(),
        })
    }
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = Error;

    fn try_from(entries: Vec<f64>) -> Result<Self> {
        Vector::new(entries)
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Self {
        v.entries
    }
}

impl Index<usize> for Vector {
    type Output = f64;

    fn index(&self, p: usize) -> &f64 {
        &self.entries[p]
    }
}

impl fmt::Display for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, x) in self.entries.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, "]")
    }
}

impl Add<&Vector> for &Vector {
    type Output = Vector;

    fn add(self, rhs: &Vector) -> Vector {
        assert_eq!(self.dim(), rhs.dim(), "dimension mismatch");
        Vector {
            entries: self
                .entries
                .iter()
                .zip(&rhs.entries)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub<&Vector> for &Vector {
    type Output = Vector;

    fn sub(self, rhs: &Vector) -> Vector {
        assert_eq!(self.dim(), rhs.dim(), "dimension mismatch");
        Vector {
            entries: self
                .entries
                .iter()
                .zip(&rhs.entries)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl Neg for &Vector {
    type Output = Vector;

    fn neg(self) -> Vector {
        self.scale(-1.0)
    }
}

/// A point of the integer lattice `Z^k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IntegerVector(pub Vec<i64>);

impl IntegerVector {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, i64> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[i64] {
        &self.0
    }

    /// Componentwise nearest integer (halves round away from zero).
    pub fn round_from(x: &Vector) -> Self {
        Self(x.iter().map(|v| v.round() as i64).collect())
    }

    pub fn to_vector(&self) -> Vector {
        Vector {
            entries: self.0.iter().map(|&n| n as f64).collect(),
        }
    }

    pub fn scale(&self, c: i64) -> Self {
        Self(self.0.iter().map(|n| n * c).collect())
    }
}

impl From<Vec<i64>> for IntegerVector {
    fn from(v: Vec<i64>) -> Self {
        Self(v)
    }
}

/// Outcome of comparing two vectors in the componentwise semi-order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OrderRelation {
    Greater,
    Less,
    Equal,
    Incomparable,
}

impl OrderRelation {
    pub fn reverse(self) -> Self {
        match self {
            OrderRelation::Greater => OrderRelation::Less,
            OrderRelation::Less => OrderRelation::Greater,
            other => other,
        }
    }
}

/// Max-norm of `x`.
pub fn norm_inf(x: &Vector) -> f64 {
    x.norm_inf()
}

/// Compare `x` and `y` in the semi-order.
pub fn compare(x: &Vector, y: &Vector) -> Result<OrderRelation> {
    y.check_dim(x.dim())?;
    Ok(compare_slices(x.as_slice(), y.as_slice()))
}

pub(crate) fn compare_slices(x: &[f64], y: &[f64]) -> OrderRelation {
    let mut any_pos = false;
    let mut any_neg = false;
    for (a, b) in x.iter().zip(y) {
        if a > b {
            any_pos = true;
        } else if a < b {
            any_neg = true;
        }
        if any_pos && any_neg {
            return OrderRelation::Incomparable;
        }
    }
    match (any_pos, any_neg) {
        (true, false) => OrderRelation::Greater,
        (false, true) => OrderRelation::Less,
        (false, false) => OrderRelation::Equal,
        (true, true) => OrderRelation::Incomparable,
    }
}

/// Split `x` into `floor(x)` and a remainder with every entry in `[0, 1)`.
pub fn split_integer_fractional(x: &Vector) -> (IntegerVector, Vector) {
    let mut ints = Vec::with_capacity(x.dim());
    let mut fracs = Vec::with_capacity(x.dim());
    for &v in x.iter() {
        let mut u = v.floor();
        let mut f = v - u;
        // tiny negatives give f == 1.0 after rounding
        if f >= 1.0 {
            u += 1.0;
            f = 0.0;
        }
        ints.push(u as i64);
        fracs.push(f);
    }
    (IntegerVector(ints), Vector { entries: fracs })
}

fn check_set(set: &[Vector]) -> Result<usize> {
    let first = set.first().ok_or(Error::Empty("vector set"))?;
    let k = first.dim();
    for v in set {
        v.check_dim(k)?;
    }
    Ok(k)
}

fn undominated_indices(set: &[Vector], dominating: OrderRelation) -> Result<Vec<usize>> {
    check_set(set)?;
    let mut keep = Vec::new();
    'outer: for (i, x) in set.iter().enumerate() {
        if set[..i].iter().any(|y| y == x) {
            continue;
        }
        for y in set {
            if compare_slices(y.as_slice(), x.as_slice()) == dominating {
                continue 'outer;
            }
        }
        keep.push(i);
    }
    Ok(keep)
}

/// Indices of the maximal elements of `set`; exact duplicates keep only
/// their first occurrence.
pub fn maximal_indices(set: &[Vector]) -> Result<Vec<usize>> {
    undominated_indices(set, OrderRelation::Greater)
}

/// Indices of the minimal elements of `set`; exact duplicates keep only
/// their first occurrence.
pub fn minimal_indices(set: &[Vector]) -> Result<Vec<usize>> {
    undominated_indices(set, OrderRelation::Less)
}

/// Elements of `set` not dominated by any other element.
pub fn maximal_elements(set: &[Vector]) -> Result<Vec<Vector>> {
    Ok(maximal_indices(set)?
        .into_iter()
        .map(|i| set[i].clone())
        .collect())
}

/// Elements of `set` that dominate no other element.
pub fn minimal_elements(set: &[Vector]) -> Result<Vec<Vector>> {
    Ok(minimal_indices(set)?
        .into_iter()
        .map(|i| set[i].clone())
        .collect())
}

/// Smallest upper bound and greatest lower bound assembled from the
/// maximal and minimal elements of `set`.
///
/// The upper bound takes, per component, the supremum over the maximal
/// elements; the lower bound the infimum over the minimal elements.
pub fn extremal_bounds(set: &[Vector]) -> Result<(Vector, Vector)> {
    let k = check_set(set)?;
    let mut upper = vec![f64::NEG_INFINITY; k];
    for i in maximal_indices(set)? {
        for (u, x) in upper.iter_mut().zip(set[i].iter()) {
            *u = u.max(*x);
        }
    }
    let mut lower = vec![f64::INFINITY; k];
    for i in minimal_indices(set)? {
        for (l, x) in lower.iter_mut().zip(set[i].iter()) {
            *l = l.min(*x);
        }
    }
    Ok((Vector { entries: upper }, Vector { entries: lower }))
}
