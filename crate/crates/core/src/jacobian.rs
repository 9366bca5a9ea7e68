//! Jacobians of the time-one map and what they say about it: chained
//! products along orbits, singular points on the fundamental domain, the
//! contraction test for injectivity and the boundary location of extremal
//! values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::iteration::psi_n;
use crate::system::SystemDefinition;
use crate::vecspace::{self, Vector};

/// Default central-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Bisection iterations used when refining singular points.
pub const REFINE_ITERATIONS: usize = 60;

/// Refined singular points must reach this `|det|`.
pub const ROOT_TOLERANCE: f64 = 1e-10;

/// Largest dimension [`det_scan`] will sweep exhaustively.
pub const MAX_SCAN_DIM: usize = 3;

/// Square matrix of partial derivatives, row `i` column `j` = `d f_i / d x_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl Serialize for JacobianMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(serializer)
    }
}

impl JacobianMatrix {
    pub fn from_row_major(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 || entries.len() != dim * dim {
            return Err(Error::InvalidInput(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                entries.len()
            )));
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("matrix entries must be finite".into()));
        }
        Ok(Self { dim, entries })
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1.0;
        }
        Self { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.dim).map(<[f64]>::to_vec).collect()
    }

    /// `self * rhs`.
    pub fn matmul(&self, rhs: &JacobianMatrix) -> JacobianMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        let k = self.dim;
        let mut out = vec![0.0; k * k];
        for i in 0..k {
            for l in 0..k {
                let a = self.entries[i * k + l];
                for j in 0..k {
                    out[i * k + j] += a * rhs.entries[l * k + j];
                }
            }
        }
        JacobianMatrix { dim: k, entries: out }
    }

    pub fn max_abs_diff(&self, other: &JacobianMatrix) -> f64 {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        self.entries
            .iter()
            .zip(&other.entries)
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
    }

    /// Determinant by Gaussian elimination with partial pivoting.
    pub fn determinant(&self) -> f64 {
        let k = self.dim;
        let mut a = self.entries.clone();
        let mut det = 1.0;
        for col in 0..k {
            let pivot = (col..k)
                .max_by(|&r, &s| a[r * k + col].abs().total_cmp(&a[s * k + col].abs()))
                .expect("nonempty range");
            if a[pivot * k + col] == 0.0 {
                return 0.0;
            }
            if pivot != col {
                for j in 0..k {
                    a.swap(col * k + j, pivot * k + j);
                }
                det = -det;
            }
            let p = a[col * k + col];
            det *= p;
            for r in col + 1..k {
                let factor = a[r * k + col] / p;
                if factor != 0.0 {
                    for j in col..k {
                        a[r * k + j] -= factor * a[col * k + j];
                    }
                }
            }
        }
        det
    }
}

/// Central-difference Jacobian of `map` at `eta`.
pub fn jacobian_fd<F>(map: F, eta: &Vector, h: f64) -> Result<JacobianMatrix>
where
    F: Fn(&Vector) -> Result<Vector>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidInput(format!("step must be positive, got {h}")));
    }
    let k = eta.dim();
    let mut entries = vec![0.0; k * k];
    let mut probe = eta.as_slice().to_vec();
    for j in 0..k {
        probe[j] = eta[j] + h;
        let plus = map(&Vector::new(probe.clone())?)?;
        probe[j] = eta[j] - h;
        let minus = map(&Vector::new(probe.clone())?)?;
        probe[j] = eta[j];
        plus.check_dim(k)?;
        minus.check_dim(k)?;
        for i in 0..k {
            entries[i * k + j] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    JacobianMatrix::from_row_major(k, entries).map_err(|_| Error::Evaluation {
        function: "jacobian_fd",
        point: eta.as_slice().to_vec(),
        index: None,
    })
}

/// Jacobian of `psi` at `eta`: analytic when available, else central
/// differences with step `h`.
pub fn psi_jacobian(sys: &SystemDefinition, eta: &Vector, h: f64) -> Result<JacobianMatrix> {
    match sys.analytic_jacobian(eta) {
        Some(j) => j,
        None => jacobian_fd(|x| sys.psi(x), eta, h),
    }
}

/// Jacobian of `psi_n` at `eta` as the ordered product of one-step
/// Jacobians along the orbit, latest step leftmost.
pub fn chain_jacobian(sys: &SystemDefinition, eta: &Vector, n: usize, h: f64) -> Result<JacobianMatrix> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be at least 1".into()));
    }
    eta.check_dim(sys.dim())?;
    let mut x = eta.clone();
    let mut acc = JacobianMatrix::identity(sys.dim());
    for _ in 0..n {
        acc = psi_jacobian(sys, &x, h)?.matmul(&acc);
        x = sys.psi(&x)?;
    }
    Ok(acc)
}

/// Central-difference Jacobian of the `n`-fold composition itself.
pub fn composition_jacobian_fd(sys: &SystemDefinition, eta: &Vector, n: usize, h: f64) -> Result<JacobianMatrix> {
    jacobian_fd(|x| psi_n(sys, x, n), eta, h)
}

/// Largest entrywise gap between [`chain_jacobian`] and
/// [`composition_jacobian_fd`].
pub fn chain_rule_discrepancy(sys: &SystemDefinition, eta: &Vector, n: usize, h: f64) -> Result<f64> {
    Ok(chain_jacobian(sys, eta, n, h)?.max_abs_diff(&composition_jacobian_fd(sys, eta, n, h)?))
}

fn psi_det(sys: &SystemDefinition, x: &[f64], h: f64) -> Result<f64> {
    Ok(psi_jacobian(sys, &Vector::from_slice(x)?, h)?.determinant())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagReason {
    BelowThreshold,
    SignChange,
}

#[derive(Debug, Clone, Serialize)]
pub struct SingularCandidate {
    pub cell_center: Vector,
    pub det_value: f64,
    pub reason: FlagReason,
    pub refined_root: Option<Vector>,
    pub refined_det: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SingularScanReport {
    pub grid_resolution: usize,
    pub threshold: f64,
    pub min_det: f64,
    pub min_det_at: Vector,
    pub candidates: Vec<SingularCandidate>,
    /// Distinct refined roots reduced to `[0, 1)^k`.
    pub roots: Vec<Vector>,
}

impl SingularScanReport {
    /// Refined roots and their lattice translates lying in the closed unit
    /// cube `[0, 1]^k`.
    pub fn roots_in_closed_unit_box(&self) -> Vec<Vector> {
        const EDGE: f64 = 1e-9;
        let mut out = Vec::new();
        for root in &self.roots {
            let mut partial: Vec<Vec<f64>> = vec![Vec::new()];
            for &x in root.iter() {
                let mut options = Vec::new();
                for shift in [-1.0, 0.0, 1.0] {
                    let y = x + shift;
                    if (-EDGE..=1.0 + EDGE).contains(&y) {
                        options.push(y);
                    }
                }
                partial = partial
                    .into_iter()
                    .flat_map(|p| {
                        options.iter().map(move |&y| {
                            let mut q = p.clone();
                            q.push(y);
                            q
                        })
                    })
                    .collect();
            }
            out.extend(partial.into_iter().map(|p| Vector::new(p).expect("finite")));
        }
        out.sort_by(|a, b| a.as_slice().partial_cmp(b.as_slice()).expect("finite"));
        out
    }
}

fn node_coords(mut idx: usize, k: usize, g: usize) -> Vec<usize> {
    let mut c = vec![0; k];
    for p in (0..k).rev() {
        c[p] = idx % g;
        idx /= g;
    }
    c
}

fn node_index(coords: &[usize], g: usize) -> usize {
    coords.iter().fold(0, |acc, &c| acc * g + c)
}

fn refine_root(sys: &SystemDefinition, start: &[f64], sign_axis: Option<(usize, f64)>, cell: f64, h: f64) -> Result<(Vec<f64>, f64)> {
    let det_at = |x: &[f64]| psi_det(sys, x, h);

    // bisection on det along the segment x + s e_p, s between 0 and `end`
    let bisect_line = |x: &[f64], p: usize, end: f64| -> Result<Vec<f64>> {
        let mut lo = 0.0;
        let mut hi = end;
        let mut y = x.to_vec();
        let f_lo = det_at(x)?;
        for _ in 0..REFINE_ITERATIONS {
            let mid = 0.5 * (lo + hi);
            y[p] = x[p] + mid;
            let f_mid = det_at(&y)?;
            if f_mid == 0.0 {
                return Ok(y);
            }
            if (f_mid > 0.0) == (f_lo > 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        y[p] = x[p] + 0.5 * (lo + hi);
        Ok(y)
    };

    let mut x = start.to_vec();
    if let Some((p, end)) = sign_axis {
        x = bisect_line(&x, p, end)?;
        let d = det_at(&x)?;
        return Ok((x, d));
    }

    // no sign change seen: det touches zero at a local extremum, so walk
    // each grid line to the extremum (bisection on the line derivative),
    // switching to root bisection if the line crosses zero
    let orient = if det_at(&x)? < 0.0 { -1.0 } else { 1.0 };
    let dh = 1e-6 * cell.max(1e-3);
    for _sweep in 0..4 {
        for p in 0..x.len() {
            let f = |s: f64, x: &[f64]| -> Result<f64> {
                let mut y = x.to_vec();
                y[p] += s;
                Ok(orient * det_at(&y)?)
            };
            let here = f(0.0, &x)?;
            if here.abs() <= f64::EPSILON {
                return Ok((x, orient * here));
            }
            if let Some(end) = [-cell, cell].into_iter().find(|&e| f(e, &x).is_ok_and(|v| v < 0.0)) {
                x = bisect_line(&x, p, end)?;
                let d = det_at(&x)?;
                return Ok((x, d));
            }
            let slope = |s: f64, x: &[f64]| -> Result<f64> { Ok(f(s + dh, x)? - f(s - dh, x)?) };
            let s_best = if slope(-cell, &x)? >= 0.0 {
                -cell
            } else if slope(cell, &x)? <= 0.0 {
                cell
            } else {
                let (mut lo, mut hi) = (-cell, cell);
                for _ in 0..REFINE_ITERATIONS {
                    let mid = 0.5 * (lo + hi);
                    if slope(mid, &x)? < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            };
            if f(s_best, &x)? < here {
                x[p] += s_best;
            }
        }
    }
    let d = det_at(&x)?;
    Ok((x, d))
}

fn wrap_unit(x: &[f64]) -> Vector {
    Vector::new(
        x.iter()
            .map(|&v| {
                let f = v - v.floor();
                if 1.0 - f < 1e-9 {
                    f - 1.0
                } else {
                    f
                }
            })
            .collect(),
    )
    .expect("finite")
}

/// Scan `det J(psi)` over the lattice `{i / n}^k` of the fundamental
/// domain and refine every flagged node.
///
/// A node is flagged when `|det| <= threshold` or when det changes sign
/// towards its successor along some axis (wrapping periodically). Sign
/// changes are refined by bisection along that grid line; other flags by
/// walking the grid lines to the local extremum of det. Only refinements
/// reaching `|det| <= 1e-10` produce a root.
pub fn det_scan(sys: &SystemDefinition, grid_per_axis: usize, threshold: f64) -> Result<SingularScanReport> {
    let k = sys.dim();
    let g = grid_per_axis;
    if g < 8 {
        return Err(Error::InvalidInput(format!("det scan needs at least 8 nodes per axis, got {g}")));
    }
    if k > MAX_SCAN_DIM {
        return Err(Error::InvalidInput(format!(
            "exhaustive det scan supports k <= {MAX_SCAN_DIM}, got k = {k}"
        )));
    }
    if !(threshold >= 0.0 && threshold.is_finite()) {
        return Err(Error::InvalidInput(format!("threshold must be nonnegative, got {threshold}")));
    }
    let h = DEFAULT_FD_STEP;
    let cell = 1.0 / g as f64;
    let total = g.pow(k as u32);
    let coords_of = |idx: usize| -> Vec<f64> {
        node_coords(idx, k, g).into_iter().map(|c| c as f64 * cell).collect()
    };
    let dets: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|idx| psi_det(sys, &coords_of(idx), h))
        .collect::<Result<_>>()?;

    let (min_idx, min_det) = dets
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("grid is nonempty");

    let flagged: Vec<(usize, FlagReason, Option<(usize, f64)>)> = (0..total)
        .filter_map(|idx| {
            let d = dets[idx];
            let c = node_coords(idx, k, g);
            let sign_axis = (0..k).find_map(|p| {
                let mut nb = c.clone();
                nb[p] = (nb[p] + 1) % g;
                let dn = dets[node_index(&nb, g)];
                (d * dn < 0.0).then_some((p, cell))
            });
            if d.abs() <= threshold {
                Some((idx, FlagReason::BelowThreshold, sign_axis))
            } else {
                sign_axis.map(|s| (idx, FlagReason::SignChange, Some(s)))
            }
        })
        .collect();

    let candidates: Vec<SingularCandidate> = flagged
        .par_iter()
        .map(|&(idx, reason, sign_axis)| {
            let start = coords_of(idx);
            let (x, d) = refine_root(sys, &start, sign_axis, cell, h)?;
            let ok = d.abs() <= ROOT_TOLERANCE;
            Ok(SingularCandidate {
                cell_center: Vector::new(start)?,
                det_value: dets[idx],
                reason,
                refined_root: ok.then(|| Vector::new(x)).transpose()?,
                refined_det: ok.then_some(d),
            })
        })
        .collect::<Result<_>>()?;

    let mut roots: Vec<(Vector, f64)> = Vec::new();
    for c in &candidates {
        if let (Some(r), Some(d)) = (&c.refined_root, c.refined_det) {
            let w = wrap_unit(r.as_slice());
            match roots.iter_mut().find(|(e, _)| e.dist_inf(&w) <= 1e-6) {
                Some(existing) => {
                    if d.abs() < existing.1.abs() {
                        *existing = (w, d);
                    }
                }
                None => roots.push((w, d)),
            }
        }
    }
    let mut roots: Vec<Vector> = roots.into_iter().map(|(r, _)| r).collect();
    roots.sort_by(|a, b| a.as_slice().partial_cmp(b.as_slice()).expect("finite"));

    Ok(SingularScanReport {
        grid_resolution: g,
        threshold,
        min_det,
        min_det_at: Vector::new(coords_of(min_idx))?,
        candidates,
        roots,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct InjectivityReport {
    pub pairs: usize,
    pub box_size: f64,
    /// Largest `|a(x) - a(p)| / |x - p|` over the sampled pairs.
    pub max_ratio: f64,
    pub worst_pair: (Vector, Vector),
    pub pairs_above_one: usize,
    /// Sampled pairs with `psi(x) == psi(p)`.
    pub collisions: usize,
    /// Every sampled ratio was below one.
    pub criterion_satisfied: bool,
}

/// Sample the contraction condition `|a(x) - a(p)| < |x - p|` on random
/// pairs from `[0, box_size)^k`.
///
/// Failing the sampled criterion says nothing about whether `psi` is
/// injective; passing it with no collisions is evidence that it is.
pub fn contraction_injectivity_check(
    sys: &SystemDefinition,
    n_pairs: usize,
    box_size: f64,
    seed: u64,
) -> Result<InjectivityReport> {
    if n_pairs == 0 {
        return Err(Error::InvalidInput("n_pairs must be at least 1".into()));
    }
    if !(box_size > 0.0 && box_size.is_finite()) {
        return Err(Error::InvalidInput(format!("box size must be positive, got {box_size}")));
    }
    let k = sys.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| {
        Vector::new((0..k).map(|_| rng.gen_range(0.0..box_size)).collect()).expect("finite")
    };
    let mut max_ratio = f64::NEG_INFINITY;
    let mut worst_pair = None;
    let mut above = 0;
    let mut collisions = 0;
    let mut done = 0;
    while done < n_pairs {
        let x = draw(&mut rng);
        let p = draw(&mut rng);
        let gap = x.dist_inf(&p);
        if gap == 0.0 {
            continue;
        }
        let ax = sys.displacement(&x)?;
        let ap = sys.displacement(&p)?;
        let ratio = ax.dist_inf(&ap) / gap;
        if ratio > 1.0 {
            above += 1;
        }
        if sys.psi(&x)? == sys.psi(&p)? {
            collisions += 1;
        }
        if ratio > max_ratio {
            max_ratio = ratio;
            worst_pair = Some((x, p));
        }
        done += 1;
    }
    Ok(InjectivityReport {
        pairs: n_pairs,
        box_size,
        max_ratio,
        worst_pair: worst_pair.expect("at least one pair"),
        pairs_above_one: above,
        collisions,
        criterion_satisfied: max_ratio < 1.0,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundaryExtremalReport {
    pub applicable: bool,
    /// Why the check was skipped.
    pub reason: Option<String>,
    pub grid_per_axis: usize,
    pub maximal_count: usize,
    pub minimal_count: usize,
    pub maximal_on_boundary: usize,
    pub minimal_on_boundary: usize,
    /// Share of extremal images whose preimage is a boundary node.
    pub boundary_fraction: f64,
    /// Extremal bounds of the image set, when applicable.
    pub upper_bound: Option<Vector>,
    pub lower_bound: Option<Vector>,
}

/// Locate the preimages of the maximal and minimal images of `psi` over
/// a closed box sampled with `grid_per_axis` nodes per axis.
///
/// Nodes within one cell of a face count as boundary. If det vanishes
/// (below `det_threshold`) or changes sign on the box grid the report is
/// marked inapplicable.
pub fn boundary_extremal_check(
    sys: &SystemDefinition,
    lower: &Vector,
    upper: &Vector,
    grid_per_axis: usize,
    det_threshold: f64,
) -> Result<BoundaryExtremalReport> {
    let k = sys.dim();
    lower.check_dim(k)?;
    upper.check_dim(k)?;
    let g = grid_per_axis;
    if g < 3 {
        return Err(Error::InvalidInput(format!("box grid needs at least 3 nodes per axis, got {g}")));
    }
    if lower.iter().zip(upper.iter()).any(|(a, b)| !(a < b)) {
        return Err(Error::InvalidInput("box lower corner must be below upper corner".into()));
    }
    let total = g
        .checked_pow(k as u32)
        .filter(|&t| t <= 50_000_000)
        .ok_or_else(|| Error::InvalidInput("box grid too large".into()))?;
    let node = |idx: usize| -> Vec<f64> {
        node_coords(idx, k, g)
            .into_iter()
            .enumerate()
            .map(|(p, c)| lower[p] + (upper[p] - lower[p]) * c as f64 / (g - 1) as f64)
            .collect()
    };
    let h = DEFAULT_FD_STEP;
    let dets: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|idx| psi_det(sys, &node(idx), h))
        .collect::<Result<_>>()?;

    let singular = (0..total).find(|&idx| {
        if dets[idx].abs() <= det_threshold {
            return true;
        }
        let c = node_coords(idx, k, g);
        (0..k).any(|p| {
            c[p] + 1 < g && {
                let mut nb = c.clone();
                nb[p] += 1;
                dets[idx] * dets[node_index(&nb, g)] < 0.0
            }
        })
    });
    if let Some(idx) = singular {
        return Ok(BoundaryExtremalReport {
            applicable: false,
            reason: Some(format!(
                "det J vanishes near {:?} (det = {:e})",
                node(idx),
                dets[idx]
            )),
            grid_per_axis: g,
            maximal_count: 0,
            minimal_count: 0,
            maximal_on_boundary: 0,
            minimal_on_boundary: 0,
            boundary_fraction: 0.0,
            upper_bound: None,
            lower_bound: None,
        });
    }

    let images: Vec<Vector> = (0..total)
        .into_par_iter()
        .map(|idx| sys.psi(&Vector::new(node(idx))?))
        .collect::<Result<_>>()?;
    let on_boundary = |idx: usize| node_coords(idx, k, g).iter().any(|&c| c <= 1 || c + 2 >= g);
    let maxima = vecspace::maximal_indices(&images)?;
    let minima = vecspace::minimal_indices(&images)?;
    let max_b = maxima.iter().filter(|&&i| on_boundary(i)).count();
    let min_b = minima.iter().filter(|&&i| on_boundary(i)).count();
    let (ub, lb) = vecspace::extremal_bounds(&images)?;
    Ok(BoundaryExtremalReport {
        applicable: true,
        reason: None,
        grid_per_axis: g,
        maximal_count: maxima.len(),
        minimal_count: minima.len(),
        maximal_on_boundary: max_b,
        minimal_on_boundary: min_b,
        boundary_fraction: (max_b + min_b) as f64 / (maxima.len() + minima.len()) as f64,
        upper_bound: Some(ub),
        lower_bound: Some(lb),
    })
}
