//! Orbits of the time-one map, rotation-vector sequences and their limit
//! sets, and periodic points with rational rotation vectors.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::system::SystemDefinition;
use crate::vecspace::{split_integer_fractional, IntegerVector, Vector};

/// Fewest tail elements [`limit_set_estimate`] will cluster.
pub const MIN_TAIL: usize = 10;

pub const DEFAULT_TAIL_FRACTION: f64 = 0.5;

/// Coordinates at or beyond `2^52` have no fractional bits left.
pub const LIFT_LIMIT: f64 = 4_503_599_627_370_496.0;

/// Default clustering radius `10 / N` for an orbit of length `N`.
pub fn default_epsilon(n: usize) -> f64 {
    10.0 / n.max(1) as f64
}

/// A forward orbit `psi_0(x) = x, psi_1(x), ..., psi_N(x)`.
///
/// `displacements[n]` holds `a_n(x) = sum_{j < n} a(psi_j(x))`, so
/// `displacements[0]` is zero and both vectors have `N + 1` entries.
#[derive(Debug, Clone, Serialize)]
pub struct Orbit {
    pub eta0: Vector,
    pub points: Vec<Vector>,
    pub displacements: Vec<Vector>,
}

impl Orbit {
    /// Number of map applications `N`.
    pub fn len(&self) -> usize {
        self.points.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `psi_n(x)`.
    pub fn point(&self, n: usize) -> &Vector {
        &self.points[n]
    }

    /// `a_n(x)`.
    pub fn displacement(&self, n: usize) -> &Vector {
        &self.displacements[n]
    }
}

/// A point of the lift held as `floor(x)` plus a remainder in `[0, 1)^k`.
///
/// `psi` is only ever evaluated on the remainder, so the computed orbits
/// of `x` and `x + q` agree exactly whenever `x + q` is representable.
struct LiftedPoint {
    whole: IntegerVector,
    frac: Vector,
}

impl LiftedPoint {
    fn new(x: &Vector) -> Result<Self> {
        if x.norm_inf() >= LIFT_LIMIT {
            return Err(Error::InvalidInput(format!(
                "coordinates must stay below 2^52 in magnitude, got {x}"
            )));
        }
        let (whole, frac) = split_integer_fractional(x);
        Ok(Self { whole, frac })
    }

    /// Advance by one application of `psi`, returning the displacement.
    fn step(&mut self, sys: &SystemDefinition) -> Result<Vector> {
        let image = sys.psi(&self.frac)?;
        let overflow = || Error::Evaluation {
            function: "psi",
            point: self.frac.as_slice().to_vec(),
            index: None,
        };
        if image.norm_inf() >= LIFT_LIMIT {
            return Err(overflow());
        }
        let a = &image - &self.frac;
        let (carry, frac) = split_integer_fractional(&image);
        let mut whole = self.whole.clone();
        for (w, c) in whole.0.iter_mut().zip(carry.iter()) {
            *w = w.checked_add(*c).ok_or_else(overflow)?;
        }
        self.whole = whole;
        self.frac = frac;
        Ok(a)
    }

    fn value(&self) -> Vector {
        self.frac.add_integer(&self.whole)
    }
}

/// Apply `psi` `n_steps` times starting from `eta`, tracking the running
/// displacement sum alongside the composed points.
pub fn iterate_orbit(sys: &SystemDefinition, eta: &Vector, n_steps: usize) -> Result<Orbit> {
    eta.check_dim(sys.dim())?;
    if n_steps == 0 {
        return Err(Error::InvalidInput("orbit length must be at least 1".into()));
    }
    let mut points = Vec::with_capacity(n_steps + 1);
    let mut displacements = Vec::with_capacity(n_steps + 1);
    points.push(eta.clone());
    displacements.push(Vector::zeros(eta.dim()));
    let mut x = LiftedPoint::new(eta)?;
    for n in 1..=n_steps {
        let a = x.step(sys).map_err(|e| e.at_step(n))?;
        let sum = &displacements[n - 1] + &a;
        points.push(x.value());
        displacements.push(sum);
    }
    Ok(Orbit {
        eta0: eta.clone(),
        points,
        displacements,
    })
}

/// `psi_n(eta)` without keeping the orbit.
pub fn psi_n(sys: &SystemDefinition, eta: &Vector, n: usize) -> Result<Vector> {
    eta.check_dim(sys.dim())?;
    if n == 0 {
        return Ok(eta.clone());
    }
    let mut x = LiftedPoint::new(eta)?;
    for step in 1..=n {
        x.step(sys).map_err(|e| e.at_step(step))?;
    }
    Ok(x.value())
}

/// The two rotation-vector sequences of an orbit.
#[derive(Debug, Clone, Serialize)]
pub struct RotationSequence {
    /// `psi_n(x) / n` for `n = 1..=N`.
    pub from_points: Vec<Vector>,
    /// `a_n(x) / n` for `n = 1..=N`.
    pub from_displacements: Vec<Vector>,
    /// `|psi_n(x)/n - a_n(x)/n|`, which should equal `|x| / n`.
    pub gaps: Vec<f64>,
    /// Largest deviation of `gaps[n-1]` from `|x| / n`.
    pub max_gap_error: f64,
}

pub fn rotation_sequence(orbit: &Orbit) -> RotationSequence {
    let eta_norm = orbit.eta0.norm_inf();
    let mut from_points = Vec::with_capacity(orbit.len());
    let mut from_displacements = Vec::with_capacity(orbit.len());
    let mut gaps = Vec::with_capacity(orbit.len());
    let mut max_gap_error = 0.0_f64;
    for n in 1..=orbit.len() {
        let inv = 1.0 / n as f64;
        let p = orbit.points[n].scale(inv);
        let d = orbit.displacements[n].scale(inv);
        let gap = p.dist_inf(&d);
        max_gap_error = max_gap_error.max((gap - eta_norm * inv).abs());
        from_points.push(p);
        from_displacements.push(d);
        gaps.push(gap);
    }
    RotationSequence {
        from_points,
        from_displacements,
        gaps,
        max_gap_error,
    }
}

/// Which rotation sequence to cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RotationSource {
    Points,
    Displacements,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cluster {
    pub center: Vector,
    pub count: usize,
    /// Largest distance from the center to a member.
    pub radius: f64,
}

/// Clusters of the tail of a rotation sequence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RotationSetEstimate {
    /// Sorted by descending count; ties keep discovery order.
    pub clusters: Vec<Cluster>,
    /// Index into the input sequence of the first tail element.
    pub tail_start: usize,
    pub tail_len: usize,
    pub epsilon: f64,
}

impl RotationSetEstimate {
    pub fn centers(&self) -> Vec<Vector> {
        self.clusters.iter().map(|c| c.center.clone()).collect()
    }

    /// True when every element of `points` lies within `epsilon` of a center.
    pub fn covers(&self, points: &[Vector]) -> bool {
        points.iter().all(|p| {
            self.clusters
                .iter()
                .any(|c| c.center.dist_inf(p) <= self.epsilon)
        })
    }
}

/// Greedy epsilon-ball clustering of the last `ceil(tail_fraction * N)`
/// elements of `seq`.
///
/// The earliest unassigned element seeds a ball that absorbs every
/// unassigned element within `epsilon` of it. The center moves to the
/// members' mean unless that would leave a member farther than `epsilon`
/// away, in which case it stays at the seed.
pub fn limit_set_estimate(seq: &[Vector], tail_fraction: f64, epsilon: f64) -> Result<RotationSetEstimate> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "tail fraction must lie in (0, 1], got {tail_fraction}"
        )));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
    }
    let n = seq.len();
    let tail_len = ((tail_fraction * n as f64).ceil() as usize).min(n);
    if tail_len < MIN_TAIL {
        return Err(Error::TailTooShort {
            available: tail_len,
            required: MIN_TAIL,
        });
    }
    let tail_start = n - tail_len;
    let tail = &seq[tail_start..];
    let k = tail[0].dim();
    for v in tail {
        v.check_dim(k)?;
    }

    let mut assigned = vec![false; tail_len];
    let mut clusters = Vec::new();
    for i in 0..tail_len {
        if assigned[i] {
            continue;
        }
        let seed = &tail[i];
        let members: Vec<usize> = (i..tail_len)
            .filter(|&j| !assigned[j] && tail[j].dist_inf(seed) <= epsilon)
            .collect();
        for &j in &members {
            assigned[j] = true;
        }
        let mean = Vector::mean(members.iter().map(|&j| &tail[j])).expect("seed is a member");
        let mean_radius = members
            .iter()
            .map(|&j| tail[j].dist_inf(&mean))
            .fold(0.0, f64::max);
        let (center, radius) = if mean_radius <= epsilon {
            (mean, mean_radius)
        } else {
            let r = members
                .iter()
                .map(|&j| tail[j].dist_inf(seed))
                .fold(0.0, f64::max);
            (seed.clone(), r)
        };
        clusters.push(Cluster {
            center,
            count: members.len(),
            radius,
        });
    }
    clusters.sort_by_key(|c| std::cmp::Reverse(c.count));
    Ok(RotationSetEstimate {
        clusters,
        tail_start,
        tail_len,
        epsilon,
    })
}

/// Symmetric max-min distance between two finite center sets.
pub fn center_set_distance(a: &[Vector], b: &[Vector]) -> f64 {
    fn directed(from: &[Vector], to: &[Vector]) -> f64 {
        from.iter()
            .map(|x| to.iter().map(|y| x.dist_inf(y)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    }
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    directed(a, b).max(directed(b, a))
}

/// Iterate, build the chosen rotation sequence and cluster its tail.
pub fn estimate_rotation_set(
    sys: &SystemDefinition,
    eta: &Vector,
    n_steps: usize,
    tail_fraction: f64,
    epsilon: f64,
    source: RotationSource,
) -> Result<RotationSetEstimate> {
    let orbit = iterate_orbit(sys, eta, n_steps)?;
    let seq = rotation_sequence(&orbit);
    let data = match source {
        RotationSource::Points => &seq.from_points,
        RotationSource::Displacements => &seq.from_displacements,
    };
    limit_set_estimate(data, tail_fraction, epsilon)
}

/// A point with `psi_m(x) = x + q`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodicPointResult {
    pub eta: Vector,
    pub m: usize,
    pub q: IntegerVector,
    /// `q / m`.
    pub rho: Vector,
    /// `|psi_m(x) - x - q|`.
    pub residual: f64,
    /// `|psi_{2m}(x) - x - 2q|`.
    pub confirmation_residual: f64,
}

/// Search each seed for the smallest `m <= m_max` with `psi_m(x) - x`
/// within `tol` of an integer vector, confirmed at `2m` within `2 tol`.
pub fn detect_periodic(
    sys: &SystemDefinition,
    seeds: &[Vector],
    m_max: usize,
    tol: f64,
) -> Result<Vec<PeriodicPointResult>> {
    if m_max == 0 {
        return Err(Error::InvalidInput("m_max must be at least 1".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    let per_seed: Vec<Option<PeriodicPointResult>> = seeds
        .par_iter()
        .map(|eta| periodic_for_seed(sys, eta, m_max, tol))
        .collect::<Result<_>>()?;
    Ok(per_seed.into_iter().flatten().collect())
}

fn periodic_for_seed(
    sys: &SystemDefinition,
    eta: &Vector,
    m_max: usize,
    tol: f64,
) -> Result<Option<PeriodicPointResult>> {
    let orbit = iterate_orbit(sys, eta, 2 * m_max)?;
    for m in 1..=m_max {
        let shift = &orbit.points[m] - eta;
        let q = IntegerVector::round_from(&shift);
        let residual = shift.dist_inf(&q.to_vector());
        if residual > tol {
            continue;
        }
        let twice = &orbit.points[2 * m] - eta;
        let confirmation_residual = twice.dist_inf(&q.scale(2).to_vector());
        if confirmation_residual > 2.0 * tol {
            continue;
        }
        let rho = Vector::new(q.iter().map(|&n| n as f64 / m as f64).collect())?;
        return Ok(Some(PeriodicPointResult {
            eta: eta.clone(),
            m,
            q,
            rho,
            residual,
            confirmation_residual,
        }));
    }
    Ok(None)
}

#[derive(Debug, Clone, Serialize)]
pub struct QPeriodicityReport {
    pub base: RotationSetEstimate,
    pub shifted: RotationSetEstimate,
    pub distance: f64,
    pub passed: bool,
}

/// Compare rotation-set estimates from `a_n / n` at `eta` and `eta + q`;
/// passes when the center sets are within `2 epsilon`.
pub fn check_q_periodicity(
    sys: &SystemDefinition,
    eta: &Vector,
    q: &IntegerVector,
    n_steps: usize,
    epsilon: f64,
    tail_fraction: f64,
) -> Result<QPeriodicityReport> {
    if q.dim() != eta.dim() {
        return Err(Error::DimensionMismatch {
            expected: eta.dim(),
            found: q.dim(),
        });
    }
    let shifted_eta = eta.add_integer(q);
    let base = estimate_rotation_set(sys, eta, n_steps, tail_fraction, epsilon, RotationSource::Displacements)?;
    let shifted = estimate_rotation_set(
        sys,
        &shifted_eta,
        n_steps,
        tail_fraction,
        epsilon,
        RotationSource::Displacements,
    )?;
    let distance = center_set_distance(&base.centers(), &shifted.centers());
    Ok(QPeriodicityReport {
        passed: distance <= 2.0 * epsilon,
        base,
        shifted,
        distance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{make_constant_system, make_sine_system};
    use std::f64::consts::PI;

    fn v(x: &[f64]) -> Vector {
        Vector::from_slice(x).unwrap()
    }

    /// `psi` for the sine system written out by hand.
    fn sine_psi(r: f64, x: [f64; 2]) -> [f64; 2] {
        [x[0] + r * (2.0 * PI * x[1]).sin(), x[1] - r * (2.0 * PI * x[0]).sin()]
    }

    #[test]
    fn constant_orbit() {
        let sys = make_constant_system(&v(&[1.0 / 3.0, -0.5]));
        let orbit = iterate_orbit(&sys, &v(&[0.0, 0.0]), 3).unwrap();
        let expected = [[0.0, 0.0], [1.0 / 3.0, -0.5], [2.0 / 3.0, -1.0], [1.0, -1.5]];
        for (p, e) in orbit.points.iter().zip(expected) {
            assert!(p.dist_inf(&v(&e)) <= 1e-15);
        }
    }

    #[test]
    fn identity_orbit() {
        let sys = make_constant_system(&Vector::zeros(2));
        let eta = v(&[0.3, 4.0]);
        let orbit = iterate_orbit(&sys, &eta, 5).unwrap();
        assert!(orbit.points.iter().all(|p| *p == eta));
        assert!(orbit.displacements.iter().all(|d| d.norm_inf() == 0.0));
    }

    #[test]
    fn sine_orbit_two_steps() {
        let sys = make_sine_system(0.1).unwrap();
        let orbit = iterate_orbit(&sys, &v(&[0.25, 0.0]), 2).unwrap();
        let expected = sine_psi(0.1, sine_psi(0.1, [0.25, 0.0]));
        assert!(orbit.points[2].dist_inf(&v(&expected)) <= 1e-15);
    }

    #[test]
    fn zero_length_orbit_rejected() {
        let sys = make_sine_system(0.1).unwrap();
        assert!(iterate_orbit(&sys, &v(&[0.0, 0.0]), 0).is_err());
        assert!(iterate_orbit(&sys, &v(&[0.0]), 3).is_err());
    }

    #[test]
    fn evaluation_error_reports_step() {
        let sys = SystemDefinition::with_auto_interpolant("blowup", 1, |x| {
            vec![if x[0] > 0.55 { f64::NAN } else { x[0] + 0.25 }]
        })
        .unwrap();
        let err = iterate_orbit(&sys, &v(&[0.1]), 5).unwrap_err();
        assert!(matches!(err, Error::Evaluation { index: Some(3), .. }), "{err:?}");

        let huge = make_sine_system(1e300).unwrap();
        let err = iterate_orbit(&huge, &v(&[0.1, 0.2]), 5).unwrap_err();
        assert!(matches!(err, Error::Evaluation { index: Some(1), .. }), "{err:?}");
        assert!(matches!(psi_n(&huge, &v(&[1e300, 0.0]), 1), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn orbit_invariants() {
        let sys = make_sine_system(0.1).unwrap();
        let eta = v(&[0.7, -3.2]);
        let orbit = iterate_orbit(&sys, &eta, 500).unwrap();
        for n in 1..=500 {
            let step = &orbit.displacements[n] - &orbit.displacements[n - 1];
            let a = sys.displacement(&orbit.points[n - 1]).unwrap();
            assert!(step.dist_inf(&a) <= 1e-12);
            let back = &orbit.points[n] - &orbit.displacements[n];
            assert!(back.dist_inf(&eta) <= 1e-9 * n as f64);
        }
    }

    #[test]
    fn rotation_sequence_examples() {
        let g = v(&[1.0 / 3.0, -0.5]);
        let sys = make_constant_system(&g);
        let eta = v(&[0.2, 0.9]);
        let seq = rotation_sequence(&iterate_orbit(&sys, &eta, 200).unwrap());
        for (i, p) in seq.from_points.iter().enumerate() {
            let n = (i + 1) as f64;
            let expected = &g + &eta.scale(1.0 / n);
            assert!(p.dist_inf(&expected) <= 1e-13);
        }
        assert!(seq.max_gap_error <= 1e-13);

        let id = make_constant_system(&Vector::zeros(2));
        let seq = rotation_sequence(&iterate_orbit(&id, &v(&[5.0, 5.0]), 10).unwrap());
        assert_eq!(seq.from_points[4], v(&[1.0, 1.0]));
        assert!(seq.from_displacements.iter().all(|d| d.norm_inf() == 0.0));

        let s = make_sine_system(0.1).unwrap();
        let seq = rotation_sequence(&iterate_orbit(&s, &v(&[0.25, 0.0]), 1).unwrap());
        assert!(seq.from_points[0].dist_inf(&v(&[0.25, -0.1])) <= 1e-15);
    }

    #[test]
    fn limit_set_constant() {
        let g = v(&[1.0 / 3.0, -0.5]);
        let sys = make_constant_system(&g);
        let est = estimate_rotation_set(&sys, &Vector::zeros(2), 1000, 0.5, 1e-3, RotationSource::Points).unwrap();
        assert_eq!(est.clusters.len(), 1);
        assert!(est.clusters[0].center.dist_inf(&g) <= 2.0 / 1000.0);
        assert_eq!(est.clusters[0].count, 500);
        assert_eq!(est.tail_start, 500);
    }

    #[test]
    fn limit_set_two_points() {
        let seq: Vec<Vector> = (0..100)
            .map(|i| if i % 2 == 0 { v(&[0.0, 0.0]) } else { v(&[1.0, 1.0]) })
            .collect();
        let est = limit_set_estimate(&seq, 1.0, 0.1).unwrap();
        assert_eq!(est.clusters.len(), 2);
        assert_eq!(est.clusters[0].count, 50);
        assert_eq!(est.clusters[1].count, 50);
        assert!(est.covers(&seq));
    }

    #[test]
    fn limit_set_rejects_short_tail() {
        let seq = vec![v(&[0.0]); 15];
        assert_eq!(
            limit_set_estimate(&seq, 0.5, 0.1),
            Err(Error::TailTooShort {
                available: 8,
                required: MIN_TAIL
            })
        );
        assert!(limit_set_estimate(&seq, 0.0, 0.1).is_err());
        assert!(limit_set_estimate(&seq, 1.0, -1.0).is_err());
    }

    #[test]
    fn limit_set_keeps_seed_when_mean_would_lose_coverage() {
        // members at 0 and eps on one side pull the mean away from -eps
        let seq: Vec<Vector> = [0.0, -1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]
            .iter()
            .map(|&x| v(&[x]))
            .collect();
        let est = limit_set_estimate(&seq, 1.0, 1.0).unwrap();
        assert!(est.covers(&seq));
    }

    #[test]
    fn sine_limit_set_is_stable_under_longer_runs() {
        let sys = make_sine_system(0.1).unwrap();
        let eta = v(&[0.25, 0.0]);
        let eps = default_epsilon(5000);
        let short = estimate_rotation_set(&sys, &eta, 5000, 0.5, eps, RotationSource::Points).unwrap();
        let long = estimate_rotation_set(&sys, &eta, 50_000, 0.5, eps, RotationSource::Points).unwrap();
        let d = center_set_distance(&short.centers(), &long.centers());
        assert!(d <= 2.0 * eps, "distance {d}");
    }

    #[test]
    fn periodic_rational_translation() {
        let sys = make_constant_system(&v(&[1.0 / 3.0, 0.5]));
        let hits = detect_periodic(&sys, &[Vector::zeros(2)], 6, 1e-9).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].m, 6);
        assert_eq!(hits[0].q, IntegerVector(vec![2, 3]));
        assert_eq!(hits[0].rho, v(&[1.0 / 3.0, 0.5]));
    }

    #[test]
    fn periodic_identity() {
        let sys = make_constant_system(&Vector::zeros(2));
        let hits = detect_periodic(&sys, &[v(&[0.4, 0.1]), v(&[2.0, -1.0])], 3, 1e-12).unwrap();
        assert_eq!(hits.len(), 2);
        for h in hits {
            assert_eq!(h.m, 1);
            assert_eq!(h.q, IntegerVector(vec![0, 0]));
            assert_eq!(h.rho.norm_inf(), 0.0);
        }
    }

    #[test]
    fn periodic_irrational_translation() {
        let step = 2f64.sqrt() / 10.0;
        // independent check: no multiple of step up to 50 is near an integer
        let closest = (1..=50)
            .map(|m| {
                let x = m as f64 * step;
                (x - x.round()).abs()
            })
            .fold(f64::INFINITY, f64::min);
        assert!(closest > 1e-3);
        let sys = make_constant_system(&v(&[step, 0.0]));
        assert!(detect_periodic(&sys, &[Vector::zeros(2)], 50, 1e-9).unwrap().is_empty());
    }

    #[test]
    fn q_periodicity_examples() {
        let c = make_constant_system(&v(&[1.0 / 3.0, -0.5]));
        let rep = check_q_periodicity(&c, &v(&[0.1, 0.2]), &IntegerVector(vec![1, 0]), 200, 0.05, 0.5).unwrap();
        assert!(rep.distance <= 1e-12);
        assert!(rep.passed);

        let id = make_constant_system(&Vector::zeros(2));
        let rep = check_q_periodicity(&id, &v(&[0.1, 0.2]), &IntegerVector(vec![-4, 2]), 100, 0.1, 0.5).unwrap();
        assert_eq!(rep.distance, 0.0);
        assert_eq!(rep.base.centers(), vec![Vector::zeros(2)]);

        let s = make_sine_system(0.1).unwrap();
        let eps = default_epsilon(2000);
        let rep = check_q_periodicity(&s, &v(&[0.25, 0.0]), &IntegerVector(vec![3, -2]), 2000, eps, 0.5).unwrap();
        assert!(rep.passed, "{}", rep.distance);
    }

    #[test]
    fn hausdorff_distance() {
        let a = vec![v(&[0.0]), v(&[1.0])];
        let b = vec![v(&[0.1])];
        assert!((center_set_distance(&a, &b) - 0.9).abs() < 1e-15);
        assert_eq!(center_set_distance(&[], &[]), 0.0);
    }
}
