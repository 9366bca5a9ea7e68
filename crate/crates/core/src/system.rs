//! Generalised systems: a time-one map `psi` together with an interpolant
//! `phi_unit` on `t in [0, 1]`, plus sampling-based checks of the
//! structural conditions they are expected to satisfy.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::jacobian::JacobianMatrix;
use crate::vecspace::{IntegerVector, Vector};

pub type MapFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type InterpolantFn = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;
/// Returns the `k x k` Jacobian in row-major order.
pub type JacobianFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Where the unit-interval interpolant came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InterpolantKind {
    Supplied,
    /// `phi_unit(t, x) = x + t * (psi(x) - x)`, substituted for systems
    /// that ship without an interpolant.
    Auto,
}

/// A generalised system on `E_k`.
///
/// The maps must be re-entrant: scans call them from several threads at
/// once.
#[derive(Clone)]
pub struct SystemDefinition {
    label: String,
    dim: usize,
    psi: MapFn,
    phi: InterpolantFn,
    jacobian: Option<JacobianFn>,
    interpolant: InterpolantKind,
}

impl fmt::Debug for SystemDefinition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemDefinition")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("interpolant", &self.interpolant)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

fn auto_interpolant(psi: MapFn) -> InterpolantFn {
    Arc::new(move |t, x| {
        let y = psi(x);
        x.iter().zip(&y).map(|(a, b)| a + t * (b - a)).collect()
    })
}

impl SystemDefinition {
    pub fn new<P, F>(label: impl Into<String>, dim: usize, psi: P, phi_unit: F) -> Result<Self>
    where
        P: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        F: Fn(f64, &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        if dim == 0 {
            return Err(Error::InvalidInput("system dimension must be positive".into()));
        }
        Ok(Self {
            label: label.into(),
            dim,
            psi: Arc::new(psi),
            phi: Arc::new(phi_unit),
            jacobian: None,
            interpolant: InterpolantKind::Supplied,
        })
    }

    /// System whose interpolant is the straight line from `x` to `psi(x)`.
    pub fn with_auto_interpolant<P>(label: impl Into<String>, dim: usize, psi: P) -> Result<Self>
    where
        P: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        if dim == 0 {
            return Err(Error::InvalidInput("system dimension must be positive".into()));
        }
        let psi: MapFn = Arc::new(psi);
        Ok(Self {
            label: label.into(),
            dim,
            phi: auto_interpolant(psi.clone()),
            psi,
            jacobian: None,
            interpolant: InterpolantKind::Auto,
        })
    }

    /// Attach an analytic Jacobian of `psi` (row-major `k x k`).
    pub fn with_jacobian<J>(mut self, jacobian: J) -> Self
    where
        J: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(jacobian));
        self
    }

    /// Replace the interpolant with the straight-line one.
    pub fn into_auto_interpolant(mut self) -> Self {
        self.phi = auto_interpolant(self.psi.clone());
        self.interpolant = InterpolantKind::Auto;
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn interpolant_kind(&self) -> InterpolantKind {
        self.interpolant
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    fn checked(&self, function: &'static str, at: &Vector, out: Vec<f64>) -> Result<Vector> {
        if out.len() != self.dim || out.iter().any(|x| !x.is_finite()) {
            return Err(Error::Evaluation {
                function,
                point: at.as_slice().to_vec(),
                index: None,
            });
        }
        Ok(Vector::new(out).expect("checked finite and nonempty"))
    }

    /// The time-one map.
    pub fn psi(&self, x: &Vector) -> Result<Vector> {
        x.check_dim(self.dim)?;
        self.checked("psi", x, (self.psi)(x.as_slice()))
    }

    /// The interpolant on `t in [0, 1]`.
    pub fn phi_unit(&self, t: f64, x: &Vector) -> Result<Vector> {
        x.check_dim(self.dim)?;
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Domain(format!("interpolant time {t} outside [0, 1]")));
        }
        self.checked("phi_unit", x, (self.phi)(t, x.as_slice()))
    }

    /// `a(x) = psi(x) - x`.
    pub fn displacement(&self, x: &Vector) -> Result<Vector> {
        Ok(&self.psi(x)? - x)
    }

    /// Analytic Jacobian of `psi` at `x`, if one was supplied.
    pub fn analytic_jacobian(&self, x: &Vector) -> Option<Result<JacobianMatrix>> {
        let jac = self.jacobian.as_ref()?;
        Some(x.check_dim(self.dim).and_then(|_| {
            let entries = jac(x.as_slice());
            if entries.len() != self.dim * self.dim || entries.iter().any(|v| !v.is_finite()) {
                return Err(Error::Evaluation {
                    function: "jacobian",
                    point: x.as_slice().to_vec(),
                    index: None,
                });
            }
            JacobianMatrix::from_row_major(self.dim, entries)
        }))
    }
}

/// Translation system `psi(x) = x + g`, `phi_unit(t, x) = x + t g`.
pub fn make_constant_system(g: &Vector) -> SystemDefinition {
    let k = g.dim();
    let gp = g.as_slice().to_vec();
    let gf = gp.clone();
    SystemDefinition::new(
        "constant",
        k,
        move |x| x.iter().zip(&gp).map(|(a, b)| a + b).collect(),
        move |t, x| x.iter().zip(&gf).map(|(a, b)| a + t * b).collect(),
    )
    .expect("dimension is positive")
    .with_jacobian(move |_| {
        let mut m = vec![0.0; k * k];
        for i in 0..k {
            m[i * k + i] = 1.0;
        }
        m
    })
}

/// Sine-coupled planar system
/// `psi(x) = [x1 + r sin(2 pi x2), x2 - r sin(2 pi x1)]`, with the
/// interpolant ramping the coupling by `sin(pi t / 2)`.
pub fn make_sine_system(r: f64) -> Result<SystemDefinition> {
    if !r.is_finite() {
        return Err(Error::InvalidInput(format!("coupling r must be finite, got {r}")));
    }
    let sys = SystemDefinition::new(
        "sine",
        2,
        move |x| {
            vec![
                x[0] + r * (2.0 * PI * x[1]).sin(),
                x[1] - r * (2.0 * PI * x[0]).sin(),
            ]
        },
        move |t, x| {
            let ramp = (PI * t / 2.0).sin();
            vec![
                x[0] + r * ramp * (2.0 * PI * x[1]).sin(),
                x[1] - r * ramp * (2.0 * PI * x[0]).sin(),
            ]
        },
    )?
    .with_jacobian(move |x| {
        let c = 2.0 * PI * r;
        vec![
            1.0,
            c * (2.0 * PI * x[1]).cos(),
            -c * (2.0 * PI * x[0]).cos(),
            1.0,
        ]
    });
    Ok(sys)
}

/// Uniform lattice `{i / n}` on `[0, 1)^k`, last axis fastest.
pub fn fundamental_grid(k: usize, n: usize) -> impl Iterator<Item = Vector> {
    let total = n.checked_pow(k as u32).unwrap_or(0);
    (0..total).map(move |mut idx| {
        let mut e = vec![0.0; k];
        for p in (0..k).rev() {
            e[p] = (idx % n) as f64 / n as f64;
            idx /= n;
        }
        Vector::new(e).expect("finite lattice point")
    })
}

fn random_unit_point(rng: &mut ChaCha8Rng, k: usize) -> Vector {
    Vector::new((0..k).map(|_| rng.gen::<f64>()).collect()).expect("finite")
}

fn random_shift(rng: &mut ChaCha8Rng, k: usize) -> IntegerVector {
    IntegerVector((0..k).map(|_| rng.gen_range(-2..=2)).collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct PeriodicityReport {
    pub samples: usize,
    pub tol: f64,
    /// Worst `|psi(x + q) - psi(x) - q|`.
    pub psi_violation: f64,
    /// Worst `|phi_unit(t, x + q) - phi_unit(t, x) - q|`.
    pub phi_violation: f64,
    pub max_violation: f64,
    pub worst_eta: Option<Vector>,
    pub worst_t: Option<f64>,
    pub worst_q: Option<IntegerVector>,
    pub passed: bool,
}

/// Sample equivariance of `psi` and `phi_unit` under integer shifts.
///
/// Points are drawn uniformly from `[0, 1)^k`, times from `[0, 1]`, and
/// each point is paired with `q_trials` shifts with entries in `-2..=2`.
pub fn validate_periodicity(
    sys: &SystemDefinition,
    n_samples: usize,
    q_trials: usize,
    tol: f64,
    seed: u64,
) -> Result<PeriodicityReport> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    if n_samples == 0 || q_trials == 0 {
        return Err(Error::InvalidInput("sample counts must be positive".into()));
    }
    let k = sys.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = PeriodicityReport {
        samples: n_samples * q_trials,
        tol,
        psi_violation: 0.0,
        phi_violation: 0.0,
        max_violation: 0.0,
        worst_eta: None,
        worst_t: None,
        worst_q: None,
        passed: true,
    };
    for _ in 0..n_samples {
        let eta = random_unit_point(&mut rng, k);
        let t: f64 = rng.gen_range(0.0..=1.0);
        let psi0 = sys.psi(&eta)?;
        let phi0 = sys.phi_unit(t, &eta)?;
        for _ in 0..q_trials {
            let q = random_shift(&mut rng, k);
            let shifted = eta.add_integer(&q);
            let dpsi = sys.psi(&shifted)?.dist_inf(&psi0.add_integer(&q));
            let dphi = sys.phi_unit(t, &shifted)?.dist_inf(&phi0.add_integer(&q));
            report.psi_violation = report.psi_violation.max(dpsi);
            report.phi_violation = report.phi_violation.max(dphi);
            let worst = dpsi.max(dphi);
            if worst > report.max_violation || report.worst_eta.is_none() {
                report.max_violation = report.max_violation.max(worst);
                report.worst_eta = Some(eta.clone());
                report.worst_t = Some(t);
                report.worst_q = Some(q);
            }
        }
    }
    report.passed = report.max_violation <= tol;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundaryReport {
    pub samples: usize,
    pub tol: f64,
    /// Worst `|phi_unit(0, x) - x|`.
    pub start_residual: f64,
    /// Worst `|phi_unit(1, x) - psi(x)|`.
    pub end_residual: f64,
    pub worst_eta: Option<Vector>,
    pub interpolant: InterpolantKind,
    pub passed: bool,
}

/// Sample the endpoint conditions `phi_unit(0, x) = x`, `phi_unit(1, x) = psi(x)`.
pub fn validate_phi_boundary(
    sys: &SystemDefinition,
    n_samples: usize,
    tol: f64,
    seed: u64,
) -> Result<BoundaryReport> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    if n_samples == 0 {
        return Err(Error::InvalidInput("sample count must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut start = 0.0_f64;
    let mut end = 0.0_f64;
    let mut worst: Option<(f64, Vector)> = None;
    for _ in 0..n_samples {
        let eta = random_unit_point(&mut rng, sys.dim());
        let s = sys.phi_unit(0.0, &eta)?.dist_inf(&eta);
        let e = sys.phi_unit(1.0, &eta)?.dist_inf(&sys.psi(&eta)?);
        start = start.max(s);
        end = end.max(e);
        let w = s.max(e);
        if worst.as_ref().is_none_or(|(m, _)| w > *m) {
            worst = Some((w, eta));
        }
    }
    Ok(BoundaryReport {
        samples: n_samples,
        tol,
        start_residual: start,
        end_residual: end,
        worst_eta: worst.map(|(_, e)| e),
        interpolant: sys.interpolant_kind(),
        passed: start <= tol && end <= tol,
    })
}

/// Grid estimate of `M >= sup |a(x)|`.
#[derive(Debug, Clone, Serialize)]
pub struct DisplacementBound {
    pub bound: f64,
    pub grid_resolution: usize,
    pub argmax: Vector,
}

/// Default grid resolution for displacement and interpolant bounds.
pub fn default_bound_grid(k: usize) -> usize {
    match k {
        0..=2 => 64,
        3 => 16,
        _ => 8,
    }
}

/// Max of `|psi(x) - x|` over the lattice `{i / n}^k`; periodicity of the
/// displacement makes the fundamental domain sufficient.
pub fn estimate_sup_a(sys: &SystemDefinition, grid_per_axis: usize) -> Result<DisplacementBound> {
    if grid_per_axis < 2 {
        return Err(Error::InvalidInput(format!(
            "grid resolution must be at least 2, got {grid_per_axis}"
        )));
    }
    let mut best: Option<(f64, Vector)> = None;
    for x in fundamental_grid(sys.dim(), grid_per_axis) {
        let m = sys.displacement(&x)?.norm_inf();
        if best.as_ref().is_none_or(|(b, _)| m > *b) {
            best = Some((m, x));
        }
    }
    let (bound, argmax) = best.expect("grid is nonempty");
    Ok(DisplacementBound {
        bound,
        grid_resolution: grid_per_axis,
        argmax,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Vector {
        Vector::from_slice(x).unwrap()
    }

    fn doubling_map() -> SystemDefinition {
        SystemDefinition::with_auto_interpolant("doubling", 2, |x| x.iter().map(|a| 2.0 * a).collect())
            .unwrap()
    }

    #[test]
    fn constant_system_examples() {
        let g = v(&[1.0 / 3.0, -0.5]);
        let sys = make_constant_system(&g);
        assert_eq!(sys.psi(&v(&[0.0, 0.0])).unwrap(), g);
        let mut x = v(&[0.0, 0.0]);
        for _ in 0..3 {
            x = sys.psi(&x).unwrap();
        }
        assert!(x.dist_inf(&v(&[1.0, -1.5])) <= 1e-15);

        let id = make_constant_system(&Vector::zeros(3));
        let p = v(&[0.3, -7.0, 2.5]);
        assert_eq!(id.psi(&p).unwrap(), p);
        let jac = sys.analytic_jacobian(&p.clone()).is_some();
        assert!(jac);
    }

    #[test]
    fn sine_system_examples() {
        let sys = make_sine_system(0.1).unwrap();
        let y = sys.psi(&v(&[0.25, 0.0])).unwrap();
        assert!(y.dist_inf(&v(&[0.25, -0.1])) <= 1e-15);

        let id = make_sine_system(0.0).unwrap();
        let p = v(&[0.37, 0.81]);
        assert_eq!(id.psi(&p).unwrap(), p);
        assert_eq!(id.phi_unit(0.4, &p).unwrap(), p);

        let critical = make_sine_system(1.0 / (2.0 * PI)).unwrap();
        let j = critical.analytic_jacobian(&v(&[0.0, 0.5])).unwrap().unwrap();
        assert!(j.determinant().abs() <= 1e-15);
    }

    #[test]
    fn rejects_non_finite_coupling() {
        assert!(make_sine_system(f64::NAN).is_err());
    }

    #[test]
    fn periodicity_of_builtins() {
        let c = make_constant_system(&v(&[1.0 / 3.0, -0.5]));
        let rep = validate_periodicity(&c, 500, 4, 1e-12, 7).unwrap();
        assert!(rep.passed);
        assert!(rep.max_violation <= 4.0 * f64::EPSILON * 4.0);

        let s = make_sine_system(0.1).unwrap();
        let rep = validate_periodicity(&s, 1000, 4, 1e-9, 42).unwrap();
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn doubling_map_fails_periodicity() {
        let rep = validate_periodicity(&doubling_map(), 100, 4, 1e-9, 42).unwrap();
        assert!(!rep.passed);
        assert!(rep.max_violation >= 1.0);
        assert!(rep.worst_q.unwrap().iter().any(|&n| n != 0));
    }

    #[test]
    fn boundary_residuals() {
        let s = make_sine_system(0.1).unwrap();
        let rep = validate_phi_boundary(&s, 1000, 1e-12, 3).unwrap();
        assert_eq!(rep.start_residual, 0.0);
        assert_eq!(rep.end_residual, 0.0);
        assert!(rep.passed);

        let c = make_constant_system(&v(&[1.0 / 3.0, -0.5]));
        let rep = validate_phi_boundary(&c, 200, 1e-12, 3).unwrap();
        assert_eq!(rep.start_residual, 0.0);
        assert_eq!(rep.end_residual, 0.0);
    }

    #[test]
    fn broken_interpolant_fails_boundary() {
        let broken = SystemDefinition::new(
            "broken",
            2,
            |x| vec![x[0] + 0.25, x[1] - 0.5],
            |_, x| x.to_vec(),
        )
        .unwrap();
        let rep = validate_phi_boundary(&broken, 50, 1e-9, 1).unwrap();
        assert!(!rep.passed);
        assert!((rep.end_residual - 0.5).abs() <= 1e-15);
        assert_eq!(rep.start_residual, 0.0);
    }

    #[test]
    fn auto_interpolant_hits_endpoints() {
        let sys = make_sine_system(0.2).unwrap().into_auto_interpolant();
        assert_eq!(sys.interpolant_kind(), InterpolantKind::Auto);
        let rep = validate_phi_boundary(&sys, 200, 1e-14, 9).unwrap();
        assert!(rep.passed);
    }

    #[test]
    fn non_finite_output_is_an_evaluation_error() {
        let bad = SystemDefinition::with_auto_interpolant("bad", 1, |x| vec![1.0 / (x[0] - 0.5)]).unwrap();
        let err = bad.psi(&v(&[0.5])).unwrap_err();
        assert!(matches!(err, Error::Evaluation { function: "psi", .. }));
        assert!(bad.phi_unit(1.5, &v(&[0.1])).is_err());
    }

    #[test]
    fn sup_a_examples() {
        let c = make_constant_system(&v(&[1.0 / 3.0, -0.5]));
        assert_eq!(estimate_sup_a(&c, 8).unwrap().bound, 0.5);

        let s = make_sine_system(0.1).unwrap();
        let m = estimate_sup_a(&s, 64).unwrap();
        assert!((m.bound - 0.1).abs() <= 1e-3);

        let id = make_sine_system(0.0).unwrap();
        assert_eq!(estimate_sup_a(&id, 16).unwrap().bound, 0.0);

        assert!(estimate_sup_a(&s, 1).is_err());
    }

    #[test]
    fn sup_a_nondecreasing_under_refinement() {
        let s = make_sine_system(0.13).unwrap();
        let mut prev = 0.0;
        for n in [2, 4, 8, 16, 32, 64] {
            let m = estimate_sup_a(&s, n).unwrap().bound;
            assert!(m >= prev);
            prev = m;
        }
    }

    #[test]
    fn displacement_is_periodic() {
        let s = make_sine_system(0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let x = random_unit_point(&mut rng, 2);
            let q = random_shift(&mut rng, 2);
            let d = s.displacement(&x).unwrap().dist_inf(&s.displacement(&x.add_integer(&q)).unwrap());
            assert!(d <= 1e-9);
        }
    }

    #[test]
    fn grid_covers_fundamental_domain() {
        let pts: Vec<Vector> = fundamental_grid(2, 4).collect();
        assert_eq!(pts.len(), 16);
        assert_eq!(pts[1], v(&[0.0, 0.25]));
        assert!(pts.iter().all(|p| p.iter().all(|&x| (0.0..1.0).contains(&x))));
    }
}
