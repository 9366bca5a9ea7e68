//! Continuous-time solutions rebuilt from a generalised system.
//!
//! For `t = n + s` with `n = floor(t)` and `s in [0, 1)` the solution is
//! `phi(t, x) = phi_unit(s, psi_n(x))`. The helpers here check the gluing
//! and shift identities that make this a flow, and measure the remainder
//! `phi(t, x) - psi_{n_t}(x)` and the mean motion `(phi(t, x) - x) / t`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::iteration::iterate_orbit;
use crate::system::{fundamental_grid, SystemDefinition};
use crate::vecspace::{IntegerVector, Vector};

/// Jumps must shrink by at least this factor when the probe offset
/// shrinks tenfold.
pub const CONTINUITY_SHRINK_FACTOR: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowSample {
    pub t: f64,
    pub eta: Vector,
    pub value: Vector,
    /// `floor(t)`.
    pub n: usize,
    /// `t - n`.
    pub s: f64,
}

fn split_time(t: f64) -> Result<(usize, f64)> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::Domain(format!("time must be finite and nonnegative, got {t}")));
    }
    let n = t.floor();
    Ok((n as usize, t - n))
}

/// `phi(t, eta)` for `t >= 0`.
pub fn reconstruct_phi(sys: &SystemDefinition, eta: &Vector, t: f64) -> Result<FlowSample> {
    Ok(reconstruct_series(sys, eta, &[t])?.remove(0))
}

/// `phi(t, eta)` at several times, sharing one orbit.
pub fn reconstruct_series(sys: &SystemDefinition, eta: &Vector, times: &[f64]) -> Result<Vec<FlowSample>> {
    eta.check_dim(sys.dim())?;
    let splits = times.iter().map(|&t| split_time(t)).collect::<Result<Vec<_>>>()?;
    let n_max = splits.iter().map(|&(n, _)| n).max().unwrap_or(0);
    let points = if n_max == 0 {
        vec![eta.clone()]
    } else {
        iterate_orbit(sys, eta, n_max)?.points
    };
    times
        .iter()
        .zip(splits)
        .map(|(&t, (n, s))| {
            Ok(FlowSample {
                t,
                eta: eta.clone(),
                value: sys.phi_unit(s, &points[n])?,
                n,
                s,
            })
        })
        .collect()
}

fn phi_at(sys: &SystemDefinition, eta: &Vector, t: f64) -> Result<Vector> {
    Ok(reconstruct_phi(sys, eta, t)?.value)
}

#[derive(Debug, Clone, Serialize)]
pub struct JumpRow {
    pub n: usize,
    /// `|phi(n + delta) - phi(n - delta)|`.
    pub jump: f64,
    /// Same with `delta / 10`.
    pub jump_refined: f64,
    /// `jump / jump_refined`; `None` once the jump is at round-off level.
    pub shrink_ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuityReport {
    pub delta: f64,
    pub rows: Vec<JumpRow>,
    pub min_shrink_ratio: Option<f64>,
    pub continuous: bool,
}

/// Probe the gluing of consecutive unit intervals at `t = 1..=n_max`.
pub fn continuity_probe(sys: &SystemDefinition, eta: &Vector, n_max: usize, delta: f64) -> Result<ContinuityReport> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidInput(format!("delta must lie in (0, 1), got {delta}")));
    }
    if n_max == 0 {
        return Err(Error::InvalidInput("n_max must be at least 1".into()));
    }
    let orbit = iterate_orbit(sys, eta, n_max)?;
    let mut rows = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let before = &orbit.points[n - 1];
        let at = &orbit.points[n];
        let jump_for = |d: f64| -> Result<f64> {
            Ok(sys.phi_unit(d, at)?.dist_inf(&sys.phi_unit(1.0 - d, before)?))
        };
        let jump = jump_for(delta)?;
        let jump_refined = jump_for(delta / 10.0)?;
        let floor = 64.0 * f64::EPSILON * (1.0 + at.norm_inf());
        let shrink_ratio = if jump <= floor {
            None
        } else if jump_refined == 0.0 {
            Some(f64::INFINITY)
        } else {
            Some(jump / jump_refined)
        };
        rows.push(JumpRow {
            n,
            jump,
            jump_refined,
            shrink_ratio,
        });
    }
    let min_shrink_ratio = rows.iter().filter_map(|r| r.shrink_ratio).reduce(f64::min);
    Ok(ContinuityReport {
        delta,
        continuous: min_shrink_ratio.is_none_or(|r| r >= CONTINUITY_SHRINK_FACTOR),
        min_shrink_ratio,
        rows,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ShiftReport {
    pub samples: usize,
    pub tol: f64,
    /// Worst `|phi(t + 1, x) - phi(t, psi(x))|`.
    pub max_shift_residual: f64,
    /// Worst `|phi(t, x + q) - phi(t, x) - q|`.
    pub max_equivariance_residual: f64,
    pub passed: bool,
}

pub fn check_shift_identity(
    sys: &SystemDefinition,
    eta: &Vector,
    t_samples: &[f64],
    q: &IntegerVector,
    tol: f64,
) -> Result<ShiftReport> {
    if q.dim() != eta.dim() {
        return Err(Error::DimensionMismatch {
            expected: eta.dim(),
            found: q.dim(),
        });
    }
    let image = sys.psi(eta)?;
    let shifted = eta.add_integer(q);
    let mut shift_res = 0.0_f64;
    let mut equi_res = 0.0_f64;
    for &t in t_samples {
        let here = phi_at(sys, eta, t)?;
        let ahead = phi_at(sys, eta, t + 1.0)?;
        shift_res = shift_res.max(ahead.dist_inf(&phi_at(sys, &image, t)?));
        equi_res = equi_res.max(phi_at(sys, &shifted, t)?.dist_inf(&here.add_integer(q)));
    }
    Ok(ShiftReport {
        samples: t_samples.len(),
        tol,
        max_shift_residual: shift_res,
        max_equivariance_residual: equi_res,
        passed: shift_res <= tol && equi_res <= tol,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RemainderSample {
    pub t: f64,
    pub b: Vector,
}

/// Largest remainder over the times in one dyadic window.
#[derive(Debug, Clone, Serialize)]
pub struct WindowMax {
    /// `j` for the window `[2^j, 2^(j+1))`; `-1` marks `[0, 1)`.
    pub index: i32,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub max_norm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RemainderReport {
    pub samples: Vec<RemainderSample>,
    pub max_norm: f64,
    /// Nonempty windows in increasing order.
    pub windows: Vec<WindowMax>,
}

impl RemainderReport {
    /// Whether every window maximum stays within `factor` times the first
    /// window's maximum.
    pub fn windows_bounded_by(&self, factor: f64) -> bool {
        match self.windows.first() {
            Some(first) => self.windows.iter().all(|w| w.max_norm <= factor * first.max_norm),
            None => true,
        }
    }
}

fn window_index(t: f64) -> i32 {
    if t < 1.0 {
        -1
    } else {
        63 - (t.floor() as u64).leading_zeros() as i32
    }
}

/// `b(t, x) = phi(t, x) - psi_{n_t}(x)` over `t_grid`, with per-window maxima.
pub fn remainder_b(sys: &SystemDefinition, eta: &Vector, t_grid: &[f64]) -> Result<RemainderReport> {
    let flow = reconstruct_series(sys, eta, t_grid)?;
    let n_max = flow.iter().map(|f| f.n).max().unwrap_or(0);
    let points = if n_max == 0 {
        vec![eta.clone()]
    } else {
        iterate_orbit(sys, eta, n_max)?.points
    };
    let mut samples = Vec::with_capacity(flow.len());
    let mut windows: Vec<WindowMax> = Vec::new();
    let mut max_norm = 0.0_f64;
    for f in flow {
        let b = &f.value - &points[f.n];
        let norm = b.norm_inf();
        max_norm = max_norm.max(norm);
        let idx = window_index(f.t);
        match windows.iter_mut().find(|w| w.index == idx) {
            Some(w) => {
                w.count += 1;
                w.max_norm = w.max_norm.max(norm);
            }
            None => {
                let (lo, hi) = if idx < 0 {
                    (0.0, 1.0)
                } else {
                    (2f64.powi(idx), 2f64.powi(idx + 1))
                };
                windows.push(WindowMax {
                    index: idx,
                    lo,
                    hi,
                    count: 1,
                    max_norm: norm,
                });
            }
        }
        samples.push(RemainderSample { t: f.t, b });
    }
    windows.sort_by_key(|w| w.index);
    Ok(RemainderReport {
        samples,
        max_norm,
        windows,
    })
}

/// `F(t, x) = (phi(t, x) - x) / t` for `t > 1`.
pub fn mean_motion(sys: &SystemDefinition, eta: &Vector, t: f64) -> Result<Vector> {
    if !(t > 1.0) || !t.is_finite() {
        return Err(Error::Domain(format!("mean motion needs t > 1, got {t}")));
    }
    Ok((&phi_at(sys, eta, t)? - eta).scale(1.0 / t))
}

/// `F(n + offset, x)` for `n = 1..=n_steps`, from a single orbit.
pub fn mean_motion_sequence(
    sys: &SystemDefinition,
    eta: &Vector,
    n_steps: usize,
    offset: f64,
) -> Result<Vec<Vector>> {
    if !(0.0..1.0).contains(&offset) {
        return Err(Error::InvalidInput(format!("offset must lie in [0, 1), got {offset}")));
    }
    let orbit = iterate_orbit(sys, eta, n_steps)?;
    (1..=n_steps)
        .map(|n| {
            let t = n as f64 + offset;
            let value = sys.phi_unit(offset, &orbit.points[n])?;
            Ok((&value - eta).scale(1.0 / t))
        })
        .collect()
}

/// Largest `|phi_unit(s, x) - x|` over a lattice of `x` in the fundamental
/// domain and `s` in `{0, 1/s_steps, ..., 1}`; bounds the remainder.
pub fn interpolant_excursion(sys: &SystemDefinition, grid_per_axis: usize, s_steps: usize) -> Result<f64> {
    if grid_per_axis < 2 || s_steps == 0 {
        return Err(Error::InvalidInput("grid must be >= 2 and s_steps >= 1".into()));
    }
    let mut best = 0.0_f64;
    for x in fundamental_grid(sys.dim(), grid_per_axis) {
        for i in 0..=s_steps {
            let s = i as f64 / s_steps as f64;
            best = best.max(sys.phi_unit(s, &x)?.dist_inf(&x));
        }
    }
    Ok(best)
}

/// Point `(u, v, w)` on the standard torus of radii `a > b > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TorusPoint {
    pub u: f64,
    pub v: f64,
    pub w: f64,
}

/// Map a path point `(t, x)` of a one-dimensional system onto the torus
/// surface in 3-space.
pub fn embed_torus(t: f64, x: f64, a: f64, b: f64) -> Result<TorusPoint> {
    if !(b > 0.0 && b < a) || !a.is_finite() {
        return Err(Error::InvalidInput(format!("need 0 < b < a, got a={a}, b={b}")));
    }
    if !t.is_finite() || !x.is_finite() {
        return Err(Error::InvalidInput("t and x must be finite".into()));
    }
    let ring = a + b * (2.0 * PI * x).cos();
    Ok(TorusPoint {
        u: ring * (2.0 * PI * t).cos(),
        v: ring * (2.0 * PI * t).sin(),
        w: b * (2.0 * PI * x).sin(),
    })
}
