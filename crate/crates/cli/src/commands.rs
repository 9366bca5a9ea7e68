//! One function per subcommand. Each resolves its parameters (writing the
//! defaults it used back into the config), runs the library call and
//! shapes the result into a [`Payload`].

use serde_json::{json, Value};
use torus_gvs::flow::{
    check_shift_identity, continuity_probe, embed_torus, mean_motion_sequence, reconstruct_series, remainder_b,
};
use torus_gvs::iteration::{
    center_set_distance, default_epsilon, detect_periodic, iterate_orbit, limit_set_estimate, rotation_sequence,
    RotationSource, DEFAULT_TAIL_FRACTION,
};
use torus_gvs::jacobian::{boundary_extremal_check, contraction_injectivity_check, det_scan};
use torus_gvs::system::{default_bound_grid, estimate_sup_a, validate_periodicity, validate_phi_boundary};
use torus_gvs::{IntegerVector, SystemDefinition, Vector};

use crate::config::{at_least, positive, vector, RunConfig};
use crate::error::CliError;
use crate::output::{indexed, Payload, Table};

/// Payload plus an optional validation failure (exit status 3).
pub struct Outcome {
    pub payload: Payload,
    pub failure: Option<String>,
}

impl Outcome {
    fn ok(summary: Value, tables: Vec<Table>) -> Self {
        Self {
            payload: Payload { summary, tables },
            failure: None,
        }
    }
}

pub const DEFAULT_ORBIT_N: usize = 100;
pub const DEFAULT_ROTATE_N: usize = 1000;
pub const DEFAULT_M_MAX: usize = 10;
pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_SAMPLES: usize = 1000;
pub const DEFAULT_Q_TRIALS: usize = 4;
pub const DEFAULT_TIMES: [f64; 5] = [0.0, 0.5, 1.0, 1.5, 2.0];
pub const DEFAULT_DELTA: f64 = 1e-4;
pub const DEFAULT_PROBE_STEPS: usize = 5;
pub const DEFAULT_T_MAX: f64 = 100.0;
pub const DEFAULT_T_STEP: f64 = 0.01;
pub const DEFAULT_SCAN_THRESHOLD: f64 = 1e-2;
pub const DEFAULT_PAIRS: usize = 10_000;
pub const DEFAULT_BOX_SIZE: f64 = 2.0;
pub const DEFAULT_BOUNDS_GRID: usize = 33;
pub const DEFAULT_BOUNDS_THRESHOLD: f64 = 1e-3;
pub const DEFAULT_EMBED_T_MAX: f64 = 10.0;
pub const DEFAULT_TORUS_A: f64 = 2.0;
pub const DEFAULT_TORUS_B: f64 = 1.0;

/// Default `singular-scan` grid.
pub fn default_scan_grid(k: usize) -> usize {
    if k <= 2 {
        128
    } else {
        32
    }
}

fn nums(v: &Vector) -> impl Iterator<Item = Value> + '_ {
    v.iter().map(|&x| json!(x))
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report serializes")
}

fn eta_param(cfg: &mut RunConfig, k: usize) -> Result<Vector, CliError> {
    let e = cfg.params.eta.get_or_insert_with(|| vec![0.0; k]).clone();
    vector("eta", e, k)
}

fn time_grid(t_max: f64, step: f64) -> Vec<f64> {
    let n = (t_max / step + 1e-9).floor() as usize;
    (0..=n).map(|i| i as f64 * step).collect()
}

pub fn dispatch(name: &str, sys: &SystemDefinition, cfg: &mut RunConfig) -> Result<Outcome, CliError> {
    match name {
        "validate" => validate(sys, cfg),
        "orbit" => orbit(sys, cfg),
        "rotate" => rotate(sys, cfg),
        "periodic" => periodic(sys, cfg),
        "reconstruct" => reconstruct(sys, cfg),
        "remainder" => remainder(sys, cfg),
        "singular-scan" => singular_scan(sys, cfg),
        "inject-check" => inject_check(sys, cfg),
        "bounds" => bounds(sys, cfg),
        "embed" => embed(sys, cfg),
        other => Err(CliError::usage(format!("unknown command '{other}'"))),
    }
}

fn validate(sys: &SystemDefinition, cfg: &mut RunConfig) -> Result<Outcome, CliError> {
    let p = &mut cfg.params;
    let samples = at_least("samples", *p.samples.get_or_insert(DEFAULT_SAMPLES), 1)?;
    let q_trials = at_least("q_trials", *p.q_trials.get_or_insert(DEFAULT_Q_TRIALS), 1)?;
    let tol = positive("tol", *p.tol.get_or_insert(DEFAULT_TOL))?;
    let grid = at_least("grid", *p.grid.get_or_insert(default_bound_grid(sys.dim())), 2)?;
    let seed = cfg.rng_seed;

    let periodicity = validate_periodicity(sys, samples, q_trials, tol, seed)?;
    let boundary = validate_phi_boundary(sys, samples, tol, seed)?;
    let bound = estimate_sup_a(sys, grid)?;
    let passed = periodicity.passed && boundary.passed;

    let mut checks = Table::new(
        "checks",
        vec!["check".into(), "max_violation".into(), "tol".into(), "passed".into()],
    );
    checks.push(vec![
        json!("periodicity"),
        json!(periodicity.max_violation),
        json!(tol),
        json!(periodicity.passed),
    ]);
    checks.push(vec![
        json!("phi_start"),
        json!(boundary.start_residual),
        json!(tol),
        json!(boundary.start_residual <= tol),
    ]);
    checks.push(vec![
        json!("phi_end"),
        json!(boundary.end_residual),
        json!(tol),
        json!(boundary.end_residual <= tol),
    ]);

    let summary = json!({
        "label": sys.label(),
        "dim": sys.dim(),
        "interpolant": sys.interpolant_kind(),
        "periodicity": to_value(&periodicity),
        "boundary": to_value(&boundary),
        "displacement_bound": to_value(&bound),
        "passed": passed,
    });
    let mut out = Outcome::ok(summary, vec![checks]);
    if !passed {
        out.failure = Some("system failed structural validation".into());
    }
    Ok(out)
}

fn orbit(sys: &SystemDefinition, cfg: &mut RunConfig) -> Result<Outcome, CliError> {
    let k = sys.dim();
    let eta = eta_param(cfg, k)?;
    let n = at_least("N", *cfg.params.n.get_or_insert(DEFAULT_ORBIT_N), 1)?;
    let orbit = iterate_orbit(sys, &eta, n)?;

    let mut columns = vec!["n".to_string()];
    columns.extend(indexed("x", k));
    columns.extend(indexed("a", k));
    let mut table = Table::new("orbit", columns);
    for (i, (x, a)) in orbit.points.iter().zip(&orbit.displacements).enumerate() {
        let mut row = vec![json!(i)];
        row.extend(nums(x));
        row.extend(nums(a));
        table.push(row);
    }
    let summary = json!({
        "N": n,
        "eta": eta,
        "final_point": orbit.points[n],
        "final_displacement": orbit.displacements[n],
    });
    Ok(Outcome::ok(summary, vec![table]))
}

fn rotate(sys: &SystemDefinition, cfg: &mut RunConfig) -> Result<Outcome, CliError> {
    let k = sys.dim();
    let eta = eta_param(cfg, k)?;
    let p = &mut cfg.params;
    let n = at_least("N", *p.n.get_or_insert(DEFAULT_ROTATE_N), 20)?;
    let tail = *p.tail_fraction.get_or_insert(DEFAULT_TAIL_FRACTION);
    if !(tail > 0.0 && tail <= 1.0) {
        return Err(CliError::usage_at("params.tail_fraction", format!("must lie in (0, 1], got {tail}")));
    }
    let eps = positive("epsilon", *p.epsilon.get_or_insert(default_epsilon(n)))?;
    let source = match p.source.get_or_insert_with(|| "points".into()).as_str() {
        "points" => RotationSource::Points,
        "displacements" => RotationSource::Displacements,
        other => {
            return Err(CliError::usage_at(
                "params.source",
                format!("expected 'points' or 'displacements', got '{other}'"),
            ))
        }
    };

    let orbit = iterate_orbit(sys, &eta, n)?;
    let seq = rotation_sequence(&orbit);
    let data = match source {
        RotationSource::Points => &seq.from_points,
        RotationSource::Displacements => &seq.from_displacements,
    };
    let estimate = limit_set_estimate(data, tail, eps)?;

    // continuous-time cross-check from F(n + 1/2, eta)
    let continuous_seq = mean_motion_sequence(sys, &eta, n, 0.5)?;
    let continuous = limit_set_estimate(&continuous_seq, tail, eps)?;
    let distance = center_set_distance(&estimate.centers(), &continuous.centers());

    let bound = estimate_sup_a(sys, default_bound_grid(k))?;
    let within_bound = estimate
        .clusters
        .iter()
        .all(|c| c.center.norm_inf() <= bound.bound + eps);

    let mut columns = indexed("center", k);
    columns.extend(["count".to_string(), "radius".to_string()]);
    let mut table = Table::new("clusters", columns);
    for c in &estimate.clusters {
        let mut row: Vec<Value> = nums(&c.center).collect();
        row.push(json!(c.count));
        row.push(json!(c.radius));
        table.push(row);
    }
    let summary = json!({
        "N": n,
        "source": source,
        "estimate": to_value(&estimate),
        "cluster_count": estimate.clusters.len(),
        "continuous_estimate": to_value(&continuous),
        "discrete_continuous_distance": distance,
        "discrete_continuous_agree": distance <= 2.0 * eps,
        "displacement_bound": bound.bound,
        "centers_within_bound": within_bound,
        "max_gap_error": seq.max_gap_error,
    });
    Ok(Outcome::ok(summary, vec![table]))
}

fn parse_seeds(seeds: &[Vec<f64>], k: usize) -> Result<Vec<Vector>, CliError> {
    seeds
        .iter()
        .enumerate()
        .map(|(i, s)| vector(&format!("seeds[{i}]"), s.clone(), k))
        .collect()
}

fn periodic(sys: &SystemDefinition, cfg: &mut RunConfig) -> Result<Outcome, CliError> {
    let k = sys.dim();
    let p = &mut cfg.params;
    let seeds = parse_seeds(p.seeds.get_or_insert_with(|| vec![vec![0.0; k]]), k)?;
    let m_max = at_least("m_max", *p.m_max.get_or_insert(DEFAULT_M_MAX), 1)?;
    let tol = positive("tol", *p.tol.get_or_insert(DEFAULT_TOL))?;
    let hits = detect_periodic(sys, &seeds, m_max, tol)?;

    let mut columns = indexed("seed", k);
    columns.push("m".into());
    columns.extend(indexed("q", k));
    columns.extend(indexed("rho", k));
    columns.extend(["residual".to_string(), "confirmation_residual".to_string()]);
    let mut table = Table::new("periodic", columns);
    for h in &hits {
        let mut row: Vec<Value> = nums(&h.eta).collect();
        row.push(json!(h.m));
        row.extend(h.q.iter().map(|&n| json!(n)));
        row.extend(nums(&h.rho));
        row.push(json!(h.residual));
        row.push(json!(h.confirmation_residual));
        table.push(row);
    }
    let summary = json!({
        "seeds": seeds.len(),
        "m_max": m_max,
        "hits": to_value(&hits),
    });
    Ok(Outcome::ok(summary, vec![table]))
}

fn reconstruct(sys: &SystemDefinition, cfg: &mut RunConfig) -> Result<Outcome, CliError> {
    let k = sys.dim();
    let eta = eta_param(cfg, k)?;
    let seed = cfg.rng_seed;
    let p = &mut cfg.params;
    let times = p.t.get_or_insert_with(|| DEFAULT_TIMES.to_vec()).clone();
    if let Some(bad) = times.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
        return Err(CliError::usage_at("params.t", format!("times must be finite and >= 0, got {bad}")));
    }
    let tol = positive("tol", *p.tol.get_or_insert(DEFAULT_TOL))?;
    let delta = *p.delta.get_or_insert(DEFAULT_DELTA);
    if !(delta > 0.0 && delta < 1.0) {
        return Err(CliError::usage_at("params.delta", format!("must lie in (0, 1), got {delta}")));
    }
    let probe_steps = at_least("probe_steps", *p.probe_steps.get_or_insert(DEFAULT_PROBE_STEPS), 1)?;

    let boundary = validate_phi_boundary(sys, 200, tol, seed)?;
    if !boundary.passed {
        return Ok(Outcome {
            payload: Payload {
                summary: json!({ "boundary": to_value(&boundary) }),
                tables: Vec::new(),
            },
            failure: Some("interpolant violates phi_unit(0,x)=x or phi_unit(1,x)=psi(x)".into()),
        });
    }

    let flow = reconstruct_series(sys, &eta, &times)?;
    let continuity = continuity_probe(sys, &eta, probe_steps, delta)?;
    let shift = check_shift_identity(sys, &eta, &times, &IntegerVector(vec![1; k]), tol)?;

    let mut columns = vec!["t".to_string(), "n".to_string(), "s".to_string()];
    columns.extend(indexed("phi", k));
    let mut table = Table::new("flow", columns);
    for f in &flow {
        let mut row = vec![json!(f.t), json!(f.n), json!(f.s)];
        row.extend(nums(&f.value));
        table.push(row);
    }
    let summary = json!({
        "eta": eta,
        "boundary": to_value(&boundary),
        "continuity": to_value(&continuity),
        "shift_identity": to_value(&shift),
    });
    Ok(Outcome::ok(summary, vec![table]))
}

fn remainder(sys: &SystemDefinition, cfg: &mut RunConfig) -> Result<Outcome, CliError> {
    let k = sys.dim();
    let eta = eta_param(cfg, k)?;
    let p = &mut cfg.params;
    let t_max = positive("t_max", *p.t_max.get_or_insert(DEFAULT_T_MAX))?;
    let t_step = positive("t_step", *p.t_step.get_or_insert(DEFAULT_T_STEP))?;
    let report = remainder_b(sys, &eta, &time_grid(t_max, t_step))?;

    let mut windows = Table::new(
        "windows",
        ["index", "lo", "hi", "count", "max_norm"].map(String::from).to_vec(),
    );
    for w in &report.windows {
        windows.push(vec![json!(w.index), json!(w.lo), json!(w.hi), json!(w.count), json!(w.max_norm)]);
    }
    let mut columns = vec!["t".to_string()];
    columns.extend(indexed("b", k));
    let mut samples = Table::new("samples", columns);
    for s in &report.samples {
        let mut row = vec![json!(s.t)];
        row.extend(nums(&s.b));
        samples.push(row);
    }
    let summary = json!({
        "max_norm": report.max_norm,
        "windows_bounded_by_1_05": report.windows_bounded_by(1.05),
        "samples": report.samples.len(),
    });
    Ok(Outcome::ok(summary, vec![windows, samples]))
}

fn singular_scan(sys: &SystemDefinition, cfg: &mut RunConfig) -> Result<Outcome, CliError> {
    let k = sys.dim();
    let p = &mut cfg.params;
    let grid = at_least("grid", *p.grid.get_or_insert(default_scan_grid(k)), 8)?;
    let threshold = *p.threshold.get_or_insert(DEFAULT_SCAN_THRESHOLD);
    if !(threshold >= 0.0 && threshold.is_finite()) {
        return Err(CliError::usage_at("params.threshold", format!("must be >= 0, got {threshold}")));
    }
    let report = det_scan(sys, grid, threshold)?;
    let closed = report.roots_in_closed_unit_box();

    let mut columns = indexed("cell", k);
    columns.extend(["det".to_string(), "reason".to_string()]);
    columns.extend(indexed("root", k));
    columns.push("root_det".into());
    let mut candidates = Table::new("candidates", columns);
    for c in &report.candidates {
        let mut row: Vec<Value> = nums(&c.cell_center).collect();
        row.push(json!(c.det_value));
        row.push(to_value(&c.reason));
        match &c.refined_root {
            Some(r) => row.extend(nums(r)),
            None => row.extend(std::iter::repeat_n(Value::Null, k)),
        }
        row.push(json!(c.refined_det));
        candidates.push(row);
    }
    let mut roots = Table::new("roots", indexed("root", k));
    for r in &closed {
        roots.push(nums(r).collect());
    }
    let summary = json!({
        "grid": grid,
        "threshold": threshold,
        "min_det": report.min_det,
        "min_det_at": report.min_det_at,
        "candidate_count": report.candidates.len(),
        "roots": report.roots,
        "roots_in_closed_unit_box": closed,
    });
    Ok(Outcome::ok(summary, vec![candidates, roots]))
}

fn inject_check(sys: &SystemDefinition, cfg: &mut RunConfig) -> Result<Outcome, CliError> {
    let seed = cfg.rng_seed;
    let p = &mut cfg.params;
    let pairs = at_least("pairs", *p.pairs.get_or_insert(DEFAULT_PAIRS), 1)?;
    let box_size = positive("box_size", *p.box_size.get_or_insert(DEFAULT_BOX_SIZE))?;
    let report = contraction_injectivity_check(sys, pairs, box_size, seed)?;

    let k = sys.dim();
    let mut columns = indexed("eta", k);
    columns.extend(indexed("p", k));
    columns.push("ratio".into());
    let mut worst = Table::new("worst_pair", columns);
    let mut row: Vec<Value> = nums(&report.worst_pair.0).collect();
    row.extend(nums(&report.worst_pair.1));
    row.push(json!(report.max_ratio));
    worst.push(row);
    let verdict = if report.criterion_satisfied && report.collisions == 0 {
        "criterion satisfied on samples"
    } else if report.criterion_satisfied {
        "criterion satisfied but psi collisions sampled"
    } else {
        "criterion not satisfied (no conclusion about injectivity)"
    };
    let summary = json!({ "report": to_value(&report), "verdict": verdict });
    Ok(Outcome::ok(summary, vec![worst]))
}

fn bounds(sys: &SystemDefinition, cfg: &mut RunConfig) -> Result<Outcome, CliError> {
    let k = sys.dim();
    let p = &mut cfg.params;
    let lower = vector("lower", p.lower.get_or_insert_with(|| vec![0.0; k]).clone(), k)?;
    let upper = vector("upper", p.upper.get_or_insert_with(|| vec![1.0; k]).clone(), k)?;
    let grid = at_least("grid", *p.grid.get_or_insert(DEFAULT_BOUNDS_GRID), 3)?;
    let threshold = *p.threshold.get_or_insert(DEFAULT_BOUNDS_THRESHOLD);
    if !(threshold >= 0.0 && threshold.is_finite()) {
        return Err(CliError::usage_at("params.threshold", format!("must be >= 0, got {threshold}")));
    }
    let report = boundary_extremal_check(sys, &lower, &upper, grid, threshold)?;

    let mut columns = vec!["bound".to_string()];
    columns.extend(indexed("x", k));
    let mut table = Table::new("bounds", columns);
    for (name, v) in [("upper", &report.upper_bound), ("lower", &report.lower_bound)] {
        if let Some(v) = v {
            let mut row = vec![json!(name)];
            row.extend(nums(v));
            table.push(row);
        }
    }
    Ok(Outcome::ok(to_value(&report), vec![table]))
}

fn embed(sys: &SystemDefinition, cfg: &mut RunConfig) -> Result<Outcome, CliError> {
    if sys.dim() != 1 {
        return Err(CliError::usage_at(
            "system",
            format!("embed needs a one-dimensional system, got k = {}", sys.dim()),
        ));
    }
    let eta = eta_param(cfg, 1)?;
    let p = &mut cfg.params;
    let t_max = positive("t_max", *p.t_max.get_or_insert(DEFAULT_EMBED_T_MAX))?;
    let t_step = positive("t_step", *p.t_step.get_or_insert(DEFAULT_T_STEP))?;
    let a = *p.torus_a.get_or_insert(DEFAULT_TORUS_A);
    let b = *p.torus_b.get_or_insert(DEFAULT_TORUS_B);
    if !(b > 0.0 && b < a) {
        return Err(CliError::usage_at("params.torus_b", format!("need 0 < b < a, got a={a}, b={b}")));
    }
    let flow = reconstruct_series(sys, &eta, &time_grid(t_max, t_step))?;
    let mut table = Table::new("path", ["t", "x", "u", "v", "w"].map(String::from).to_vec());
    for f in &flow {
        let x = f.value[0];
        let pt = embed_torus(f.t, x, a, b)?;
        table.push(vec![json!(f.t), json!(x), json!(pt.u), json!(pt.v), json!(pt.w)]);
    }
    let summary = json!({ "points": flow.len(), "a": a, "b": b });
    Ok(Outcome::ok(summary, vec![table]))
}
