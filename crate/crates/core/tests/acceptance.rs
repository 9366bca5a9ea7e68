//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

use torus_gvs::flow::{
    check_shift_identity, continuity_probe, interpolant_excursion, mean_motion, mean_motion_sequence,
    reconstruct_phi,
};
use torus_gvs::iteration::{
    center_set_distance, check_q_periodicity, default_epsilon, detect_periodic, estimate_rotation_set,
    iterate_orbit, limit_set_estimate, psi_n, rotation_sequence, RotationSource,
};
use torus_gvs::jacobian::{chain_rule_discrepancy, contraction_injectivity_check, det_scan};
use torus_gvs::system::{estimate_sup_a, make_constant_system, make_sine_system};
use torus_gvs::vecspace::{extremal_bounds, maximal_elements, minimal_elements};
use torus_gvs::{IntegerVector, SystemDefinition, Vector};

type Check = Result<String, String>;

fn v(x: &[f64]) -> Vector {
    Vector::from_slice(x).unwrap()
}

fn random_point(rng: &mut ChaCha8Rng, k: usize, lo: f64, hi: f64) -> Vector {
    Vector::new((0..k).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Uniform on the `2^-40` lattice in `[0, 1)^k`, so `eta + q` is exact.
fn random_dyadic(rng: &mut ChaCha8Rng, k: usize) -> Vector {
    let scale = (1u64 << 40) as f64;
    Vector::new((0..k).map(|_| rng.gen_range(0..1u64 << 40) as f64 / scale).collect()).unwrap()
}

fn random_shift(rng: &mut ChaCha8Rng, k: usize) -> IntegerVector {
    IntegerVector((0..k).map(|_| rng.gen_range(-3..=3)).collect())
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn test_systems() -> Vec<SystemDefinition> {
    vec![
        make_constant_system(&v(&[1.0 / 3.0, -0.5])),
        make_sine_system(0.1).unwrap(),
    ]
}

fn constant_rotation() -> Check {
    let g = v(&[1.0 / 3.0, -0.5]);
    let sys = make_constant_system(&g);
    let eta = v(&[0.25, 0.75]);
    let n = 1000;
    let start = Instant::now();
    let est = estimate_rotation_set(&sys, &eta, n, 0.5, default_epsilon(n), RotationSource::Points)
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    ensure(est.clusters.len() == 1, format!("{} clusters", est.clusters.len()))?;
    let err = est.clusters[0].center.dist_inf(&g);
    let bound = 2.0 * eta.norm_inf() / n as f64 + 1e-9;
    ensure(err <= bound, format!("center error {err:e} > {bound:e}"))?;
    ensure(elapsed < 1.0, format!("took {elapsed:.3} s"))?;
    Ok(format!("1 cluster, center error {err:.3e} <= {bound:.3e}, {:.1} ms", elapsed * 1e3))
}

fn rational_periodic() -> Check {
    let sys = make_constant_system(&v(&[1.0 / 3.0, 0.5]));
    let zero = Vector::zeros(2);
    let hits = detect_periodic(&sys, &[zero.clone()], 10, 1e-9).map_err(|e| e.to_string())?;
    let hit = hits.first().ok_or("no periodic point found")?;
    ensure(hit.m == 6, format!("m = {}", hit.m))?;
    ensure(hit.q.as_slice() == [2, 3], format!("q = {:?}", hit.q.as_slice()))?;
    ensure(hit.rho.as_slice() == [1.0 / 3.0, 0.5], format!("rho = {}", hit.rho))?;
    ensure(hit.residual <= 1e-12, format!("residual {:e}", hit.residual))?;
    let p12 = psi_n(&sys, &zero, 12).map_err(|e| e.to_string())?;
    let d12 = p12.dist_inf(&v(&[4.0, 6.0]));
    ensure(d12 <= 1e-12, format!("psi_12(0) = {p12}"))?;
    Ok(format!("m=6 q=[2,3] residual {:.1e}, |psi_12(0)-(4,6)| = {d12:.1e}", hit.residual))
}

fn singular_scan() -> Check {
    let start = Instant::now();
    let critical = make_sine_system(1.0 / (2.0 * PI)).unwrap();
    let report = det_scan(&critical, 256, 1e-2).map_err(|e| e.to_string())?;
    let roots = report.roots_in_closed_unit_box();
    for want in [[0.0, 0.5], [0.5, 0.0], [0.5, 1.0], [1.0, 0.5]] {
        let w = v(&want);
        ensure(
            roots.iter().any(|r| r.dist_inf(&w) <= 1e-6),
            format!("no root within 1e-6 of {w}"),
        )?;
    }
    let mild = make_sine_system(0.1).unwrap();
    let clean = det_scan(&mild, 256, 1e-2).map_err(|e| e.to_string())?;
    ensure(clean.candidates.is_empty(), format!("{} candidates at r=0.1", clean.candidates.len()))?;
    let floor = 1.0 - (0.2 * PI).powi(2) - 1e-9;
    ensure(clean.min_det >= floor, format!("min det {} < {floor}", clean.min_det))?;
    let elapsed = start.elapsed().as_secs_f64();
    ensure(elapsed < 10.0, format!("took {elapsed:.2} s"))?;
    Ok(format!(
        "{} roots in [0,1]^2 incl. the 4 expected; r=0.1 min det {:.4}; {:.2} s",
        roots.len(),
        clean.min_det,
        elapsed
    ))
}

fn chain_rule() -> Check {
    let sys = make_sine_system(0.1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let eta = random_point(&mut rng, 2, 0.0, 1.0);
        for n in [2, 3, 5] {
            worst = worst.max(chain_rule_discrepancy(&sys, &eta, n, 1e-5).map_err(|e| e.to_string())?);
        }
    }
    ensure(worst <= 1e-5, format!("max discrepancy {worst:e}"))?;
    Ok(format!("max discrepancy {worst:.2e} over 60 cases"))
}

fn injectivity() -> Check {
    let mild = contraction_injectivity_check(&make_sine_system(0.1).unwrap(), 10_000, 2.0, 42)
        .map_err(|e| e.to_string())?;
    ensure(mild.max_ratio < 0.64, format!("r=0.1 max ratio {}", mild.max_ratio))?;
    ensure(mild.collisions == 0, format!("{} collisions", mild.collisions))?;
    let strong = contraction_injectivity_check(&make_sine_system(0.5).unwrap(), 10_000, 2.0, 42)
        .map_err(|e| e.to_string())?;
    ensure(strong.pairs_above_one > 0, "r=0.5 never exceeds ratio 1")?;
    Ok(format!(
        "r=0.1 max ratio {:.4}; r=0.5 {} pairs above 1 (max {:.3})",
        mild.max_ratio, strong.pairs_above_one, strong.max_ratio
    ))
}

fn flow_reconstruction() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut shift = 0.0_f64;
    let mut min_shrink = f64::INFINITY;
    let mut agree = 0.0_f64;
    for sys in test_systems() {
        for _ in 0..100 {
            let eta = random_point(&mut rng, 2, -2.0, 2.0);
            let t = rng.gen_range(0.0..20.0);
            let q = random_shift(&mut rng, 2);
            let r = check_shift_identity(&sys, &eta, &[t], &q, 1e-9).map_err(|e| e.to_string())?;
            shift = shift.max(r.max_shift_residual).max(r.max_equivariance_residual);
        }
        let eta = random_point(&mut rng, 2, 0.0, 1.0);
        let c = continuity_probe(&sys, &eta, 10, 1e-4).map_err(|e| e.to_string())?;
        ensure(c.continuous, format!("{} not continuous: {:?}", sys.label(), c.min_shrink_ratio))?;
        if let Some(r) = c.min_shrink_ratio {
            min_shrink = min_shrink.min(r);
        }
        for n in 1..=50 {
            let phi = reconstruct_phi(&sys, &eta, n as f64).map_err(|e| e.to_string())?.value;
            let psi = psi_n(&sys, &eta, n).map_err(|e| e.to_string())?;
            let d = phi.dist_inf(&psi);
            ensure(d <= 1e-9 * n as f64, format!("{} phi({n}) off by {d:e}", sys.label()))?;
            agree = agree.max(d);
        }
    }
    ensure(shift <= 1e-9, format!("shift residual {shift:e}"))?;
    Ok(format!(
        "shift residual {shift:.1e}, min shrink {min_shrink:.2}, |phi(n)-psi_n| <= {agree:.1e}"
    ))
}

fn equivariance() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0_f64;
    let mut worst_dist = 0.0_f64;
    for sys in test_systems() {
        for _ in 0..10 {
            let eta = random_dyadic(&mut rng, 2);
            let q = random_shift(&mut rng, 2);
            let base = iterate_orbit(&sys, &eta, 100).map_err(|e| e.to_string())?;
            let moved = iterate_orbit(&sys, &eta.add_integer(&q), 100).map_err(|e| e.to_string())?;
            for n in 0..=100 {
                worst = worst
                    .max(moved.points[n].dist_inf(&base.points[n].add_integer(&q)))
                    .max(moved.displacements[n].dist_inf(&base.displacements[n]));
            }
            let n = 1000;
            let eps = default_epsilon(n);
            let rep = check_q_periodicity(&sys, &eta, &q, n, eps, 0.5).map_err(|e| e.to_string())?;
            ensure(rep.passed, format!("{} rotation sets {} apart", sys.label(), rep.distance))?;
            worst_dist = worst_dist.max(rep.distance);
        }
    }
    ensure(worst <= 1e-9, format!("equivariance residual {worst:e}"))?;
    Ok(format!("residual {worst:.1e}, rotation-set distance {worst_dist:.1e}"))
}

fn sine_rotation_bound() -> Check {
    let r = 0.1;
    let sys = make_sine_system(r).unwrap();
    let eta = v(&[0.2, 0.7]);
    let n = 10_000;
    let orbit = iterate_orbit(&sys, &eta, n).map_err(|e| e.to_string())?;
    let seq = rotation_sequence(&orbit);
    let worst = seq.from_displacements.iter().map(Vector::norm_inf).fold(0.0, f64::max);
    ensure(worst <= r + 1e-9, format!("|a_n/n| reached {worst}"))?;
    let eps = default_epsilon(n);
    let est = limit_set_estimate(&seq.from_displacements, 0.5, eps).map_err(|e| e.to_string())?;
    let far = est.clusters.iter().map(|c| c.center.norm_inf()).fold(0.0, f64::max);
    ensure(far <= r + eps, format!("center norm {far}"))?;
    Ok(format!("max |a_n/n| = {worst:.4}, max center norm {far:.4}"))
}

fn brute_maximal(set: &[Vector]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for x in set {
        let dominated = set
            .iter()
            .any(|y| y != x && y.iter().zip(x.iter()).all(|(a, b)| a >= b));
        if !dominated && !out.iter().any(|o| o.as_slice() == x.as_slice()) {
            out.push(x.as_slice().to_vec());
        }
    }
    out
}

fn brute_minimal(set: &[Vector]) -> Vec<Vec<f64>> {
    let neg: Vec<Vector> = set.iter().map(|x| -x).collect();
    brute_maximal(&neg)
        .into_iter()
        .map(|x| x.into_iter().map(|a| -a).collect())
        .collect()
}

fn sorted(mut rows: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
    rows
}

fn semi_order_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for trial in 0..1000 {
        let k = if trial % 2 == 0 { 2 } else { 3 };
        let size = rng.gen_range(1..=12);
        // a coarse lattice makes ties and comparable pairs common
        let set: Vec<Vector> = (0..size)
            .map(|_| Vector::new((0..k).map(|_| rng.gen_range(0..5) as f64 * 0.5).collect()).unwrap())
            .collect();
        let to_rows = |xs: Vec<Vector>| xs.into_iter().map(|x| x.into_inner()).collect::<Vec<_>>();
        let max = to_rows(maximal_elements(&set).map_err(|e| e.to_string())?);
        let min = to_rows(minimal_elements(&set).map_err(|e| e.to_string())?);
        ensure(sorted(max) == sorted(brute_maximal(&set)), format!("maximal mismatch in trial {trial}"))?;
        ensure(sorted(min) == sorted(brute_minimal(&set)), format!("minimal mismatch in trial {trial}"))?;
        let (upper, lower) = extremal_bounds(&set).map_err(|e| e.to_string())?;
        for j in 0..k {
            let hi = set.iter().map(|x| x[j]).fold(f64::NEG_INFINITY, f64::max);
            let lo = set.iter().map(|x| x[j]).fold(f64::INFINITY, f64::min);
            ensure(upper[j] == hi && lower[j] == lo, format!("bounds mismatch in trial {trial}"))?;
        }
    }
    Ok("1000 random sets agree with brute force".into())
}

fn continuous_rotation() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst_slack = f64::INFINITY;
    let mut worst_dist = 0.0_f64;
    for sys in test_systems() {
        let m = estimate_sup_a(&sys, 64).map_err(|e| e.to_string())?.bound;
        let b = interpolant_excursion(&sys, 64, 32).map_err(|e| e.to_string())?;
        let eta = random_point(&mut rng, 2, -1.0, 1.0);
        for t in [100.0_f64, 500.0, 1000.0, 100.37, 500.5, 999.9] {
            let n = t.floor() as usize;
            let f = mean_motion(&sys, &eta, t).map_err(|e| e.to_string())?;
            let discrete = psi_n(&sys, &eta, n).map_err(|e| e.to_string())?.scale(1.0 / n as f64);
            let gap = f.dist_inf(&discrete);
            let bound = (m + eta.norm_inf() + b) / n as f64;
            ensure(gap <= bound, format!("{} t={t}: gap {gap:e} > {bound:e}", sys.label()))?;
            worst_slack = worst_slack.min(bound - gap);
        }
        let n = 1000;
        let eps = default_epsilon(n);
        let disc = estimate_rotation_set(&sys, &eta, n, 0.5, eps, RotationSource::Points).map_err(|e| e.to_string())?;
        let cont_seq = mean_motion_sequence(&sys, &eta, n, 0.5).map_err(|e| e.to_string())?;
        let cont = limit_set_estimate(&cont_seq, 0.5, eps).map_err(|e| e.to_string())?;
        let d = center_set_distance(&disc.centers(), &cont.centers());
        ensure(d <= 2.0 * eps, format!("{}: rotation sets {d} apart", sys.label()))?;
        worst_dist = worst_dist.max(d);
    }
    Ok(format!("bound slack >= {worst_slack:.2e}, set distance {worst_dist:.1e}"))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("constant system rotation vector", constant_rotation),
        ("rational periodic point", rational_periodic),
        ("singular-point scan", singular_scan),
        ("chain rule", chain_rule),
        ("injectivity criterion", injectivity),
        ("flow reconstruction", flow_reconstruction),
        ("integer-shift equivariance", equivariance),
        ("sine rotation bound", sine_rotation_bound),
        ("semi-order extremal elements", semi_order_oracle),
        ("continuous rotation vector", continuous_rotation),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failures += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
