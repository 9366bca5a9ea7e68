use proptest::prelude::*;

use torus_gvs::flow::reconstruct_phi;
use torus_gvs::iteration::{iterate_orbit, psi_n};
use torus_gvs::system::{make_constant_system, make_sine_system};
use torus_gvs::{IntegerVector, SystemDefinition, Vector};

fn dyadic() -> impl Strategy<Value = f64> {
    (-(1i64 << 32)..(1i64 << 32)).prop_map(|n| n as f64 / (1u64 << 30) as f64)
}

fn system(which: u8, r: f64) -> SystemDefinition {
    if which == 0 {
        make_sine_system(r).unwrap()
    } else {
        make_constant_system(&Vector::new(vec![r, -0.5 * r]).unwrap())
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn semigroup(which in 0u8..2, r in -0.1f64..0.1, x in dyadic(), y in dyadic(), m in 1usize..20, n in 1usize..20) {
        let sys = system(which, r);
        let eta = Vector::new(vec![x, y]).unwrap();
        let direct = psi_n(&sys, &eta, m + n).unwrap();
        let split = psi_n(&sys, &psi_n(&sys, &eta, m).unwrap(), n).unwrap();
        prop_assert!(direct.dist_inf(&split) <= 1e-9 * (1.0 + direct.norm_inf()));
    }

    #[test]
    fn exact_shift_equivariance(which in 0u8..2, r in -0.1f64..0.1, x in dyadic(), y in dyadic(),
                                q1 in -50i64..50, q2 in -50i64..50) {
        let sys = system(which, r);
        let eta = Vector::new(vec![x, y]).unwrap();
        let q = IntegerVector(vec![q1, q2]);
        let base = iterate_orbit(&sys, &eta, 200).unwrap();
        let moved = iterate_orbit(&sys, &eta.add_integer(&q), 200).unwrap();
        for n in 0..=200 {
            prop_assert_eq!(&moved.displacements[n], &base.displacements[n]);
            prop_assert!(moved.points[n].dist_inf(&base.points[n].add_integer(&q)) <= 1e-9);
        }
    }

    #[test]
    fn flow_shift_identity(which in 0u8..2, r in -0.1f64..0.1, x in -3.0f64..3.0, y in -3.0f64..3.0, t in 0.0f64..15.0) {
        let sys = system(which, r);
        let eta = Vector::new(vec![x, y]).unwrap();
        let ahead = reconstruct_phi(&sys, &eta, t + 1.0).unwrap().value;
        let image = sys.psi(&eta).unwrap();
        let via_image = reconstruct_phi(&sys, &image, t).unwrap().value;
        prop_assert!(ahead.dist_inf(&via_image) <= 1e-9);
    }
}
