//! Property tests over random meshes and states.

use dgbp::basis::{project_to_dg, DGState, M, R, T, X};
use dgbp::bands::EnergyBand;
use dgbp::collisions::{density_rate, project_band, CollisionOperator, ScatteringKernel};
use dgbp::mesh::PhaseSpaceMesh;
use dgbp::moments::MomentSet;
use dgbp::poisson::{DopingProfile, PoissonSolver};
use dgbp::scaling::{derive_scaling, MaterialParams, ReferenceScales, ScalingGroups};
use proptest::prelude::*;

fn scaling() -> ScalingGroups {
    derive_scaling(&MaterialParams::default(), &ReferenceScales::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn projection_reproduces_linear_functions(
        c in prop::array::uniform4(-3.0f64..3.0),
        nx in 1usize..5, nr in 1usize..5, nmu in 1usize..5,
        len in 0.1f64..4.0, r_max in 0.5f64..40.0,
    ) {
        let mesh = PhaseSpaceMesh::uniform(nx, nr, nmu, len, r_max).unwrap();
        let w = project_to_dg(&mesh, |x, r, mu| c[0] + c[1] * r + c[2] * mu + c[3] * x);
        for i in 0..nx {
            for k in 0..nr {
                for m in 0..nmu {
                    let t = c[0] + c[1] * mesh.r_center(k) + c[2] * mesh.mu_center(m) + c[3] * mesh.x_center(i);
                    let tol = 1e-12 * (1.0 + t.abs() + r_max * c[1].abs());
                    prop_assert!((w.get(i, k, m, T) - t).abs() < tol);
                    prop_assert!((w.get(i, k, m, R) - c[1] * mesh.dr(k) / 2.0).abs() < tol);
                    prop_assert!((w.get(i, k, m, M) - c[2] * mesh.dmu(m) / 2.0).abs() < tol);
                    prop_assert!((w.get(i, k, m, X) - c[3] * mesh.dx(i) / 2.0).abs() < tol);
                }
            }
        }
    }

    #[test]
    fn collisions_conserve_density_on_random_meshes(
        nr in 2usize..10, nmu in 1usize..5, r_max in 4.0f64..48.0,
        kane in any::<bool>(),
        coeffs in prop::collection::vec(-1.0f64..1.0, 2 * 9 * 4 * 4),
    ) {
        let s = scaling();
        let mesh = PhaseSpaceMesh::uniform(2, nr, nmu, 1.0, r_max).unwrap();
        let band = if kane { EnergyBand::kane(s.kane_alpha).unwrap() } else { EnergyBand::Parabolic };
        let op = CollisionOperator::build(
            &ScatteringKernel::from_scaling(&s),
            &project_band(&band, &mesh).unwrap(),
            &mesh,
        )
        .unwrap();
        let mut w = DGState::zeros(&mesh);
        for (v, c) in w.as_mut_slice().iter_mut().zip(coeffs.iter().cycle()) {
            *v = *c;
        }
        let rate = op.apply(&w).unwrap();
        let scale: f64 = rate.as_slice().iter().map(|v| v.abs()).sum::<f64>();
        prop_assert!(density_rate(&mesh, &rate).abs() <= 1e-12 * scale.max(1e-300));
    }

    #[test]
    fn poisson_field_is_affine_in_the_bias(
        v in -3.0f64..3.0,
        n in 1e-4f64..1e-2,
        src in prop::collection::vec(-1e-3f64..1e-3, 16),
    ) {
        let s = scaling();
        let mesh = PhaseSpaceMesh::uniform(16, 1, 1, 1.0, 1.0).unwrap();
        let p = PoissonSolver::new(&mesh, DopingProfile::uniform(n).unwrap(), s.c_p, s.rel_permittivity, s.c_v).unwrap();
        let rho: Vec<[f64; 2]> = src.iter().map(|d| [n + d, 0.0]).collect();
        let a = p.solve(&rho, v);
        let b = p.solve(&rho, 0.0);
        let scale = a.e.iter().chain(&b.e).map(|e| e[0].abs()).fold(s.c_v * v.abs(), f64::max);
        for (ea, eb) in a.e.iter().zip(&b.e) {
            prop_assert!((ea[0] - eb[0] + s.c_v * v).abs() <= 1e-12 * scale);
            prop_assert!((ea[1] - eb[1]).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn moment_csv_round_trips_bitwise(
        rows in prop::collection::vec(prop::array::uniform7(any::<f64>().prop_filter("finite", |v| v.is_finite())), 0..20),
    ) {
        let col = |j: usize| rows.iter().map(|r| r[j]).collect::<Vec<f64>>();
        let m = MomentSet {
            x: col(0),
            rho: col(1),
            velocity: col(2),
            energy_ev: col(3),
            current: col(4),
            e_field: col(5),
            potential: col(6),
            degenerate: Vec::new(),
        };
        let back = MomentSet::from_csv(&m.to_csv()).unwrap();
        for (a, b) in [(&m.x, &back.x), (&m.rho, &back.rho), (&m.potential, &back.potential), (&m.current, &back.current)] {
            prop_assert!(a.iter().zip(b).all(|(p, q)| p.to_bits() == q.to_bits() || (*p == 0.0 && *q == 0.0)));
        }
        prop_assert_eq!(back.len(), rows.len());
    }
}
