mod common;

use common::{dv, feasible_point, random_polyhedron, random_vector};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sweep_ocp::geometry::{nnls, HalfSpace, Polyhedron, ACTIVE_TOL};

fn half_space_projection(a: &DVector<f64>, c: f64, v: &DVector<f64>) -> DVector<f64> {
    let excess = a.dot(v) - c;
    if excess <= 0.0 {
        v.clone()
    } else {
        v - a * (excess / a.norm_squared())
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn projection_is_idempotent_and_variational(seed in any::<u64>(), n in 1usize..6, faces in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, center) = random_polyhedron(&mut rng, n, faces);
        let v = random_vector(&mut rng, n, 10.0);
        let z = p.project(&v).unwrap().point;
        prop_assert!(p.max_violation(&z) <= 1e-9);
        let zz = p.project(&z).unwrap().point;
        prop_assert!((&zz - &z).amax() <= 1e-12);
        for _ in 0..5 {
            let y = feasible_point(&mut rng, &p, &center);
            prop_assert!((&v - &z).dot(&(&y - &z)) <= 1e-9 * (1.0 + v.norm() * y.norm()));
        }
    }

    #[test]
    fn single_face_matches_closed_form(seed in any::<u64>(), n in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_vector(&mut rng, n, 2.0) + DVector::from_element(n, 0.01);
        let c = rng.gen_range(-3.0..3.0);
        let p = Polyhedron::new(vec![HalfSpace::new(a.clone(), c).unwrap()]).unwrap();
        let v = random_vector(&mut rng, n, 10.0);
        let z = p.project(&v).unwrap().point;
        prop_assert!((&z - half_space_projection(&a, c, &v)).amax() <= 1e-12 * (1.0 + v.amax()));
    }

    #[test]
    fn projection_residual_lies_in_normal_cone(seed in any::<u64>(), n in 1usize..5, faces in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, _) = random_polyhedron(&mut rng, n, faces);
        let v = random_vector(&mut rng, n, 10.0);
        let proj = p.project(&v).unwrap();
        let active = p.near_faces(&proj.point, ACTIVE_TOL);
        let dec = p.normal_cone_decompose(&active, &(&v - &proj.point));
        prop_assert!(dec.residual <= 1e-7 * (1.0 + v.norm()));
        prop_assert!(dec.coefficients.iter().all(|&c| c >= 0.0));
    }

    #[test]
    fn nnls_is_nonnegative_and_stationary(seed in any::<u64>(), rows in 1usize..6, cols in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = nalgebra::DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0));
        let b = random_vector(&mut rng, rows, 2.0);
        let sol = nnls(&a, &b);
        prop_assert!(sol.x.iter().all(|&x| x >= 0.0));
        // KKT: gradient nonnegative, zero where x > 0
        let grad = a.transpose() * (&a * &sol.x - &b);
        for j in 0..cols {
            prop_assert!(grad[j] >= -1e-9);
            if sol.x[j] > 1e-9 {
                prop_assert!(grad[j].abs() <= 1e-8);
            }
        }
    }
}

#[test]
fn interior_points_are_fixed() {
    let p = Polyhedron::new(vec![
        HalfSpace::new(dv(&[1.0, 0.0]), 1.0).unwrap(),
        HalfSpace::new(dv(&[0.0, 1.0]), 1.0).unwrap(),
    ])
    .unwrap();
    let v = dv(&[0.25, -3.0]);
    assert_eq!(p.project(&v).unwrap().point, v);
}

#[test]
fn corner_projection() {
    let p = Polyhedron::new(vec![
        HalfSpace::new(dv(&[1.0, 0.0]), 1.0).unwrap(),
        HalfSpace::new(dv(&[0.0, 1.0]), 1.0).unwrap(),
    ])
    .unwrap();
    let proj = p.project(&dv(&[3.0, 2.0])).unwrap();
    assert!((proj.point - dv(&[1.0, 1.0])).amax() < 1e-12);
    assert!((proj.decomposition.coefficients - dv(&[2.0, 1.0])).amax() < 1e-9);
}
