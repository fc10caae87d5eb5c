#![allow(dead_code)]

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sweep_ocp::geometry::{HalfSpace, Polyhedron};
use sweep_ocp::marine::{MarineScenario, VehicleConfig};
use sweep_ocp::ocp::ControlBox;

pub fn dv(v: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(v)
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-scale..scale))
}

/// Random polyhedron in `R^n` with a known point `center` strictly inside.
pub fn random_polyhedron(rng: &mut ChaCha8Rng, n: usize, faces: usize) -> (Polyhedron, DVector<f64>) {
    let center = random_vector(rng, n, 2.0);
    let hs = (0..faces)
        .map(|_| {
            let mut a = random_vector(rng, n, 1.0);
            if a.norm() < 1e-3 {
                a[0] = 1.0;
            }
            let margin = rng.gen_range(0.1..2.0);
            HalfSpace::new(a.clone(), a.dot(&center) + margin).unwrap()
        })
        .collect();
    (Polyhedron::new(hs).unwrap(), center)
}

/// A feasible point obtained by shrinking a random offset toward `center`.
pub fn feasible_point(rng: &mut ChaCha8Rng, p: &Polyhedron, center: &DVector<f64>) -> DVector<f64> {
    let dir = random_vector(rng, p.dim(), 3.0);
    let mut s = 1.0;
    loop {
        let y = center + &dir * s;
        if p.max_violation(&y) <= 0.0 {
            return y;
        }
        s *= 0.5;
    }
}

/// Vehicles on a line with random gaps, radii and headings.
pub fn random_marine(rng: &mut ChaCha8Rng, vehicles: usize) -> MarineScenario {
    let radii: Vec<f64> = (0..vehicles).map(|_| rng.gen_range(0.5..3.0)).collect();
    let mut positions = Vec::with_capacity(vehicles);
    let mut x = rng.gen_range(-20.0..-10.0);
    for i in 0..vehicles {
        if i > 0 {
            x += 2.0 * (radii[i - 1] + radii[i]) + rng.gen_range(0.5..6.0);
        }
        positions.push([x, x]);
    }
    let heading = rng.gen_range(10.0f64..80.0).to_radians();
    let directions = vec![heading; vehicles];
    let speeds: Vec<f64> = (0..vehicles).map(|_| rng.gen_range(0.5..1.5)).collect();
    let config = VehicleConfig::new(radii, speeds, directions, positions).unwrap();
    MarineScenario::new(config, ControlBox::uniform(vehicles, -2.0, 2.0).unwrap(), [0.0, 0.0]).unwrap()
}
