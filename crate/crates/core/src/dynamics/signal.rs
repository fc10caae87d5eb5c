use nalgebra::DVector;

use super::{ControlSignal, Grid, Trajectory};

/// Right-continuous step function on `[breaks[0], ∞)` with a constant
/// tail after the last break.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstant {
    breaks: Vec<f64>,
    values: Vec<DVector<f64>>,
    tail: DVector<f64>,
}

impl PiecewiseConstant {
    /// `values[i]` holds on `[breaks[i], breaks[i+1])`.
    pub fn new(breaks: Vec<f64>, values: Vec<DVector<f64>>, tail: DVector<f64>) -> Self {
        assert_eq!(breaks.len(), values.len() + 1, "one value per interval");
        Self { breaks, values, tail }
    }

    /// Controls extended by their last value.
    pub fn from_controls(grid: &Grid, ctrl: &ControlSignal) -> Self {
        let tail = ctrl.values().last().cloned().unwrap_or_else(|| DVector::zeros(0));
        Self::new(grid.nodes().to_vec(), ctrl.values().to_vec(), tail)
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    fn index(&self, t: f64) -> Option<usize> {
        let m = self.values.len();
        if t >= self.breaks[m] {
            return None;
        }
        Some(self.breaks.partition_point(|&s| s <= t).saturating_sub(1).min(m - 1))
    }

    /// Value at `t` (the right limit).
    pub fn value_at(&self, t: f64) -> &DVector<f64> {
        match self.index(t) {
            Some(i) => &self.values[i],
            None => &self.tail,
        }
    }

    /// Limit from the left at `t`; at the first break this is the first value.
    pub fn left_limit(&self, t: f64) -> &DVector<f64> {
        let m = self.values.len();
        if t <= self.breaks[0] {
            return &self.values[0];
        }
        if t > self.breaks[m] {
            return &self.tail;
        }
        let i = self.breaks.partition_point(|&s| s < t);
        &self.values[i - 1]
    }

    /// `∫_a^b f(t) dt`.
    pub fn integral(&self, a: f64, b: f64) -> DVector<f64> {
        let mut acc = DVector::zeros(self.tail.len());
        let mut pieces = vec![a, b];
        pieces.extend(self.breaks.iter().copied().filter(|&s| s > a && s < b));
        pieces.sort_by(f64::total_cmp);
        for w in pieces.windows(2) {
            if w[1] > w[0] {
                acc += self.value_at(w[0]) * (w[1] - w[0]);
            }
        }
        acc
    }
}

/// Sorted union of breakpoints of `f` and `g` within `[a, b]`, including
/// both ends.
fn refinement(f: &PiecewiseConstant, g: &PiecewiseConstant, a: f64, b: f64) -> Vec<f64> {
    let mut pts = vec![a, b];
    pts.extend(
        f.breaks
            .iter()
            .chain(g.breaks.iter())
            .copied()
            .filter(|&s| s > a && s < b),
    );
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// `∫_a^b |f(t) - g(t)|^2 dt`, exact on the union refinement.
pub fn integrate_squared_difference(f: &PiecewiseConstant, g: &PiecewiseConstant, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    refinement(f, g, a, b)
        .windows(2)
        .map(|w| (f.value_at(w[0]) - g.value_at(w[0])).norm_squared() * (w[1] - w[0]))
        .sum()
}

/// Distance of a candidate from a reference process:
/// `∫_0^T̄ (|ẋ_e - x̄̇_e|^2 + |u - ū|^2) dt + (T̄ - T)^2`.
///
/// Extended arcs are frozen after their horizon (zero velocity) and
/// extended controls hold their last value.
pub fn localization_distance(
    candidate: (&Trajectory, &ControlSignal),
    reference: (&Trajectory, &ControlSignal),
) -> f64 {
    let (x, u) = candidate;
    let (xr, ur) = reference;
    let t_bar = xr.final_time();
    let dv = integrate_squared_difference(&x.velocity_signal(), &xr.velocity_signal(), 0.0, t_bar);
    let du = integrate_squared_difference(
        &PiecewiseConstant::from_controls(&x.grid, u),
        &PiecewiseConstant::from_controls(&xr.grid, ur),
        0.0,
        t_bar,
    );
    dv + du + (t_bar - x.final_time()).powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    fn straight(t: f64, k: usize, v: &[f64]) -> Trajectory {
        let grid = Grid::uniform(t, k).unwrap();
        Trajectory::from_velocities(grid, DVector::zeros(v.len()), vec![dv(v); k], vec![dv(&[0.0]); k]).unwrap()
    }

    #[test]
    fn step_function_queries() {
        let f = PiecewiseConstant::new(vec![0.0, 1.0, 3.0], vec![dv(&[1.0]), dv(&[2.0])], dv(&[5.0]));
        assert_eq!(f.value_at(0.0)[0], 1.0);
        assert_eq!(f.value_at(1.0)[0], 2.0);
        assert_eq!(f.left_limit(1.0)[0], 1.0);
        assert_eq!(f.left_limit(3.0)[0], 2.0);
        assert_eq!(f.value_at(3.0)[0], 5.0);
        assert_relative_eq!(f.integral(0.5, 4.0)[0], 0.5 + 4.0 + 5.0);
    }

    #[test]
    fn distance_to_self_is_zero() {
        let x = straight(2.0, 7, &[1.0, -1.0]);
        let u = ControlSignal::constant(dv(&[0.3]), 7);
        assert_eq!(localization_distance((&x, &u), (&x, &u)), 0.0);
    }

    #[test]
    fn time_shift_only() {
        // identical arcs; only the time penalty contributes
        let xr = straight(2.0, 4, &[0.0, 0.0]);
        let x = straight(2.5, 5, &[0.0, 0.0]);
        let u = ControlSignal::constant(dv(&[1.0]), 5);
        let ur = ControlSignal::constant(dv(&[1.0]), 4);
        assert_relative_eq!(localization_distance((&x, &u), (&xr, &ur)), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn constant_velocity_offset() {
        let xr = straight(3.0, 6, &[1.0, 0.0]);
        let x = straight(3.0, 4, &[1.0, 0.5]);
        let u = ControlSignal::constant(dv(&[0.0]), 4);
        let ur = ControlSignal::constant(dv(&[0.0]), 6);
        assert_relative_eq!(localization_distance((&x, &u), (&xr, &ur)), 3.0 * 0.25, epsilon = 1e-14);
    }
}
