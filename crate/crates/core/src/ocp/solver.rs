//! Derivative-free minimization of `J_k`. States are always regenerated
//! from the controls and the final time by forward simulation, so every
//! candidate satisfies the dynamics by construction.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use super::{feasibility_report, DiscreteProblem, DiscreteSolution, OcpError, FEASIBILITY_REPORT_TOL};
use crate::dynamics::ControlSignal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Parametrization {
    /// One control per grid step.
    #[default]
    PiecewiseConstant,
    /// A single control held over the whole horizon.
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveOptions {
    pub parametrization: Parametrization,
    pub max_evaluations: usize,
    pub control_step: f64,
    pub time_step: f64,
    /// Search stops once the step scale times the largest step falls below this.
    pub min_step: f64,
    pub shrink: f64,
    /// Smallest admissible final time.
    pub min_time: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            parametrization: Parametrization::PiecewiseConstant,
            max_evaluations: 20_000,
            control_step: 0.5,
            time_step: 2.0,
            min_step: 1e-7,
            shrink: 0.5,
            min_time: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    BudgetExhausted,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub solution: DiscreteSolution,
    pub status: SolveStatus,
    /// Cost after each accepted move, starting with the initial cost.
    pub cost_trace: Vec<f64>,
    pub evaluations: usize,
}

/// Decision vector: free control coordinates followed by the final time.
struct Layout {
    k: usize,
    d: usize,
    constant: bool,
    fixed_first: Option<DVector<f64>>,
}

impl Layout {
    fn new(prob: &DiscreteProblem, parametrization: Parametrization) -> Self {
        Self {
            k: prob.k,
            d: prob.control_box.dim(),
            constant: parametrization == Parametrization::Constant,
            fixed_first: prob.reference.as_ref().map(|r| r.initial_control().clone()),
        }
    }

    /// Number of control blocks that are searched over.
    fn free_blocks(&self) -> usize {
        match (self.constant, self.fixed_first.is_some()) {
            (true, true) => 0,
            (true, false) => 1,
            (false, true) => self.k - 1,
            (false, false) => self.k,
        }
    }

    fn len(&self) -> usize {
        self.free_blocks() * self.d + 1
    }

    fn encode(&self, controls: &ControlSignal, t: f64) -> Vec<f64> {
        let skip = usize::from(self.fixed_first.is_some() && !self.constant);
        let mut z: Vec<f64> = controls
            .values()
            .iter()
            .skip(skip)
            .take(self.free_blocks())
            .flat_map(|u| u.iter().copied().collect::<Vec<_>>())
            .collect();
        z.push(t);
        z
    }

    fn decode(&self, z: &[f64]) -> (ControlSignal, f64) {
        let t = z[z.len() - 1];
        let block = |b: usize| DVector::from_column_slice(&z[b * self.d..(b + 1) * self.d]);
        let values = match (self.constant, &self.fixed_first) {
            (true, Some(u0)) => vec![u0.clone(); self.k],
            (true, None) => vec![block(0); self.k],
            (false, Some(u0)) => std::iter::once(u0.clone()).chain((0..self.k - 1).map(block)).collect(),
            (false, None) => (0..self.k).map(block).collect(),
        };
        (ControlSignal::new(values).expect("nonempty controls"), t)
    }

    fn is_time(&self, c: usize) -> bool {
        c + 1 == self.len()
    }
}

struct Evaluator<'a> {
    prob: &'a DiscreteProblem,
    layout: Layout,
    time_bounds: (f64, f64),
}

impl Evaluator<'_> {
    fn project(&self, z: &mut [f64]) {
        let d = self.layout.d;
        let n = z.len();
        for c in 0..n - 1 {
            let l = c % d;
            z[c] = z[c].clamp(self.prob.control_box.lower()[l], self.prob.control_box.upper()[l]);
        }
        z[n - 1] = z[n - 1].clamp(self.time_bounds.0, self.time_bounds.1);
    }

    /// Cost of an admissible candidate, `None` when infeasible.
    fn evaluate(&self, z: &[f64]) -> Option<DiscreteSolution> {
        let (controls, t) = self.layout.decode(z);
        let sol = self.prob.evaluate(controls, t).ok()?;
        if self.prob.reference.is_some() {
            let rep = feasibility_report(&sol.trajectory, &sol.controls, self.prob, FEASIBILITY_REPORT_TOL);
            if !rep.pass {
                return None;
            }
        }
        sol.cost_value.is_finite().then_some(sol)
    }
}

fn time_bounds(prob: &DiscreteProblem, min_time: f64, max_time: f64) -> (f64, f64) {
    match prob.t_bar() {
        Some(tb) => ((tb - prob.epsilon).max(min_time), (tb + prob.epsilon).min(max_time)),
        None => (min_time, max_time),
    }
}

/// Evaluates all candidates concurrently and returns the best one by
/// `(cost, index)`, independent of scheduling.
fn best_of(ev: &Evaluator, candidates: &[Vec<f64>]) -> Option<(usize, DiscreteSolution)> {
    let results: Vec<Option<DiscreteSolution>> = candidates.par_iter().map(|z| ev.evaluate(z)).collect();
    let mut best: Option<(usize, DiscreteSolution)> = None;
    for (i, r) in results.into_iter().enumerate() {
        if let Some(sol) = r {
            if best.as_ref().map_or(true, |(_, b)| sol.cost_value < b.cost_value) {
                best = Some((i, sol));
            }
        }
    }
    best
}

fn initial_point(ev: &Evaluator, init: &DiscreteSolution) -> Result<(Vec<f64>, DiscreteSolution), OcpError> {
    let mut z = ev.layout.encode(&init.controls, init.final_time());
    ev.project(&mut z);
    let sol = ev.evaluate(&z).ok_or_else(|| {
        OcpError::NoFeasiblePoint("the initial guess is infeasible after clamping controls and time".into())
    })?;
    Ok((z, sol))
}

/// Compass search over the controls and the final time, accepting the
/// best improving poll point of each sweep and halving the step after an
/// unsuccessful sweep.
pub fn solve(prob: &DiscreteProblem, init: &DiscreteSolution, options: &SolveOptions) -> Result<SolveOutcome, OcpError> {
    if init.controls.len() != prob.k {
        return Err(OcpError::Invalid(format!(
            "initial guess has {} controls, problem has k = {}",
            init.controls.len(),
            prob.k
        )));
    }
    let ev = Evaluator {
        prob,
        layout: Layout::new(prob, options.parametrization),
        time_bounds: time_bounds(prob, options.min_time, f64::INFINITY),
    };
    let (mut z, mut current) = initial_point(&ev, init)?;
    let mut evaluations = 1;
    let mut trace = vec![current.cost_value];
    let mut scale = 1.0;
    let largest = options.control_step.max(options.time_step);
    loop {
        if scale * largest < options.min_step {
            return Ok(SolveOutcome {
                solution: current,
                status: SolveStatus::Converged,
                cost_trace: trace,
                evaluations,
            });
        }
        let mut candidates = Vec::new();
        for c in 0..z.len() {
            let step = scale
                * if ev.layout.is_time(c) {
                    options.time_step
                } else {
                    options.control_step
                };
            for sign in [1.0, -1.0] {
                let mut y = z.clone();
                y[c] += sign * step;
                ev.project(&mut y);
                if y[c] != z[c] {
                    candidates.push(y);
                }
            }
        }
        if evaluations + candidates.len() > options.max_evaluations {
            return Ok(SolveOutcome {
                solution: current,
                status: SolveStatus::BudgetExhausted,
                cost_trace: trace,
                evaluations,
            });
        }
        evaluations += candidates.len();
        match best_of(&ev, &candidates) {
            Some((i, sol)) if sol.cost_value < current.cost_value => {
                z = candidates.swap_remove(i);
                current = sol;
                trace.push(current.cost_value);
            }
            _ => scale *= options.shrink,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantSearchOptions {
    /// Control spacing at which the dyadic level sequence stops adding
    /// resolution-dependent levels.
    pub resolution: f64,
    /// Search interval for the final time (intersected with the
    /// localization window when a reference is present).
    pub time_bounds: (f64, f64),
    /// Points per axis of the initial global grid.
    pub coarse_points: usize,
    /// Levels appended after the resolution-dependent ones.
    pub extra_levels: usize,
    /// Pattern moves allowed within one level.
    pub moves_per_level: usize,
}

impl Default for ConstantSearchOptions {
    fn default() -> Self {
        Self {
            resolution: 0.01,
            time_bounds: (1e-3, 60.0),
            coarse_points: 9,
            extra_levels: 16,
            moves_per_level: 64,
        }
    }
}

/// Nested search over constant controls and the final time.
///
/// A global grid is followed by a chain of local stencil searches whose
/// spacing halves at every level. The chain for resolution `r / 2` extends
/// the chain for `r` by one level, so refining the resolution never
/// increases the returned cost.
pub fn solve_constant_control(prob: &DiscreteProblem, options: &ConstantSearchOptions) -> Result<SolveOutcome, OcpError> {
    let np = options.coarse_points.max(2);
    let layout = Layout::new(prob, Parametrization::Constant);
    let ev = Evaluator {
        prob,
        layout,
        time_bounds: time_bounds(prob, options.time_bounds.0, options.time_bounds.1),
    };
    let (t_lo, t_hi) = ev.time_bounds;
    if !(t_lo <= t_hi) {
        return Err(OcpError::NoFeasiblePoint("empty final-time window".into()));
    }
    let dim = ev.layout.len();
    let mut spans = Vec::with_capacity(dim);
    let mut lows = Vec::with_capacity(dim);
    for c in 0..dim - 1 {
        let l = c % ev.layout.d;
        lows.push(prob.control_box.lower()[l]);
        spans.push(prob.control_box.upper()[l] - prob.control_box.lower()[l]);
    }
    lows.push(t_lo);
    spans.push(t_hi - t_lo);

    let mut grid = vec![Vec::new()];
    for c in 0..dim {
        let axis: Vec<f64> = if spans[c] == 0.0 {
            vec![lows[c]]
        } else {
            (0..np).map(|j| lows[c] + spans[c] * j as f64 / (np - 1) as f64).collect()
        };
        grid = grid
            .into_iter()
            .flat_map(|p: Vec<f64>| {
                axis.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    let mut evaluations = grid.len();
    let (i, mut current) = best_of(&ev, &grid)
        .ok_or_else(|| OcpError::NoFeasiblePoint("no grid point yields a feasible process".into()))?;
    let mut z = grid.swap_remove(i);
    let mut trace = vec![current.cost_value];

    let base: Vec<f64> = spans.iter().map(|s| s / (np - 1) as f64).collect();
    let control_base = if dim > 1 {
        base[..dim - 1].iter().copied().fold(0.0, f64::max)
    } else {
        base[dim - 1]
    };
    let mut levels = options.extra_levels;
    if control_base > 0.0 {
        let mut s = control_base;
        while s > options.resolution {
            s /= 2.0;
            levels += 1;
        }
    }

    for level in 1..=levels {
        let factor = 0.5f64.powi(level as i32);
        for _ in 0..options.moves_per_level {
            let mut stencil = vec![Vec::new()];
            for c in 0..dim {
                let offsets: &[f64] = if base[c] == 0.0 { &[0.0] } else { &[-1.0, 0.0, 1.0] };
                stencil = stencil
                    .into_iter()
                    .flat_map(|p: Vec<f64>| {
                        offsets.iter().map(move |&o| {
                            let mut q = p.clone();
                            q.push(o);
                            q
                        })
                    })
                    .collect();
            }
            let mut candidates = Vec::new();
            for offs in stencil {
                let mut y: Vec<f64> = z.iter().zip(&offs).zip(&base).map(|((v, o), b)| v + o * b * factor).collect();
                ev.project(&mut y);
                if y != z && !candidates.contains(&y) {
                    candidates.push(y);
                }
            }
            evaluations += candidates.len();
            match best_of(&ev, &candidates) {
                Some((i, sol)) if sol.cost_value < current.cost_value => {
                    z = candidates.swap_remove(i);
                    current = sol;
                    trace.push(current.cost_value);
                }
                _ => break,
            }
        }
    }
    Ok(SolveOutcome {
        solution: current,
        status: SolveStatus::Converged,
        cost_trace: trace,
        evaluations,
    })
}
