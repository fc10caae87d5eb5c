use nalgebra::DVector;

/// Terminal cost `φ(x, T)`.
pub trait CostFunction: Send + Sync + std::fmt::Debug {
    fn value(&self, x: &DVector<f64>, t: f64) -> f64;
    /// `(∇_x φ, ∂_T φ)`, or `None` where `φ` is not differentiable.
    fn gradient(&self, x: &DVector<f64>, t: f64) -> Option<(DVector<f64>, f64)>;
    fn is_smooth(&self) -> bool;
}

/// `φ(x, T) = |x - target|^2 / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSquaredDistance {
    pub target: DVector<f64>,
}

impl HalfSquaredDistance {
    pub fn origin(n: usize) -> Self {
        Self {
            target: DVector::zeros(n),
        }
    }
}

impl CostFunction for HalfSquaredDistance {
    fn value(&self, x: &DVector<f64>, _: f64) -> f64 {
        0.5 * (x - &self.target).norm_squared()
    }

    fn gradient(&self, x: &DVector<f64>, _: f64) -> Option<(DVector<f64>, f64)> {
        Some((x - &self.target, 0.0))
    }

    fn is_smooth(&self) -> bool {
        true
    }
}

/// `φ(x, T) = |x - target|_1`; Lipschitz but not smooth.
#[derive(Debug, Clone, PartialEq)]
pub struct L1Distance {
    pub target: DVector<f64>,
}

impl CostFunction for L1Distance {
    fn value(&self, x: &DVector<f64>, _: f64) -> f64 {
        (x - &self.target).lp_norm(1)
    }

    fn gradient(&self, _: &DVector<f64>, _: f64) -> Option<(DVector<f64>, f64)> {
        None
    }

    fn is_smooth(&self) -> bool {
        false
    }
}
