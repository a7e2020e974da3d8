//! Losses and projected online gradient descent for linear models.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{ensure, Result};
use crate::linalg::{project_l2_ball, Vector};

/// Ball radius used for every model unless configured otherwise.
pub const DEFAULT_RADIUS: f64 = 10.0;

/// Cap that maps square losses into `[0, 1]` for labels in `[-1, 1]`.
pub const SQUARE_LOSS_CAP: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// `ln(1 + exp(-y p))`, labels in `{-1, +1}`.
    Logistic,
    /// `(y - p)^2`.
    Square,
}

fn check_label(kind: LossKind, y: f64) -> Result<()> {
    if kind == LossKind::Logistic {
        ensure!(
            y == 1.0 || y == -1.0,
            "logistic loss needs a label in {{-1, +1}}, got {y}"
        );
    }
    Ok(())
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `1 / (1 + e^{-z})`.
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn loss(kind: LossKind, p: f64, y: f64) -> Result<f64> {
    check_label(kind, y)?;
    Ok(match kind {
        LossKind::Logistic => softplus(-y * p),
        LossKind::Square => (y - p).powi(2),
    })
}

/// Derivative of the loss with respect to the prediction `p`.
pub fn loss_derivative(kind: LossKind, p: f64, y: f64) -> Result<f64> {
    check_label(kind, y)?;
    Ok(match kind {
        LossKind::Logistic => -y * sigmoid(-y * p),
        LossKind::Square => 2.0 * (p - y),
    })
}

/// Gradient of `w -> loss(w^T x, y)`.
pub fn loss_gradient(kind: LossKind, w: &Vector, x: &Vector, y: f64) -> Result<Vector> {
    ensure!(
        w.len() == x.len(),
        "weights have dimension {} but instance has dimension {}",
        w.len(),
        x.len()
    );
    Ok(x * loss_derivative(kind, w.dot(x), y)?)
}

/// `min(loss, cap) / cap`, always in `[0, 1]`.
pub fn unit_loss(kind: LossKind, p: f64, y: f64, cap: f64) -> Result<f64> {
    ensure!(cap > 0.0, "loss cap must be positive, got {cap}");
    Ok(loss(kind, p, y)?.min(cap) / cap)
}

/// Upper envelope of the logistic loss for predictions `|p| <= radius * x_max`.
pub fn logistic_cap(radius: f64, x_max: f64) -> f64 {
    softplus(radius * x_max)
}

/// Label assigned to a raw prediction; ties go to `+1`.
pub fn predicted_label(p: f64) -> f64 {
    if p >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepMode {
    /// `1 / (c sqrt(t))`.
    InverseSqrtGlobal,
    /// `1 / (c sqrt(t - phase_start))`.
    InverseSqrtPhase,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    pub scale: f64,
    pub mode: StepMode,
}

impl StepSchedule {
    pub fn new(scale: f64, mode: StepMode) -> Result<Self> {
        ensure!(scale > 0.0 && scale.is_finite(), "step scale must be positive, got {scale}");
        Ok(Self { scale, mode })
    }

    pub fn step_size(&self, t: usize, phase_start: usize) -> Result<f64> {
        let elapsed = match self.mode {
            StepMode::InverseSqrtGlobal => {
                ensure!(t >= 1, "rounds are numbered from 1");
                t
            }
            StepMode::InverseSqrtPhase => {
                ensure!(
                    t > phase_start,
                    "round {t} does not follow phase start {phase_start}"
                );
                t - phase_start
            }
        };
        Ok(1.0 / (self.scale * (elapsed as f64).sqrt()))
    }
}

/// Linear predictor constrained to an L2 ball.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineLinearModel {
    weights: Vector,
    radius: f64,
    updates_applied: usize,
}

impl OnlineLinearModel {
    pub fn zeros(dim: usize, radius: f64) -> Result<Self> {
        Self::from_weights(Vector::zeros(dim), radius)
    }

    pub fn from_weights(weights: Vector, radius: f64) -> Result<Self> {
        ensure!(radius > 0.0 && radius.is_finite(), "ball radius must be positive");
        ensure!(weights.iter().all(|v| v.is_finite()), "weights must be finite");
        Ok(Self {
            weights: project_l2_ball(&weights, radius),
            radius,
            updates_applied: 0,
        })
    }

    /// Uniform draw from the ball of radius `scale * radius`.
    pub fn random<R: Rng + ?Sized>(dim: usize, radius: f64, scale: f64, rng: &mut R) -> Result<Self> {
        ensure!(dim >= 1, "model dimension must be positive");
        let mut direction = Vector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = direction.norm();
        if norm > 0.0 {
            direction /= norm;
        }
        let u: f64 = rng.random();
        let r = scale * radius * u.powf(1.0 / dim as f64);
        Self::from_weights(direction * r, radius)
    }

    pub fn weights(&self) -> &Vector {
        &self.weights
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn updates_applied(&self) -> usize {
        self.updates_applied
    }

    pub fn predict(&self, x: &Vector) -> Result<f64> {
        ensure!(
            x.len() == self.weights.len(),
            "model has dimension {} but instance has dimension {}",
            self.weights.len(),
            x.len()
        );
        Ok(self.weights.dot(x))
    }

    /// `w <- Proj(w - tau * grad)`.
    pub fn step(&mut self, kind: LossKind, x: &Vector, y: f64, tau: f64) -> Result<()> {
        ensure!(tau >= 0.0 && tau.is_finite(), "step size must be nonnegative, got {tau}");
        let grad = loss_gradient(kind, &self.weights, x, y)?;
        let moved = &self.weights - grad * tau;
        self.weights = project_l2_ball(&moved, self.radius);
        self.updates_applied += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn loss_examples() {
        let ln2 = 2f64.ln();
        assert!((loss(LossKind::Logistic, 0.0, 1.0).unwrap() - ln2).abs() < 1e-15);
        assert!((loss(LossKind::Logistic, 0.0, -1.0).unwrap() - ln2).abs() < 1e-15);
        assert_eq!(loss(LossKind::Square, 1.5, 1.5).unwrap(), 0.0);
        assert_eq!(loss(LossKind::Square, 0.0, 2.0).unwrap(), 4.0);
        assert!(loss(LossKind::Logistic, 0.0, 0.5).is_err());
    }

    #[test]
    fn logistic_is_stable_at_extremes() {
        let big = loss(LossKind::Logistic, -800.0, 1.0).unwrap();
        assert!((big - 800.0).abs() < 1e-9);
        assert!(loss(LossKind::Logistic, 800.0, 1.0).unwrap() >= 0.0);
    }

    #[test]
    fn gradient_examples() {
        let w = dvector![0.0, 0.0];
        let x = dvector![1.0, 0.0];
        let g = loss_gradient(LossKind::Logistic, &w, &x, 1.0).unwrap();
        assert!((g - dvector![-0.5, 0.0]).amax() < 1e-15);
        let g = loss_gradient(LossKind::Square, &w, &x, 1.0).unwrap();
        assert_eq!(g, dvector![-2.0, 0.0]);
        assert!(loss_gradient(LossKind::Square, &w, &dvector![1.0], 1.0).is_err());
    }

    #[test]
    fn ogd_step_examples() {
        let x = dvector![1.0, 0.0];
        let mut m = OnlineLinearModel::zeros(2, 10.0).unwrap();
        m.step(LossKind::Square, &x, 1.0, 1.0).unwrap();
        assert_eq!(m.weights(), &dvector![2.0, 0.0]);
        assert_eq!(m.updates_applied(), 1);

        let mut m = OnlineLinearModel::zeros(2, 1.0).unwrap();
        m.step(LossKind::Square, &x, 1.0, 1.0).unwrap();
        assert!((m.weights() - dvector![1.0, 0.0]).amax() < 1e-15);

        let mut m = OnlineLinearModel::from_weights(dvector![0.3, -0.2], 10.0).unwrap();
        m.step(LossKind::Square, &x, 1.0, 0.0).unwrap();
        assert_eq!(m.weights(), &dvector![0.3, -0.2]);
    }

    #[test]
    fn step_size_examples() {
        let g = StepSchedule::new(1.0, StepMode::InverseSqrtGlobal).unwrap();
        assert_eq!(g.step_size(4, 0).unwrap(), 0.5);
        let p = StepSchedule::new(1.0, StepMode::InverseSqrtPhase).unwrap();
        assert!((p.step_size(109, 100).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(p.step_size(100, 100).is_err());
        let g10 = StepSchedule::new(10.0, StepMode::InverseSqrtGlobal).unwrap();
        assert!((g10.step_size(100, 0).unwrap() - 0.01).abs() < 1e-15);
        assert!(StepSchedule::new(0.0, StepMode::InverseSqrtGlobal).is_err());
    }

    #[test]
    fn unit_loss_examples() {
        assert_eq!(unit_loss(LossKind::Square, 1.0, 1.0, 4.0).unwrap(), 0.0);
        assert_eq!(unit_loss(LossKind::Square, 0.0, 3.0, 4.0).unwrap(), 1.0);
        let ln2 = 2f64.ln();
        assert!((unit_loss(LossKind::Logistic, 0.0, 1.0, ln2).unwrap() - 1.0).abs() < 1e-15);
        assert!(unit_loss(LossKind::Square, 0.0, 3.0, 0.0).is_err());
    }

    #[test]
    fn tie_breaks_to_positive() {
        assert_eq!(predicted_label(0.0), 1.0);
        assert_eq!(predicted_label(-1e-300), -1.0);
    }
}
