//! Parameter-free expert aggregation with confidence-rated (sleeping) experts.
//!
//! Each expert carries its cumulative regret `R` against the ensemble and the
//! cumulative magnitude `S` of its instantaneous regrets. Weights follow the
//! discrete derivative of the potential `Phi(R, S) = exp(max(0, R)^2 / (3 S))`:
//!
//! ```text
//! w(R, S) = (Phi(R + 1, S + 1) - Phi(R - 1, S + 1)) / 2
//! alpha_i ∝ I_i w(R_i, S_i)
//! ```
//!
//! For losses in `[0, 1]` the ensemble loss stays within
//! `sqrt(3 (u·S) (ln N + ln B + ln(1 + ln N)))` of any mixture `u` of experts,
//! with `B = 1 + 3/2 sum_i (1 + ln(1 + S_i))`.

use crate::error::{ensure, Result};
use crate::linalg::Vector;

/// `exp(max(0, R)^2 / (3 S))`, with `Phi(., 0) = 1`.
pub fn potential(r: f64, s: f64) -> f64 {
    debug_assert!(s >= 0.0);
    let pos = r.max(0.0);
    if pos == 0.0 || s == 0.0 {
        1.0
    } else {
        (pos * pos / (3.0 * s)).exp()
    }
}

pub fn weight(r: f64, s: f64) -> f64 {
    0.5 * (potential(r + 1.0, s + 1.0) - potential(r - 1.0, s + 1.0))
}

/// `ln w(R, S)`, `-inf` when the weight is zero. Stays finite where
/// [`weight`] itself would overflow.
pub fn log_weight(r: f64, s: f64) -> f64 {
    let denom = 3.0 * (s + 1.0);
    let hi = (r + 1.0).max(0.0);
    let lo = (r - 1.0).max(0.0);
    let a = hi * hi / denom;
    let b = lo * lo / denom;
    if a <= b {
        return f64::NEG_INFINITY;
    }
    a + (-(b - a).exp_m1()).ln() - std::f64::consts::LN_2
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpertRecord {
    pub id: String,
    /// Cumulative regret `R`.
    pub regret: f64,
    /// Cumulative magnitude `S`.
    pub magnitude: f64,
    /// Confidence `I` in `[0, 1]`; zero means asleep.
    pub confidence: f64,
    /// Cumulative loss over the rounds the expert was scored.
    pub loss: f64,
}

impl ExpertRecord {
    fn new(id: String, confidence: f64) -> Self {
        Self {
            id,
            regret: 0.0,
            magnitude: 0.0,
            confidence,
            loss: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState {
    experts: Vec<ExpertRecord>,
    rounds_played: usize,
    combined_loss: f64,
}

impl EnsembleState {
    /// Ensemble with every listed expert awake.
    pub fn new<I, S>(ids: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut state = Self::empty();
        for id in ids {
            state.register_expert(id)?;
            let last = state.experts.len() - 1;
            state.experts[last].confidence = 1.0;
        }
        ensure!(!state.experts.is_empty(), "an ensemble needs at least one expert");
        Ok(state)
    }

    pub fn empty() -> Self {
        Self {
            experts: Vec::new(),
            rounds_played: 0,
            combined_loss: 0.0,
        }
    }

    pub fn experts(&self) -> &[ExpertRecord] {
        &self.experts
    }

    pub fn len(&self) -> usize {
        self.experts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experts.is_empty()
    }

    pub fn rounds_played(&self) -> usize {
        self.rounds_played
    }

    /// Cumulative loss of the combined prediction.
    pub fn combined_loss(&self) -> f64 {
        self.combined_loss
    }

    /// Add a new expert with `R = S = 0`, asleep until its confidence is
    /// raised.
    pub fn register_expert(&mut self, id: impl Into<String>) -> Result<usize> {
        let id = id.into();
        ensure!(
            self.experts.iter().all(|e| e.id != id),
            "expert id {id:?} is already registered"
        );
        self.experts.push(ExpertRecord::new(id, 0.0));
        Ok(self.experts.len() - 1)
    }

    pub fn set_confidence(&mut self, index: usize, confidence: f64) -> Result<()> {
        ensure!(index < self.experts.len(), "no expert at index {index}");
        ensure!(
            (0.0..=1.0).contains(&confidence),
            "confidence must lie in [0, 1], got {confidence}"
        );
        self.experts[index].confidence = confidence;
        Ok(())
    }

    /// Mixture weights for the next round.
    ///
    /// When every `I_i w_i` vanishes the weights fall back to uniform over
    /// awake experts (uniform over all experts if none is awake).
    pub fn alphas(&self) -> Vector {
        let n = self.experts.len();
        let logs: Vec<f64> = self
            .experts
            .iter()
            .map(|e| {
                if e.confidence > 0.0 {
                    e.confidence.ln() + log_weight(e.regret, e.magnitude)
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if top.is_finite() {
            let scaled: Vec<f64> = logs.iter().map(|&l| (l - top).exp()).collect();
            let total: f64 = scaled.iter().sum();
            return Vector::from_iterator(n, scaled.into_iter().map(|v| v / total));
        }
        let awake = self.experts.iter().filter(|e| e.confidence > 0.0).count();
        if awake == 0 {
            return Vector::from_element(n, 1.0 / n as f64);
        }
        Vector::from_iterator(
            n,
            self.experts.iter().map(|e| {
                if e.confidence > 0.0 {
                    1.0 / awake as f64
                } else {
                    0.0
                }
            }),
        )
    }

    /// Score one round. Expert `i` receives `r_i = I_i (combined - loss_i)`,
    /// so sleeping experts are frozen.
    pub fn update(&mut self, unit_losses: &[f64], combined_loss: f64) -> Result<()> {
        ensure!(
            unit_losses.len() == self.experts.len(),
            "got {} losses for {} experts",
            unit_losses.len(),
            self.experts.len()
        );
        ensure!(
            (0.0..=1.0).contains(&combined_loss),
            "combined loss {combined_loss} outside [0, 1]"
        );
        ensure!(
            unit_losses.iter().all(|l| (0.0..=1.0).contains(l)),
            "expert losses must lie in [0, 1]"
        );
        for (expert, &l) in self.experts.iter_mut().zip(unit_losses) {
            if expert.confidence == 0.0 {
                continue;
            }
            let r = expert.confidence * (combined_loss - l);
            expert.regret += r;
            expert.magnitude += r.abs();
            expert.loss += l;
        }
        self.combined_loss += combined_loss;
        self.rounds_played += 1;
        Ok(())
    }

    /// Index of the expert with the smallest cumulative loss (lowest index on
    /// ties).
    pub fn best_expert(&self) -> usize {
        let mut best = 0;
        for (i, e) in self.experts.iter().enumerate() {
            if e.loss < self.experts[best].loss {
                best = i;
            }
        }
        best
    }

    /// Additive term of the regret guarantee against the comparator `u`.
    pub fn regret_bound(&self, u: &[f64]) -> Result<f64> {
        ensure!(
            u.len() == self.experts.len(),
            "comparator has {} entries for {} experts",
            u.len(),
            self.experts.len()
        );
        ensure!(
            u.iter().all(|&x| x >= 0.0) && (u.iter().sum::<f64>() - 1.0).abs() <= 1e-9,
            "comparator must be a probability vector"
        );
        let n = self.experts.len() as f64;
        let us: f64 = u
            .iter()
            .zip(&self.experts)
            .map(|(w, e)| w * e.magnitude)
            .sum();
        let b = 1.0
            + 1.5
                * self
                    .experts
                    .iter()
                    .map(|e| 1.0 + e.magnitude.ln_1p())
                    .sum::<f64>();
        Ok((3.0 * us * (n.ln() + b.ln() + n.ln().ln_1p())).sqrt())
    }

    /// [`regret_bound`](Self::regret_bound) against a point mass on one
    /// expert.
    pub fn regret_bound_for(&self, index: usize) -> Result<f64> {
        ensure!(index < self.experts.len(), "no expert at index {index}");
        let mut u = vec![0.0; self.experts.len()];
        u[index] = 1.0;
        self.regret_bound(&u)
    }
}

/// `alphas^T preds`.
pub fn combine(alphas: &Vector, preds: &[f64]) -> Result<f64> {
    ensure!(
        alphas.len() == preds.len(),
        "{} weights for {} predictions",
        alphas.len(),
        preds.len()
    );
    ensure!(
        (alphas.sum() - 1.0).abs() <= 1e-9,
        "weights must sum to 1, got {}",
        alphas.sum()
    );
    Ok(alphas.iter().zip(preds).map(|(a, p)| a * p).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    const E13: f64 = 1.395_612_425_086_089_5; // e^{1/3}

    #[test]
    fn potential_examples() {
        assert_eq!(potential(0.0, 0.0), 1.0);
        assert_eq!(potential(-5.0, 2.0), 1.0);
        assert!((potential(1.0, 1.0) - E13).abs() < 1e-15);
    }

    #[test]
    fn weight_examples() {
        assert!((weight(0.0, 0.0) - 0.5 * (E13 - 1.0)).abs() < 1e-15);
        assert!((weight(0.0, 0.0) - 0.19781).abs() < 1e-5);
        assert!((weight(1.0, 1.0) - 0.5 * ((2.0f64 / 3.0).exp() - 1.0)).abs() < 1e-15);
        assert!((weight(1.0, 1.0) - 0.47387).abs() < 1e-5);
        assert_eq!(weight(-10.0, 5.0), 0.0);
    }

    #[test]
    fn log_weight_agrees_with_weight() {
        for &(r, s) in &[(0.0, 0.0), (1.0, 1.0), (2.5, 7.0), (-0.5, 3.0), (40.0, 50.0)] {
            assert!((log_weight(r, s).exp() - weight(r, s)).abs() < 1e-12 * weight(r, s).max(1.0));
        }
        assert_eq!(log_weight(-3.0, 4.0), f64::NEG_INFINITY);
        assert!(log_weight(5000.0, 5000.0).is_finite());
    }

    #[test]
    fn fresh_state_is_uniform() {
        let s = EnsembleState::new(["a", "b", "c"]).unwrap();
        let a = s.alphas();
        assert!(a.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn two_expert_alphas() {
        let mut s = EnsembleState::new(["a", "b"]).unwrap();
        s.experts[0].regret = 1.0;
        s.experts[0].magnitude = 1.0;
        let a = s.alphas();
        assert!((a[0] - 0.7055).abs() < 1e-4);
        assert!((a[1] - 0.2945).abs() < 1e-4);
    }

    #[test]
    fn sleeping_expert_gets_zero() {
        let mut s = EnsembleState::new(["a", "b"]).unwrap();
        s.experts[1].regret = 5.0;
        s.experts[1].magnitude = 5.0;
        s.set_confidence(1, 0.0).unwrap();
        assert_eq!(s.alphas()[1], 0.0);
    }

    #[test]
    fn all_zero_weights_fall_back_to_uniform_over_awake() {
        let mut s = EnsembleState::new(["a", "b", "c"]).unwrap();
        for e in &mut s.experts {
            e.regret = -10.0;
            e.magnitude = 10.0;
        }
        s.set_confidence(2, 0.0).unwrap();
        assert_eq!(s.alphas().as_slice(), &[0.5, 0.5, 0.0]);
        for i in 0..3 {
            s.set_confidence(i, 0.0).unwrap();
        }
        assert!(s.alphas().iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn update_examples() {
        let mut s = EnsembleState::new(["a", "b"]).unwrap();
        s.update(&[0.5, 0.0], 0.5).unwrap();
        assert_eq!((s.experts[0].regret, s.experts[0].magnitude), (0.0, 0.0));
        assert_eq!((s.experts[1].regret, s.experts[1].magnitude), (0.5, 0.5));
        let mut s = EnsembleState::new(["a"]).unwrap();
        s.update(&[0.0], 1.0).unwrap();
        assert_eq!((s.experts[0].regret, s.experts[0].magnitude), (1.0, 1.0));
        assert_eq!(s.rounds_played(), 1);
        assert!(s.update(&[1.5], 0.5).is_err());
        assert!(s.update(&[0.5], -0.1).is_err());
        assert!(s.update(&[0.5, 0.5], 0.5).is_err());
    }

    #[test]
    fn regret_bound_examples() {
        let s = EnsembleState::new(["a", "b"]).unwrap();
        assert_eq!(s.regret_bound(&[0.3, 0.7]).unwrap(), 0.0);
        let mut s = EnsembleState::new(["a", "b"]).unwrap();
        s.experts[0].magnitude = 4.0;
        let bound = s.regret_bound(&[1.0, 0.0]).unwrap();
        assert!((bound - 6.078).abs() < 1e-3, "{bound}");
        assert!(s.regret_bound(&[0.5, 0.6]).is_err());
        assert!(s.regret_bound(&[1.0]).is_err());
        // more mass on the larger-S expert never lowers the bound
        assert!(s.regret_bound(&[0.5, 0.5]).unwrap() <= bound);
    }

    #[test]
    fn registration() {
        let mut s = EnsembleState::empty();
        let i = s.register_expert("x").unwrap();
        assert!(s.register_expert("x").is_err());
        s.set_confidence(i, 1.0).unwrap();
        assert_eq!(s.alphas().as_slice(), &[1.0]);

        let mut s = EnsembleState::new(["a"]).unwrap();
        s.update(&[0.2], 0.6).unwrap();
        let before = s.experts()[0].clone();
        s.register_expert("late").unwrap();
        assert_eq!(s.experts()[0], before);
        assert_eq!(s.alphas()[1], 0.0);
        s.update(&[0.1, 0.0], 0.3).unwrap();
        assert_eq!(s.experts()[1].regret, 0.0);
    }

    #[test]
    fn combine_examples() {
        assert_eq!(combine(&dvector![1.0, 0.0], &[0.7, -0.3]).unwrap(), 0.7);
        assert_eq!(combine(&dvector![0.5, 0.5], &[1.0, -1.0]).unwrap(), 0.0);
        assert_eq!(combine(&dvector![0.25, 0.75], &[0.0, 1.0]).unwrap(), 0.75);
        assert!(combine(&dvector![0.5, 0.5], &[1.0]).is_err());
        assert!(combine(&dvector![0.5, 0.6], &[1.0, 1.0]).is_err());
    }
}
