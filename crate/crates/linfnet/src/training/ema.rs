//! Exponential moving average of a flat parameter vector. The shadow copy
//! trails the optimizer's iterates and is usually what should be evaluated
//! and shipped.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct EmaState {
    shadow: Vec<f64>,
    decay: f64,
}

impl EmaState {
    /// `decay` is the retention factor per update: `shadow <- decay * shadow
    /// + (1 - decay) * params`. Must lie in `[0, 1)`.
    pub fn new(init: Vec<f64>, decay: f64) -> Result<Self> {
        if !(decay.is_finite() && (0.0..1.0).contains(&decay)) {
            return Err(Error::Param(format!("ema decay must lie in [0,1), got {decay}")));
        }
        Ok(EmaState { shadow: init, decay })
    }

    pub fn update(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.shadow.len() {
            return Err(Error::shape_mismatch(self.shadow.len(), params.len()));
        }
        for (s, &p) in self.shadow.iter_mut().zip(params) {
            *s = self.decay * *s + (1.0 - self.decay) * p;
        }
        Ok(())
    }

    pub fn shadow(&self) -> &[f64] {
        &self.shadow
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn into_shadow(self) -> Vec<f64> {
        self.shadow
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;

    #[test]
    fn matches_closed_form() {
        // After k updates: shadow = d^k s0 + (1-d) sum_i d^{k-1-i} p_i.
        let decay = 0.9;
        let mut rng = Rng::new(5);
        let s0 = vec![0.5, -1.0, 2.0];
        let mut ema = EmaState::new(s0.clone(), decay).unwrap();
        let steps: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..3).map(|_| rng.uniform(-2.0, 2.0).unwrap()).collect())
            .collect();
        for p in &steps {
            ema.update(p).unwrap();
        }
        let k = steps.len() as i32;
        for j in 0..3 {
            let mut expect = decay.powi(k) * s0[j];
            for (i, p) in steps.iter().enumerate() {
                expect += (1.0 - decay) * decay.powi(k - 1 - i as i32) * p[j];
            }
            assert!((ema.shadow()[j] - expect).abs() < 1e-12, "coord {j}");
        }
    }

    #[test]
    fn zero_decay_tracks_exactly() {
        let mut ema = EmaState::new(vec![9.0], 0.0).unwrap();
        ema.update(&[3.5]).unwrap();
        assert_eq!(ema.shadow(), &[3.5]);
    }

    #[test]
    fn rejects_bad_decay_and_shape() {
        assert!(EmaState::new(vec![0.0], 1.0).is_err());
        assert!(EmaState::new(vec![0.0], -0.1).is_err());
        assert!(EmaState::new(vec![0.0], f64::NAN).is_err());
        let mut ema = EmaState::new(vec![0.0, 0.0], 0.99).unwrap();
        assert!(matches!(ema.update(&[1.0]), Err(Error::Shape { .. })));
    }
}
