use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{LatticeError, Result};

/// DDPM noise schedule: betas linearly spaced over T steps, with the
/// convention alpha_bar(0) = 1 so t = 0 is the clean signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub t_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    #[serde(skip)]
    betas: Vec<f64>,
    #[serde(skip)]
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    pub fn linear(t_steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if t_steps == 0 {
            return Err(LatticeError::InvalidConfig("schedule needs t_steps >= 1".into()));
        }
        if !(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end) {
            return Err(LatticeError::InvalidConfig(format!(
                "betas must satisfy 0 < start <= end < 1, got {beta_start}..{beta_end}"
            )));
        }
        let mut schedule = NoiseSchedule {
            t_steps,
            beta_start,
            beta_end,
            betas: Vec::new(),
            alpha_bars: Vec::new(),
        };
        schedule.rebuild();
        Ok(schedule)
    }

    /// Recomputes the derived arrays from (t_steps, beta_start, beta_end).
    /// Used after deserialization so derived values are bit-identical to a
    /// freshly built schedule.
    pub fn rebuild(&mut self) {
        let t = self.t_steps;
        self.betas = (0..t)
            .map(|i| {
                if t == 1 {
                    self.beta_start
                } else {
                    self.beta_start
                        + (self.beta_end - self.beta_start) * i as f64 / (t - 1) as f64
                }
            })
            .collect();
        let mut bars = Vec::with_capacity(t + 1);
        bars.push(1.0);
        let mut acc = 1.0;
        for &beta in &self.betas {
            acc *= 1.0 - beta;
            bars.push(acc);
        }
        self.alpha_bars = bars;
    }

    /// Default schedule: T = 100, betas 1e-4 to 0.02.
    pub fn default_linear() -> Self {
        NoiseSchedule::linear(100, 1e-4, 0.02).expect("default schedule is valid")
    }

    /// beta_t for t in 1..=T.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        1.0 - self.betas[t - 1]
    }

    /// alpha_bar_t for t in 0..=T (alpha_bar_0 = 1).
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    pub fn check_t(&self, t: usize) -> Result<()> {
        if t > self.t_steps {
            return Err(LatticeError::TimestepOutOfRange { t, max: self.t_steps });
        }
        Ok(())
    }
}

/// Diffuses clean coordinates to step t:
/// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps.
/// Masked rows are passed through untouched.
pub fn forward_noise(
    x0: &Array2<f64>,
    t: usize,
    eps: &Array2<f64>,
    schedule: &NoiseSchedule,
    mask: &[bool],
) -> Result<Array2<f64>> {
    schedule.check_t(t)?;
    assert_eq!(x0.dim(), eps.dim(), "noise shape must match coordinates");
    assert_eq!(x0.nrows(), mask.len(), "mask length must match rows");
    let bar = schedule.alpha_bar(t);
    let signal = bar.sqrt();
    let noise = (1.0 - bar).sqrt();
    let mut out = x0.clone();
    for (row, &keep) in mask.iter().enumerate() {
        if !keep {
            continue;
        }
        for col in 0..x0.ncols() {
            out[(row, col)] = signal * x0[(row, col)] + noise * eps[(row, col)];
        }
    }
    Ok(out)
}
