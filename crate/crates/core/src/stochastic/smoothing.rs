use crate::scalar::Real;

/// `H_γ(x) = 1 / (1 + exp(−2γx))` and its derivative `2γ H (1 − H)`.
pub fn smoothed_heaviside<T: Real>(x: T, gamma_h: T) -> (T, T) {
    let two = T::lit(2.0);
    let h = if x >= T::zero() {
        T::one() / (T::one() + (-two * gamma_h * x).exp())
    } else {
        let e = (two * gamma_h * x).exp();
        e / (T::one() + e)
    };
    (h, two * gamma_h * h * (T::one() - h))
}

/// `max_γ(x) = (√(x² + γ) + x) / 2` and its derivative `½ (x/√(x² + γ) + 1)`.
pub fn smoothed_max<T: Real>(x: T, gamma_m: T) -> (T, T) {
    let half = T::lit(0.5);
    let s = (x * x + gamma_m).sqrt();
    if x >= T::zero() {
        (half * (s + x), half * (x / s + T::one()))
    } else {
        // cancellation-free forms for negative x
        let d = s - x;
        (half * gamma_m / d, half * gamma_m / (s * d))
    }
}

/// Sharpness of the two smoothings and their continuation schedules.
///
/// Arguments are divided by a cost scale `s` before smoothing, so `gamma_h` and
/// `gamma_m` are dimensionless: the Heaviside acts on `x / s` and the smoothed
/// max on `x` with parameter `gamma_m · s²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothingParams {
    pub gamma_h: f64,
    pub gamma_m: f64,
    /// Multiplier applied to `gamma_h` after each stage.
    pub gamma_h_factor: f64,
    pub gamma_h_max: f64,
    /// Multiplier applied to `gamma_m` after each stage.
    pub gamma_m_factor: f64,
    pub gamma_m_min: f64,
    /// Fixed cost scale; `None` uses the spread of the benchmark atoms.
    pub cost_scale: Option<f64>,
}

impl Default for SmoothingParams {
    fn default() -> Self {
        Self {
            gamma_h: 1.0,
            gamma_m: 1.0,
            gamma_h_factor: 4.0,
            gamma_h_max: 1e6,
            gamma_m_factor: 0.125,
            gamma_m_min: 1.953125e-3,
            cost_scale: None,
        }
    }
}

impl SmoothingParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.gamma_h > 0.0 && self.gamma_m > 0.0) {
            return Err(format!("gamma_h and gamma_m must be positive, got {} and {}", self.gamma_h, self.gamma_m));
        }
        if !(self.gamma_h_factor >= 1.0) || !(self.gamma_m_factor > 0.0 && self.gamma_m_factor <= 1.0) {
            return Err("gamma_h_factor must be >= 1 and gamma_m_factor in (0, 1]".into());
        }
        if !(self.gamma_m_min > 0.0) || !(self.gamma_h_max >= self.gamma_h) {
            return Err("need gamma_m_min > 0 and gamma_h_max >= gamma_h".into());
        }
        if let Some(s) = self.cost_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(format!("cost_scale must be positive, got {s}"));
            }
        }
        Ok(())
    }

    /// Parameters of the next continuation stage.
    pub fn next_stage(&self) -> Self {
        Self {
            gamma_h: (self.gamma_h * self.gamma_h_factor).min(self.gamma_h_max),
            gamma_m: (self.gamma_m * self.gamma_m_factor).max(self.gamma_m_min),
            ..*self
        }
    }

    /// Cost scale to use for the given sorted distinct benchmark atoms: their
    /// spread, else the magnitude of the single atom, else 1.
    pub fn scale_for(&self, atoms: &[f64]) -> f64 {
        if let Some(s) = self.cost_scale {
            return s;
        }
        let spread = match atoms {
            [first, .., last] => last - first,
            [only] => only.abs(),
            [] => 0.0,
        };
        if spread > 0.0 && spread.is_finite() {
            spread
        } else {
            1.0
        }
    }
}
