use crate::error::{invalid, Result};
use crate::numeric::compensated_sum;

/// Noisy measurements `y_i = f(t_i) + e_i` at sorted locations in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    t: Vec<f64>,
    y: Vec<f64>,
    sigma: Option<f64>,
}

impl SampleSet {
    pub fn new(t: Vec<f64>, y: Vec<f64>, sigma: Option<f64>) -> Result<Self> {
        if t.len() != y.len() {
            return Err(invalid(format!("{} locations but {} responses", t.len(), y.len())));
        }
        if t.is_empty() {
            return Err(invalid("sample set is empty"));
        }
        if t.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid("measurement locations must lie in [0, 1]"));
        }
        if t.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("measurement locations must be sorted ascending"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(invalid("responses must be finite"));
        }
        if let Some(s) = sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(invalid("noise level must be positive"));
            }
        }
        Ok(Self { t, y, sigma })
    }

    /// Builds a sample set from unsorted pairs.
    pub fn from_unsorted(pairs: Vec<(f64, f64)>, sigma: Option<f64>) -> Result<Self> {
        let mut pairs = pairs;
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (t, y) = pairs.into_iter().unzip();
        Self::new(t, y, sigma)
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn locations(&self) -> &[f64] {
        &self.t
    }

    pub fn responses(&self) -> &[f64] {
        &self.y
    }

    pub fn known_sigma(&self) -> Option<f64> {
        self.sigma
    }

    /// Known noise level, or the first-difference estimate when unknown.
    pub fn noise_sd(&self) -> f64 {
        self.sigma.unwrap_or_else(|| difference_sigma(&self.y))
    }

    pub fn with_sigma(mut self, sigma: Option<f64>) -> Self {
        self.sigma = sigma;
        self
    }

    /// Same locations, new responses.
    pub fn with_responses(&self, y: Vec<f64>) -> Result<Self> {
        Self::new(self.t.clone(), y, self.sigma)
    }
}

/// `sigma^2 = sum (y_{i+1} - y_i)^2 / (2 (N - 1))`.
pub fn difference_sigma(y: &[f64]) -> f64 {
    if y.len() < 2 {
        return f64::NAN;
    }
    let ss = compensated_sum(y.windows(2).map(|w| (w[1] - w[0]).powi(2)));
    (ss / (2.0 * (y.len() - 1) as f64)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unsorted_and_out_of_range() {
        assert!(SampleSet::new(vec![0.2, 0.1], vec![0.0, 0.0], None).is_err());
        assert!(SampleSet::new(vec![0.2, 1.1], vec![0.0, 0.0], None).is_err());
        assert!(SampleSet::new(vec![0.2], vec![0.0, 0.0], None).is_err());
    }

    #[test]
    fn difference_estimator_on_alternating_noise() {
        // successive differences are all 2, so sigma^2 = 4 / 2
        let y: Vec<f64> = (0..101).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!((difference_sigma(&y) - 2f64.sqrt()).abs() < 1e-12);
    }
}
