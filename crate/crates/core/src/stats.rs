//! Compensated accumulation and Monte Carlo mean estimates.

/// Kahan–Babuška compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = KahanSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    /// Standard error of the mean, `s / √n`.
    pub se: f64,
    pub samples: usize,
}

impl MeanEstimate {
    /// Two-pass estimate; both passes use compensated sums so the result
    /// depends only on the order of `samples`.
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                se: f64::NAN,
                samples: 0,
            };
        }
        let mean = samples.iter().copied().collect::<KahanSum>().total() / n as f64;
        let se = if n > 1 {
            let ss = samples
                .iter()
                .map(|v| (v - mean) * (v - mean))
                .collect::<KahanSum>()
                .total();
            (ss / (n - 1) as f64 / n as f64).sqrt()
        } else {
            f64::NAN
        };
        Self { mean, se, samples: n }
    }
}
