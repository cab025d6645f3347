//! Small numeric helpers shared by the estimators.

/// Neumaier-compensated accumulator.
///
/// Used wherever a sum must not depend on accumulation drift; callers fix
/// the order of terms (plot-id order) so results are reproducible.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

/// Compensated sum of a slice, in slice order.
pub fn compensated_sum(values: &[f64]) -> f64 {
    values.iter().copied().collect::<CompensatedSum>().value()
}

/// Sample mean and sample variance (n − 1 denominator) in slice order.
///
/// Returns `None` for the variance when fewer than two values are given.
pub fn mean_and_sample_variance(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, None);
    }
    let mean = compensated_sum(values) / n as f64;
    if n < 2 {
        return (mean, None);
    }
    let ss = values
        .iter()
        .map(|v| {
            let d = v - mean;
            d * d
        })
        .collect::<CompensatedSum>()
        .value();
    (mean, Some(ss / (n - 1) as f64))
}
