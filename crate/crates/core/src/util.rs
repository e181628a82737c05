//! Small numeric and formatting helpers.

/// Compensated (Neumaier) summation. Used wherever a sum feeds a tight
/// tolerance, e.g. generator row sums and measure normalization.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
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

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Compensated sum of a slice.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = NeumaierSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Compensated dot product.
pub fn neumaier_dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    neumaier_sum(a.iter().zip(b).map(|(x, y)| x * y))
}

/// Formats a double with 17 significant digits, enough to round-trip any
/// f64. This is the fixed format of every CSV artifact.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Euclidean norm of a small vector.
pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Max-norm of a slice.
pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
