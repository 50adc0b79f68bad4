//! Mean and standard error with the population-deviation convention.

/// Returns `(mean, sem)` where `sem = sqrt(mean((x - mean)^2)) / sqrt(n - 1)`.
/// The SEM is `None` for fewer than two values; the mean is `None` when empty.
pub fn mean_sem(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (Some(mean), None);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (Some(mean), Some(var.sqrt() / (n - 1.0).sqrt()))
}
