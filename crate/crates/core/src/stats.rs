//! Small descriptive statistics used by the experiment harness.

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Kendall rank correlation (tau-b) of a series against its index.
///
/// Returns 0 for series shorter than two points or with all ties.
pub fn kendall_tau(series: &[f64]) -> f64 {
    let n = series.len();
    let (mut concordant, mut discordant, mut ties) = (0i64, 0i64, 0i64);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = series[j] - series[i];
            if d > 0.0 {
                concordant += 1;
            } else if d < 0.0 {
                discordant += 1;
            } else {
                ties += 1;
            }
        }
    }
    let pairs = (n * n.saturating_sub(1) / 2) as f64;
    let denom = (pairs * (pairs - ties as f64)).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        (concordant - discordant) as f64 / denom
    }
}

/// Empirical CDF as sorted (value, cumulative fraction) pairs.
pub fn ecdf(xs: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, (i + 1) as f64 / n))
        .collect()
}
