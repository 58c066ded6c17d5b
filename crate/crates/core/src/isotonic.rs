//! Pool-adjacent-violators projection onto non-decreasing sequences.

/// Replace `y` by its least-squares non-decreasing fit (unit weights).
pub fn pava_in_place(y: &mut [f64]) {
    if y.len() < 2 {
        return;
    }
    // Blocks as (sum, count); merged from the left whenever the mean decreases.
    let mut sums: Vec<f64> = Vec::with_capacity(y.len());
    let mut counts: Vec<usize> = Vec::with_capacity(y.len());
    for &v in y.iter() {
        sums.push(v);
        counts.push(1);
        while sums.len() > 1 {
            let last = sums.len() - 1;
            let mean_last = sums[last] / counts[last] as f64;
            let mean_prev = sums[last - 1] / counts[last - 1] as f64;
            if mean_prev <= mean_last {
                break;
            }
            let (s, c) = (sums.pop().unwrap(), counts.pop().unwrap());
            sums[last - 1] += s;
            counts[last - 1] += c;
        }
    }
    let mut k = 0;
    for (s, c) in sums.into_iter().zip(counts) {
        let mean = s / c as f64;
        for v in &mut y[k..k + c] {
            *v = mean;
        }
        k += c;
    }
}

/// Largest decrease `y[k] - y[k+1]` and the index `k` where it occurs.
pub fn max_decrease(y: &[f64]) -> Option<(usize, f64)> {
    y.windows(2)
        .enumerate()
        .map(|(k, w)| (k, w[0] - w[1]))
        .filter(|&(_, d)| d > 0.0)
        .max_by(|a, b| a.1.total_cmp(&b.1))
}
