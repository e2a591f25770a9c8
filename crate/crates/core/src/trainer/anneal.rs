/// Temperature-scaled softmax `exp(z_i / tau) / sum_j exp(z_j / tau)`.
pub fn anneal(logits: &[f64], tau: f64) -> Vec<f64> {
    let scaled: Vec<f64> = logits.iter().map(|z| z / tau).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Per-class binary cross-entropy on annealed outputs, averaged over classes.
///
/// Returns the loss of one sample and writes d(loss)/d(logits) into `grad`.
/// With a single class the annealed output is a sigmoid instead of a softmax.
pub(crate) fn annealed_bce(logits: &[f64], targets: &[u8], tau: f64, grad: &mut [f64]) -> f64 {
    let k = logits.len();
    if k == 1 {
        let s = logits[0] / tau;
        let y = 1.0 / (1.0 + (-s).exp());
        let t = f64::from(targets[0]);
        // softplus(-s) for t = 1, softplus(s) for t = 0
        let softplus = |x: f64| x.max(0.0) + (-x.abs()).exp().ln_1p();
        grad[0] = (y - t) / tau;
        return t * softplus(-s) + (1.0 - t) * softplus(s);
    }
    let s: Vec<f64> = logits.iter().map(|z| z / tau).collect();
    let lse = log_sum_exp(s.iter().copied());
    let mut loss = 0.0;
    let mut a = vec![0.0; k];
    let mut y = vec![0.0; k];
    for c in 0..k {
        let log_y = s[c] - lse;
        let others = log_sum_exp(s.iter().enumerate().filter(|&(j, _)| j != c).map(|(_, &v)| v));
        let log_not_y = others - lse;
        let t = f64::from(targets[c]);
        loss -= t * log_y + (1.0 - t) * log_not_y;
        y[c] = log_y.exp();
        a[c] = -t + (1.0 - t) * (log_y - log_not_y).exp();
    }
    let a_sum: f64 = a.iter().sum();
    let kf = k as f64;
    for j in 0..k {
        grad[j] = (a[j] - y[j] * a_sum) / (kf * tau);
    }
    loss / kf
}
