//! Small statistics helpers used by the experiment verdicts.

pub fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Ordinary least-squares slope of y on x. `None` for fewer than two points
/// or no spread in x.
pub fn ls_slope(points: &[(f64, f64)]) -> Option<f64> {
    let n = points.len();
    if n < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Exact one-sided sign test: probability of at least `wins` successes in
/// `wins + losses` fair coin flips. Ties are excluded by the caller.
pub fn sign_test_p(wins: u32, losses: u32) -> f64 {
    let n = wins + losses;
    if n == 0 {
        return 1.0;
    }
    // ln C(n, k) accumulated in log space to stay finite for large n.
    let ln_choose = |k: u32| -> f64 { (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum() };
    let ln_half_n = n as f64 * 0.5f64.ln();
    (wins..=n).map(|k| (ln_choose(k) + ln_half_n).exp()).sum::<f64>().min(1.0)
}

/// Paired comparison: counts pairs where `a` beats `b` (`a < b`), pairs
/// where it loses, and ties.
pub fn paired_wins(a: &[f64], b: &[f64]) -> (u32, u32, u32) {
    let mut out = (0, 0, 0);
    for (x, y) in a.iter().zip(b) {
        if x < y {
            out.0 += 1;
        } else if x > y {
            out.1 += 1;
        } else {
            out.2 += 1;
        }
    }
    out
}
