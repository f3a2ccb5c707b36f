use crate::error::{Error, Result};

/// 1-based ranks with tied values sharing the mean of their positions.
pub fn fractional_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && v[order[j]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Rank correlation between uncertainty and error.
pub fn spearman(sigma: &[f64], abs_log_err: &[f64]) -> Result<f64> {
    if sigma.len() != abs_log_err.len() {
        return Err(Error::usage("rank correlation inputs differ in length"));
    }
    if sigma.len() < 3 {
        return Err(Error::usage(format!(
            "rank correlation needs at least 3 samples, got {}",
            sigma.len()
        )));
    }
    let a = fractional_ranks(sigma);
    let b = fractional_ranks(abs_log_err);
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(&b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::degenerate("constant ranks on one side"));
    }
    Ok((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}
