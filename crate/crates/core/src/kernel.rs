//! Multi-scale Gaussian-kernel MMD.
//!
//! `MMD^2 = sum_s [ mean k_s(X, X) + mean k_s(Y, Y) - 2 mean k_s(X, Y) ]` with
//! `sigma_s = sigma_0 * 2^s`, `s in {-2..2}`, and `sigma_0` the median pairwise
//! distance over `X ∪ Y`. The biased V-statistic (self-pairs included) is used.

use alloc::vec;
use alloc::vec::Vec;

pub const SCALES: [i32; 5] = [-2, -1, 0, 1, 2];

/// Result of [`mmd2`]: value, gradients w.r.t. each point, and bandwidth info.
#[derive(Debug, Clone, PartialEq)]
pub struct Mmd {
    pub value: f64,
    pub sigma0: f64,
    /// Median distance was zero; `sigma0` fell back to 1.
    pub degenerate_bandwidth: bool,
    /// `d value / d x`, row-major `|X| x dim`. Empty unless gradients were requested.
    pub grad_x: Vec<f64>,
    pub grad_y: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Median of pairwise distances and the pair(s) that realize it.
fn median_distance(points: &[&[f64]]) -> (f64, Vec<(usize, usize, f64)>) {
    let m = points.len();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in i + 1..m {
            pairs.push((libm::sqrt(sq_dist(points[i], points[j])), i, j));
        }
    }
    let n = pairs.len();
    let cmp = |a: &(f64, usize, usize), b: &(f64, usize, usize)| {
        a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
    };
    if n % 2 == 1 {
        let (_, &mut mid, _) = pairs.select_nth_unstable_by(n / 2, cmp);
        (mid.0, vec![(mid.1, mid.2, 1.0)])
    } else {
        let (lower, &mut hi, _) = pairs.select_nth_unstable_by(n / 2, cmp);
        let lo = *lower.iter().max_by(|a, b| cmp(a, b)).unwrap();
        ((lo.0 + hi.0) / 2.0, vec![(lo.1, lo.2, 0.5), (hi.1, hi.2, 0.5)])
    }
}

/// Multi-scale MMD^2 between `x` and `y` (slices of `dim`-vectors).
///
/// With `with_grad`, gradients include the dependence of the median bandwidth
/// on the points, so they match finite differences away from ties.
pub fn mmd2(x: &[&[f64]], y: &[&[f64]], with_grad: bool) -> Mmd {
    let (n0, n1) = (x.len(), y.len());
    assert!(n0 >= 1 && n1 >= 1 && n0 + n1 >= 2, "mmd2 needs points in both sets");
    let dim = x[0].len();
    let points: Vec<&[f64]> = x.iter().chain(y.iter()).copied().collect();
    let m = points.len();

    let (median, median_pairs) = median_distance(&points);
    let degenerate = !(median > 0.0);
    let sigma0 = if degenerate { 1.0 } else { median };
    // Per-scale inverse bandwidth terms 1 / (2 sigma_s^2).
    let inv: Vec<f64> = SCALES
        .iter()
        .map(|&s| 1.0 / (2.0 * sigma0 * sigma0 * libm::pow(4.0, s as f64)))
        .collect();

    let coef = |i: usize, j: usize| -> f64 {
        match (i < n0, j < n0) {
            (true, true) => 1.0 / (n0 * n0) as f64,
            (false, false) => 1.0 / (n1 * n1) as f64,
            _ => -1.0 / (n0 * n1) as f64,
        }
    };

    let mut value = 0.0;
    let mut grad = if with_grad { vec![0.0; m * dim] } else { Vec::new() };
    let mut d_sigma0 = 0.0;
    for i in 0..m {
        for j in 0..m {
            let c = coef(i, j);
            let d2 = sq_dist(points[i], points[j]);
            let mut k = 0.0;
            let mut dk_dd2 = 0.0;
            for &a in &inv {
                let e = libm::exp(-d2 * a);
                k += e;
                dk_dd2 -= a * e;
            }
            value += c * k;
            if with_grad && i != j {
                // d k / d sigma0 = sum_s e_s * d2 * 2 a_s / sigma0
                let mut dk_ds = 0.0;
                for &a in &inv {
                    dk_ds += libm::exp(-d2 * a) * d2 * 2.0 * a / sigma0;
                }
                d_sigma0 += c * dk_ds;
                // ordered pairs (i, j) and (j, i) are both visited
                let scale = 2.0 * c * dk_dd2;
                for t in 0..dim {
                    grad[i * dim + t] += scale * (points[i][t] - points[j][t]);
                }
            }
        }
    }
    // pair (i, j) and (j, i) each contribute 2 (p_i - p_j) dD/dp_i; the loop
    // above adds one ordered pair per visit, so double once here.
    if with_grad {
        for g in grad.iter_mut() {
            *g *= 2.0;
        }
        if !degenerate {
            for &(a, b, weight) in &median_pairs {
                let d = libm::sqrt(sq_dist(points[a], points[b]));
                if d > 0.0 {
                    for t in 0..dim {
                        let u = weight * d_sigma0 * (points[a][t] - points[b][t]) / d;
                        grad[a * dim + t] += u;
                        grad[b * dim + t] -= u;
                    }
                }
            }
        }
    }
    let grad_y = if with_grad { grad.split_off(n0 * dim) } else { Vec::new() };
    Mmd {
        value,
        sigma0,
        degenerate_bandwidth: degenerate,
        grad_x: grad,
        grad_y,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn as_refs(v: &[Vec<f64>]) -> Vec<&[f64]> {
        v.iter().map(|p| p.as_slice()).collect()
    }

    #[test]
    fn identical_sets_vanish() {
        let x = vec![vec![0.0, 1.0], vec![2.0, -1.0], vec![0.5, 0.5]];
        let r = mmd2(&as_refs(&x), &as_refs(&x), false);
        assert!(r.value.abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        // 7 points (odd pair count, single median pair)
        check_fd(
            vec![vec![0.1, 0.7], vec![1.3, -0.4], vec![0.2, 0.9]],
            vec![vec![2.0, 0.3], vec![1.1, 1.7], vec![2.6, -0.2], vec![0.9, 0.05]],
        );
        // 5 one-dimensional points (even pair count, averaged median)
        check_fd(
            vec![vec![0.1], vec![1.3], vec![0.25]],
            vec![vec![2.0], vec![-0.7]],
        );
    }

    fn check_fd(x: Vec<Vec<f64>>, y: Vec<Vec<f64>>) {
        let dim = x[0].len();
        let r = mmd2(&as_refs(&x), &as_refs(&y), true);
        let h = 1e-6;
        for which in 0..2 {
            let base = if which == 0 { &x } else { &y };
            for i in 0..base.len() {
                for t in 0..dim {
                    let eval = |delta: f64| {
                        let (mut xx, mut yy) = (x.clone(), y.clone());
                        if which == 0 {
                            xx[i][t] += delta;
                        } else {
                            yy[i][t] += delta;
                        }
                        mmd2(&as_refs(&xx), &as_refs(&yy), false).value
                    };
                    let fd = (eval(h) - eval(-h)) / (2.0 * h);
                    let an = if which == 0 { r.grad_x[i * dim + t] } else { r.grad_y[i * dim + t] };
                    assert!((fd - an).abs() < 1e-7, "{which} {i} {t}: {fd} vs {an}");
                }
            }
        }
    }
}
