//! Sequential minimal optimization for the C-SVM dual with per-sample
//! upper bounds, maximal violating pair selection and an LRU row cache.

use std::collections::VecDeque;

const TAU: f64 = 1e-12;

/// A binary problem with labels `+1` / `-1` and per-sample bounds.
pub struct BinaryProblem<'a> {
    pub x: &'a [&'a [f64]],
    pub y: &'a [f64],
    pub upper: &'a [f64],
    pub gamma: f64,
}

#[derive(Debug, Clone)]
pub struct BinarySolution {
    pub alpha: Vec<f64>,
    /// Decision value is `Σ y_i α_i K(x_i, x) − rho`.
    pub rho: f64,
    pub iterations: usize,
    pub kkt_violation: f64,
    pub converged: bool,
}

pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
    (-gamma * d2).exp()
}

struct RowCache {
    rows: Vec<Option<Vec<f64>>>,
    queue: VecDeque<usize>,
    capacity: usize,
}

impl RowCache {
    fn new(n: usize, cache_bytes: usize) -> Self {
        let capacity = (cache_bytes / (8 * n.max(1))).max(2);
        RowCache {
            rows: vec![None; n],
            queue: VecDeque::new(),
            capacity,
        }
    }

    /// Row `i` of `Q_ij = y_i y_j K(x_i, x_j)`.
    fn row(&mut self, i: usize, p: &BinaryProblem<'_>) -> &[f64] {
        if self.rows[i].is_none() {
            if self.queue.len() >= self.capacity {
                let old = self.queue.pop_front().expect("non-empty queue");
                self.rows[old] = None;
            }
            let xi = p.x[i];
            let yi = p.y[i];
            let r = p.x.iter().zip(p.y).map(|(xj, &yj)| yi * yj * rbf(xi, xj, p.gamma)).collect();
            self.rows[i] = Some(r);
            self.queue.push_back(i);
        }
        self.rows[i].as_deref().expect("row cached")
    }
}

/// `m(α) − M(α)`: the largest KKT violation for the current gradient.
fn violation(y: &[f64], alpha: &[f64], upper: &[f64], grad: &[f64]) -> (f64, Option<usize>, Option<usize>) {
    let mut gmax = f64::NEG_INFINITY;
    let mut gmin = f64::INFINITY;
    let (mut imax, mut imin) = (None, None);
    for t in 0..y.len() {
        let v = -y[t] * grad[t];
        let in_up = (y[t] > 0.0 && alpha[t] < upper[t]) || (y[t] < 0.0 && alpha[t] > 0.0);
        let in_low = (y[t] > 0.0 && alpha[t] > 0.0) || (y[t] < 0.0 && alpha[t] < upper[t]);
        if in_up && v > gmax {
            gmax = v;
            imax = Some(t);
        }
        if in_low && v < gmin {
            gmin = v;
            imin = Some(t);
        }
    }
    (gmax - gmin, imax, imin)
}

fn gradient(p: &BinaryProblem<'_>, alpha: &[f64]) -> Vec<f64> {
    let n = p.y.len();
    (0..n)
        .map(|i| {
            let mut g = -1.0;
            for j in 0..n {
                if alpha[j] != 0.0 {
                    g += p.y[i] * p.y[j] * rbf(p.x[i], p.x[j], p.gamma) * alpha[j];
                }
            }
            g
        })
        .collect()
}

/// KKT violation of `alpha` recomputed from scratch.
pub fn kkt_violation(p: &BinaryProblem<'_>, alpha: &[f64]) -> f64 {
    let g = gradient(p, alpha);
    violation(p.y, alpha, p.upper, &g).0.max(0.0)
}

fn compute_rho(y: &[f64], alpha: &[f64], upper: &[f64], grad: &[f64]) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum_free) = (0usize, 0.0);
    for i in 0..y.len() {
        let yg = y[i] * grad[i];
        if alpha[i] >= upper[i] {
            if y[i] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[i] <= 0.0 {
            if y[i] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    if free > 0 {
        sum_free / free as f64
    } else {
        (ub + lb) / 2.0
    }
}

pub fn solve(p: &BinaryProblem<'_>, eps: f64, max_iter: usize, cache_bytes: usize) -> BinarySolution {
    let n = p.y.len();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut cache = RowCache::new(n, cache_bytes);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let (gap, i, j) = violation(p.y, &alpha, p.upper, &grad);
        let (Some(i), Some(j)) = (i, j) else {
            converged = true;
            break;
        };
        if gap <= eps {
            // Confirm against a freshly computed gradient so accumulated
            // rounding cannot hide a violation.
            let fresh = gradient(p, &alpha);
            if violation(p.y, &alpha, p.upper, &fresh).0 <= eps {
                grad = fresh;
                converged = true;
                break;
            }
            grad = fresh;
            continue;
        }
        iterations += 1;
        let qi = cache.row(i, p).to_vec();
        let qj = cache.row(j, p).to_vec();
        let (ci, cj) = (p.upper[i], p.upper[j]);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if p.y[i] != p.y[j] {
            // K(x, x) = 1 for the RBF kernel.
            let quad = (2.0 + 2.0 * qi[j]).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > ci - cj {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = ci - diff;
                }
            } else if alpha[j] > cj {
                alpha[j] = cj;
                alpha[i] = cj + diff;
            }
        } else {
            let quad = (2.0 - 2.0 * qi[j]).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > ci {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = sum - ci;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cj {
                if alpha[j] > cj {
                    alpha[j] = cj;
                    alpha[i] = sum - cj;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for k in 0..n {
            grad[k] += qi[k] * di + qj[k] * dj;
        }
    }
    if !converged {
        log::warn!("SMO stopped after {iterations} iterations without reaching tolerance {eps}");
    }
    let rho = compute_rho(p.y, &alpha, p.upper, &grad);
    let kkt = violation(p.y, &alpha, p.upper, &grad).0.max(0.0);
    BinarySolution {
        alpha,
        rho,
        iterations,
        kkt_violation: kkt,
        converged,
    }
}
