//! Reference implementations that share no code with the library.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Box-Muller normal draw.
pub fn normal(rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.random::<f64>().max(1e-300);
    let v: f64 = rng.random();
    (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
}

/// Group-lasso instance in score coordinates: `scores[j]` is `n × m`
/// row-major, `theta` the eigenvalues.
#[derive(Clone, Debug)]
pub struct Instance {
    pub n: usize,
    pub p: usize,
    pub m: usize,
    pub theta: Vec<f64>,
    pub scores: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Instance {
    pub fn fitted(&self, b: &[Vec<f64>]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                (0..self.p)
                    .map(|j| {
                        (0..self.m)
                            .map(|l| self.scores[j][i * self.m + l] * b[j][l])
                            .sum::<f64>()
                    })
                    .sum()
            })
            .collect()
    }

    pub fn k_norm(&self, b: &[f64]) -> f64 {
        b.iter()
            .zip(&self.theta)
            .map(|(x, t)| x * x / t)
            .sum::<f64>()
            .sqrt()
    }

    /// `(1/2n)||y − Σ S_j b_j||² + λ Σ w_j ||b_j||_K`.
    pub fn objective(&self, b: &[Vec<f64>], lambda: f64) -> f64 {
        let f = self.fitted(b);
        let rss: f64 = self.y.iter().zip(&f).map(|(y, f)| (y - f) * (y - f)).sum();
        let pen: f64 = (0..self.p)
            .map(|j| self.weights[j] * self.k_norm(&b[j]))
            .sum();
        rss / (2.0 * self.n as f64) + lambda * pen
    }

    /// Smallest λ with an all-zero solution, from the subgradient condition.
    pub fn lambda_max(&self) -> f64 {
        (0..self.p)
            .map(|j| {
                let g: Vec<f64> = (0..self.m)
                    .map(|l| {
                        (0..self.n)
                            .map(|i| self.scores[j][i * self.m + l] * self.y[i])
                            .sum::<f64>()
                            / self.n as f64
                    })
                    .collect();
                // Dual norm of ||·||_K is sqrt(Σ θ g²).
                g.iter()
                    .zip(&self.theta)
                    .map(|(g, t)| t * g * g)
                    .sum::<f64>()
                    .sqrt()
                    / self.weights[j]
            })
            .fold(0.0, f64::max)
    }
}

/// FISTA with restart on the reparametrization `a = Θ^{-1/2} b`, where the
/// penalty is a plain group lasso with a closed-form prox.
pub fn proximal_gradient(inst: &Instance, lambda: f64, iters: usize) -> Vec<Vec<f64>> {
    let (n, p, m) = (inst.n, inst.p, inst.m);
    let sq: Vec<f64> = inst.theta.iter().map(|t| t.sqrt()).collect();
    // Design in `a` coordinates: column (j, l) = S_j[:, l] · sqrt(θ_l).
    let d = p * m;
    let z: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..d)
                .map(|c| {
                    let (j, l) = (c / m, c % m);
                    inst.scores[j][i * m + l] * sq[l]
                })
                .collect()
        })
        .collect();
    let grad = |a: &[f64]| -> Vec<f64> {
        let r: Vec<f64> = (0..n)
            .map(|i| z[i].iter().zip(a).map(|(x, y)| x * y).sum::<f64>() - inst.y[i])
            .collect();
        (0..d)
            .map(|c| (0..n).map(|i| z[i][c] * r[i]).sum::<f64>() / n as f64)
            .collect()
    };
    // Lipschitz constant by power iteration on ZᵀZ / n.
    let mut v = vec![1.0; d];
    let mut lip = 0.0;
    for _ in 0..500 {
        let zv: Vec<f64> = (0..n)
            .map(|i| z[i].iter().zip(&v).map(|(x, y)| x * y).sum())
            .collect();
        let w: Vec<f64> = (0..d)
            .map(|c| (0..n).map(|i| z[i][c] * zv[i]).sum::<f64>() / n as f64)
            .collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        lip = norm / v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = w.iter().map(|x| x / norm).collect();
    }
    let step = 1.0 / (lip * 1.01 + 1e-300);
    let prox = |u: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; d];
        for j in 0..p {
            let g = &u[j * m..(j + 1) * m];
            let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            let t = step * lambda * inst.weights[j];
            if norm > t {
                for l in 0..m {
                    out[j * m + l] = g[l] * (1.0 - t / norm);
                }
            }
        }
        out
    };
    let to_b = |a: &[f64]| -> Vec<Vec<f64>> {
        (0..p)
            .map(|j| (0..m).map(|l| a[j * m + l] * sq[l]).collect())
            .collect()
    };
    let mut a = vec![0.0; d];
    let mut yk = a.clone();
    let mut tk: f64 = 1.0;
    let mut last = inst.objective(&to_b(&a), lambda);
    for _ in 0..iters {
        let g = grad(&yk);
        let u: Vec<f64> = yk.iter().zip(&g).map(|(y, g)| y - step * g).collect();
        let next = prox(&u);
        let obj = inst.objective(&to_b(&next), lambda);
        let t_next = (1.0 + (1.0 + 4.0 * tk * tk).sqrt()) / 2.0;
        if obj > last {
            // Restart momentum.
            yk = a.clone();
            tk = 1.0;
            continue;
        }
        yk = next
            .iter()
            .zip(&a)
            .map(|(x, o)| x + (tk - 1.0) / t_next * (x - o))
            .collect();
        let moved = next
            .iter()
            .zip(&a)
            .map(|(x, o)| (x - o).abs())
            .fold(0.0, f64::max);
        a = next;
        tk = t_next;
        last = obj;
        if moved < 1e-15 {
            break;
        }
    }
    to_b(&a)
}

/// Solves `s = ||c||_K · s / (s + λw)` for `s > 0` by bisection: the K-norm
/// of the fixed point `β = β̌ / (1 + λw / ||β||_K)`. Returns 0 when no
/// positive root exists.
pub fn shrink_norm_by_bisection(check: &[f64], theta: &[f64], lambda: f64, weight: f64) -> f64 {
    let c = check
        .iter()
        .zip(theta)
        .map(|(x, t)| x * x / t)
        .sum::<f64>()
        .sqrt();
    let t = lambda * weight;
    let phi = |s: f64| c * s / (s + t) - s;
    if c <= t {
        return 0.0;
    }
    // phi > 0 just above 0 and phi(c) < 0.
    let (mut lo, mut hi) = (0.0_f64, c);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if phi(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Eigenvalues of a symmetric matrix (row-major `g × g`) by cyclic Jacobi
/// rotations, descending, with eigenvectors as rows.
pub fn jacobi_eigen(a: &[f64], g: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut a = a.to_vec();
    let mut v = vec![0.0; g * g];
    for i in 0..g {
        v[i * g + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..g)
            .flat_map(|r| (0..g).filter(move |&c| c != r).map(move |c| (r, c)))
            .map(|(r, c)| a[r * g + c] * a[r * g + c])
            .sum();
        if off < 1e-30 {
            break;
        }
        for pi in 0..g {
            for q in pi + 1..g {
                let apq = a[pi * g + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a[pi * g + pi];
                let aqq = a[q * g + q];
                let tau = (aqq - app) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let t = if tau == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..g {
                    let akp = a[k * g + pi];
                    let akq = a[k * g + q];
                    a[k * g + pi] = c * akp - s * akq;
                    a[k * g + q] = s * akp + c * akq;
                }
                for k in 0..g {
                    let apk = a[pi * g + k];
                    let aqk = a[q * g + k];
                    a[pi * g + k] = c * apk - s * aqk;
                    a[q * g + k] = s * apk + c * aqk;
                }
                for k in 0..g {
                    let vkp = v[k * g + pi];
                    let vkq = v[k * g + q];
                    v[k * g + pi] = c * vkp - s * vkq;
                    v[k * g + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..g).collect();
    order.sort_by(|&i, &j| a[j * g + j].total_cmp(&a[i * g + i]));
    let values = order.iter().map(|&i| a[i * g + i]).collect();
    let vectors = order
        .iter()
        .map(|&i| (0..g).map(|k| v[k * g + i]).collect())
        .collect();
    (values, vectors)
}

/// Trapezoid weights on `g` equally spaced points of [0, 1].
pub fn trapezoid_weights(g: usize) -> Vec<f64> {
    let h = 1.0 / (g - 1) as f64;
    (0..g)
        .map(|k| if k == 0 || k == g - 1 { h / 2.0 } else { h })
        .collect()
}

/// Symmetrized operator matrix `W^{1/2} K W^{1/2}` for `exp(−(t−s)²/ρ)`.
pub fn gaussian_operator(g: usize, rho: f64) -> Vec<f64> {
    let w = trapezoid_weights(g);
    let t: Vec<f64> = (0..g).map(|k| k as f64 / (g - 1) as f64).collect();
    let mut a = vec![0.0; g * g];
    for r in 0..g {
        for c in 0..g {
            let d = t[r] - t[c];
            a[r * g + c] = (-d * d / rho).exp() * (w[r] * w[c]).sqrt();
        }
    }
    a
}

/// Random instance with `p, m ≤ 2`, `n ≤ 50` and a planted signal.
pub fn random_instance(rng: &mut impl Rng) -> Instance {
    let n = rng.random_range(8..=50);
    let p = rng.random_range(1..=2);
    let m = rng.random_range(1..=2);
    let mut theta: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
    theta.sort_by(|a, b| b.total_cmp(a));
    let scores: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..n * m).map(|_| normal(rng)).collect())
        .collect();
    let truth: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..m).map(|_| normal(rng)).collect())
        .collect();
    let mut inst = Instance {
        n,
        p,
        m,
        theta,
        scores,
        y: vec![0.0; n],
        weights: (0..p).map(|_| rng.random_range(0.5..2.0)).collect(),
    };
    let signal = inst.fitted(&truth);
    inst.y = signal.iter().map(|s| s + 0.5 * normal(rng)).collect();
    inst
}
