//! Reference computations used as test oracles. Everything here is written
//! directly from the defining equations and never calls into the solver paths
//! it is used to check.

#![allow(dead_code)]

use ndarray::Array2;

/// Dense Gaussian elimination with partial pivoting; solves `m x = b`.
pub fn solve_dense(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, piv);
        b.swap(col, piv);
        let d = m[col][col];
        for row in col + 1..n {
            let f = m[row][col] / d;
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                m[row][c] -= f * m[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for c in row + 1..n {
            acc -= m[row][c] * x[c];
        }
        x[row] = acc / m[row][row];
    }
    x
}

/// Circular convolution by the defining double sum.
pub fn spatial_circ_conv(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (h, w) = a.dim();
    Array2::from_shape_fn((h, w), |(i, j)| {
        let mut acc = 0.0;
        for u in 0..h {
            for v in 0..w {
                acc += a[[u, v]] * b[[(i + h - u) % h, (j + w - v) % w]];
            }
        }
        acc
    })
}

/// Embeds a small filter at the top-left of an `h x w` grid.
pub fn embed(f: &Array2<f64>, h: usize, w: usize) -> Array2<f64> {
    let mut p = Array2::zeros((h, w));
    for ((i, j), v) in f.indexed_iter() {
        p[[i, j]] = *v;
    }
    p
}

/// Minimizer of `1/2 ||sum_k d_k * y_k - s||^2 + rho/2 ||y - z||^2` by assembling
/// and solving the `(KP) x (KP)` normal equations.
pub fn dense_y_update(
    s: &Array2<f64>,
    z: &[Array2<f64>],
    filters: &[Array2<f64>],
    rho: f64,
) -> Vec<Array2<f64>> {
    let (h, w) = s.dim();
    let p = h * w;
    let k = filters.len();
    // column (kk, u, v) of the synthesis matrix is d_kk shifted to (u, v)
    let mut a = vec![vec![0.0; k * p]; p];
    for (kk, f) in filters.iter().enumerate() {
        let d = embed(f, h, w);
        for u in 0..h {
            for v in 0..w {
                let col = kk * p + u * w + v;
                for i in 0..h {
                    for j in 0..w {
                        a[i * w + j][col] = d[[(i + h - u) % h, (j + w - v) % w]];
                    }
                }
            }
        }
    }
    let n = k * p;
    let mut m = vec![vec![0.0; n]; n];
    let mut rhs = vec![0.0; n];
    for r in 0..n {
        for c in 0..n {
            let mut acc = 0.0;
            for row in a.iter() {
                acc += row[r] * row[c];
            }
            m[r][c] = acc + if r == c { rho } else { 0.0 };
        }
        let mut acc = 0.0;
        for (pix, row) in a.iter().enumerate() {
            acc += row[r] * s[[pix / w, pix % w]];
        }
        let (kk, pix) = (r / p, r % p);
        rhs[r] = acc + rho * z[kk][[pix / w, pix % w]];
    }
    let y = solve_dense(m, rhs);
    (0..k)
        .map(|kk| Array2::from_shape_fn((h, w), |(i, j)| y[kk * p + i * w + j]))
        .collect()
}

/// Smooth surrogate of a nonsmooth penalty: value, gradient and Hessian at `x`
/// for smoothing parameter `mu`.
pub type Surrogate = dyn Fn(&[f64], f64) -> (f64, Vec<f64>, Vec<Vec<f64>>);

/// Minimizes `1/2 ||x - a||^2 + g(x)` by Newton's method on a smoothed `g`,
/// driving the smoothing parameter from `1e-1` down to `1e-13`.
pub fn smoothed_newton_prox(a: &[f64], g: &Surrogate) -> Vec<f64> {
    let n = a.len();
    let mut x = a.to_vec();
    let total = |x: &[f64], mu: f64| {
        let (gv, gg, gh) = g(x, mu);
        let mut val = gv;
        let mut grad = gg;
        let mut hess = gh;
        for i in 0..n {
            val += 0.5 * (x[i] - a[i]).powi(2);
            grad[i] += x[i] - a[i];
            hess[i][i] += 1.0;
        }
        (val, grad, hess)
    };
    let mut mu = 1e-1;
    while mu >= 1e-13 {
        for _ in 0..200 {
            let (val, grad, hess) = total(&x, mu);
            let step = solve_dense(hess, grad.iter().map(|v| -v).collect());
            let slope: f64 = grad.iter().zip(&step).map(|(g, s)| g * s).sum();
            let mut t = 1.0;
            let mut accepted = false;
            while t > 1e-20 {
                let cand: Vec<f64> = x.iter().zip(&step).map(|(x, s)| x + t * s).collect();
                if total(&cand, mu).0 <= val + 1e-4 * t * slope {
                    x = cand;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            let size = step.iter().map(|v| v * v).sum::<f64>().sqrt() * t;
            if !accepted || size < 1e-15 {
                break;
            }
        }
        mu *= 0.1;
    }
    x
}

/// `tau * sum_i sqrt(x_i^2 + mu^2)`.
pub fn smooth_l1(tau: f64) -> Box<Surrogate> {
    Box::new(move |x: &[f64], mu: f64| {
        let n = x.len();
        let mut v = 0.0;
        let mut g = vec![0.0; n];
        let mut h = vec![vec![0.0; n]; n];
        for i in 0..n {
            let r = (x[i] * x[i] + mu * mu).sqrt();
            v += tau * r;
            g[i] = tau * x[i] / r;
            h[i][i] = tau * mu * mu / (r * r * r);
        }
        (v, g, h)
    })
}

/// `kappa * sqrt(||x||^2 + mu^2)`.
pub fn smooth_l2(kappa: f64) -> Box<Surrogate> {
    Box::new(move |x: &[f64], mu: f64| {
        let n = x.len();
        let r = (x.iter().map(|v| v * v).sum::<f64>() + mu * mu).sqrt();
        let g = x.iter().map(|v| kappa * v / r).collect();
        let mut h = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let id = if i == j { 1.0 } else { 0.0 };
                h[i][j] = kappa * (id / r - x[i] * x[j] / (r * r * r));
            }
        }
        (kappa * r, g, h)
    })
}

/// `tau * mu * log sum_i (exp(x_i / mu) + exp(-x_i / mu))`, a smooth max of `|x_i|`.
pub fn smooth_linf(tau: f64) -> Box<Surrogate> {
    Box::new(move |x: &[f64], mu: f64| {
        let n = x.len();
        let vals: Vec<f64> = x.iter().flat_map(|&v| [v, -v]).collect();
        let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = vals.iter().map(|v| ((v - m) / mu).exp()).collect();
        let z: f64 = e.iter().sum();
        let p: Vec<f64> = e.iter().map(|v| v / z).collect();
        let value = tau * (m + mu * z.ln());
        let g: Vec<f64> = (0..n).map(|i| tau * (p[2 * i] - p[2 * i + 1])).collect();
        let q: Vec<f64> = (0..n).map(|i| p[2 * i] - p[2 * i + 1]).collect();
        let mut h = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let diag = if i == j { p[2 * i] + p[2 * i + 1] } else { 0.0 };
                h[i][j] = tau * (diag - q[i] * q[j]) / mu;
            }
        }
        (value, g, h)
    })
}

/// Sum of two surrogates.
pub fn sum(a: Box<Surrogate>, b: Box<Surrogate>) -> Box<Surrogate> {
    Box::new(move |x: &[f64], mu: f64| {
        let (va, ga, ha) = a(x, mu);
        let (vb, gb, hb) = b(x, mu);
        let g = ga.iter().zip(&gb).map(|(p, q)| p + q).collect();
        let h = ha
            .iter()
            .zip(&hb)
            .map(|(r, s)| r.iter().zip(s).map(|(p, q)| p + q).collect())
            .collect();
        (va + vb, g, h)
    })
}

/// Exact nonsmooth prox objectives for comparing candidate points.
pub fn l1(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

pub fn l2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn linf(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn prox_objective(x: &[f64], a: &[f64], penalty: impl Fn(&[f64]) -> f64) -> f64 {
    0.5 * x.iter().zip(a).map(|(p, q)| (p - q).powi(2)).sum::<f64>() + penalty(x)
}

pub fn max_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

/// SSIM by explicit 2-D Gaussian windows at every valid position.
pub fn ssim_reference(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let (h, w) = a.dim();
    let n = 11;
    let mut win = Array2::from_shape_fn((n, n), |(i, j)| {
        let (x, y) = (i as f64 - 5.0, j as f64 - 5.0);
        (-(x * x + y * y) / (2.0 * 1.5 * 1.5)).exp()
    });
    let total = win.sum();
    win /= total;
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut acc = 0.0;
    for i in 0..=h - n {
        for j in 0..=w - n {
            let (mut ma, mut mb) = (0.0, 0.0);
            for u in 0..n {
                for v in 0..n {
                    ma += win[[u, v]] * a[[i + u, j + v]];
                    mb += win[[u, v]] * b[[i + u, j + v]];
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for u in 0..n {
                for v in 0..n {
                    let (da, db) = (a[[i + u, j + v]] - ma, b[[i + u, j + v]] - mb);
                    va += win[[u, v]] * da * da;
                    vb += win[[u, v]] * db * db;
                    cov += win[[u, v]] * da * db;
                }
            }
            acc += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
    }
    acc / ((h - n + 1) * (w - n + 1)) as f64
}
