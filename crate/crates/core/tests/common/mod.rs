//! Independent numerical references shared by the integration tests.

#![allow(dead_code)]

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on the
/// three-term recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j - 1) as f64 * z * p2 - (j - 1) as f64 * p3) / j as f64;
            }
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Composite rule on [a, b] with `panels` equal panels of `order` nodes.
pub fn composite(a: f64, b: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let lo = a + p as f64 * h;
        for (xi, wi) in x.iter().zip(&w) {
            out.push((lo + 0.5 * h * (xi + 1.0), 0.5 * h * wi));
        }
    }
    out
}

pub fn mat_t_vec(r: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|i| (0..n).map(|k| r[k][i] * v[k]).sum())
        .collect()
}

/// `∫∫ exp(-γ|R₁ᵀ[x₁:t₁] - R₂ᵀ[x₂:t₂]|²) dt₁ dt₂` over the chords, by
/// composite Gauss-Legendre with `panels` panels per axis.
pub fn gram_quadrature(
    gamma: f64,
    r1: &[Vec<f64>],
    r2: &[Vec<f64>],
    x1: &[f64],
    x2: &[f64],
    panels: usize,
) -> f64 {
    let w1 = (1.0 - x1.iter().map(|v| v * v).sum::<f64>())
        .max(0.0)
        .sqrt();
    let w2 = (1.0 - x2.iter().map(|v| v * v).sum::<f64>())
        .max(0.0)
        .sqrt();
    if w1 == 0.0 || w2 == 0.0 {
        return 0.0;
    }
    let q1 = composite(-w1, w1, panels, 16);
    let q2 = composite(-w2, w2, panels, 16);
    let line = |r: &[Vec<f64>], x: &[f64], t: f64| {
        let mut v = x.to_vec();
        v.push(t);
        mat_t_vec(r, &v)
    };
    let p2: Vec<(Vec<f64>, f64)> = q2.iter().map(|&(t, w)| (line(r2, x2, t), w)).collect();
    let mut acc = 0.0;
    for &(t1, wa) in &q1 {
        let z1 = line(r1, x1, t1);
        let mut inner = 0.0;
        for (z2, wb) in &p2 {
            let d2: f64 = z1.iter().zip(z2).map(|(a, b)| (a - b) * (a - b)).sum();
            inner += wb * (-gamma * d2).exp();
        }
        acc += wa * inner;
    }
    acc
}

/// Doubles the panel count until two successive values agree to `tol`.
/// Returns the value, the last difference, and the final panel count.
pub fn converged_gram_quadrature(
    gamma: f64,
    r1: &[Vec<f64>],
    r2: &[Vec<f64>],
    x1: &[f64],
    x2: &[f64],
    tol: f64,
) -> (f64, f64, usize) {
    let mut panels = 2;
    let mut prev = gram_quadrature(gamma, r1, r2, x1, x2, panels);
    loop {
        panels *= 2;
        let v = gram_quadrature(gamma, r1, r2, x1, x2, panels);
        let delta = (v - prev).abs();
        if delta <= tol || panels >= 512 {
            return (v, delta, panels);
        }
        prev = v;
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&d) / norm(b)
}

/// Least-squares slope of `ln t` against `ln n`.
pub fn loglog_slope(ns: &[f64], ts: &[f64]) -> f64 {
    let xs: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
    let ys: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Standard normal draws by Box-Muller from a small xorshift generator, so
/// Monte-Carlo references share no code with the library's noise model.
pub struct Normal {
    state: u64,
    spare: Option<f64>,
}

impl Normal {
    pub fn new(seed: u64) -> Self {
        Normal {
            state: seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1,
            spare: None,
        }
    }

    fn uniform(&mut self) -> f64 {
        // xorshift64*
        self.state ^= self.state >> 12;
        self.state ^= self.state << 25;
        self.state ^= self.state >> 27;
        let v = self.state.wrapping_mul(0x2545_F491_4F6C_DD1D);
        ((v >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    }

    pub fn sample(&mut self) -> f64 {
        if let Some(s) = self.spare.take() {
            return s;
        }
        let (u, v) = (self.uniform(), self.uniform());
        let r = (-2.0 * u.ln()).sqrt();
        let t = 2.0 * PI * v;
        self.spare = Some(r * t.sin());
        r * t.cos()
    }
}

/// Dense symmetric matrix from a closure.
pub fn dense(n: usize, f: impl Fn(usize, usize) -> f64) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| f(i, j)).collect()).collect()
}

pub fn mat_vec(a: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum())
        .collect()
}

/// Solves the SPD system `a x = b` by a plain Cholesky factorization.
pub fn cholesky_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            l[i][j] = if i == j { s.sqrt() } else { s / l[j][j] };
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        y[i] = (b[i] - (0..i).map(|k| l[i][k] * y[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        x[i] = (y[i] - (i + 1..n).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    x
}
