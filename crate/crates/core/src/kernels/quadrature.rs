//! Gauss–Legendre rules on `[-1, 1]`, single and composite.

use crate::error::{invalid, Result};

/// A quadrature rule on `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Total number of nodes.
    pub order: usize,
}

impl QuadratureRule {
    /// `order`-point Gauss–Legendre rule. Nodes come from Newton iteration on
    /// `P_order` started at the Chebyshev-like guesses `cos(π(k - 1/4)/(n + 1/2))`.
    pub fn gauss_legendre(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(invalid("quadrature order must be positive"));
        }
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for k in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let step = p / d;
                x -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[k] = -x;
            nodes[n - 1 - k] = x;
            weights[k] = w;
            weights[n - 1 - k] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Ok(QuadratureRule {
            nodes,
            weights,
            order,
        })
    }

    /// `panels` equal sub-intervals of `[-1, 1]`, each with a
    /// `per_panel`-point Gauss–Legendre rule.
    pub fn composite(panels: usize, per_panel: usize) -> Result<Self> {
        if panels == 0 {
            return Err(invalid("composite rule needs at least one panel"));
        }
        let base = Self::gauss_legendre(per_panel)?;
        let h = 2.0 / panels as f64;
        let mut nodes = Vec::with_capacity(panels * per_panel);
        let mut weights = Vec::with_capacity(panels * per_panel);
        for p in 0..panels {
            let mid = -1.0 + h * (p as f64 + 0.5);
            for (x, w) in base.nodes.iter().zip(&base.weights) {
                nodes.push(mid + 0.5 * h * x);
                weights.push(0.5 * h * w);
            }
        }
        Ok(QuadratureRule {
            order: nodes.len(),
            nodes,
            weights,
        })
    }

    /// Nodes and weights mapped affinely onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (mid + half * x, half * w))
    }

    /// `∫_a^b f`.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
