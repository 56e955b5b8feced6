//! Small quadrature toolkit shared by operator assembly and the direct
//! principal-value integrators.

use std::f64::consts::PI;

/// Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn scaled(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let c = 0.5 * (a + b);
        let r = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (c + r * x, r * w))
    }

    /// Integral of `f` over `[a, b]`.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let c = 0.5 * (a + b);
        let r = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(c + r * x))
            .sum::<f64>()
            * r
    }

    /// Composite rule over `panels` equal sub-intervals.
    pub fn composite(&self, a: f64, b: f64, panels: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|k| {
                let lo = a + k as f64 * h;
                self.integrate(lo, lo + h, &mut f)
            })
            .sum()
    }

    /// Tensor rule over a rectangle split into `sub x sub` panels.
    pub fn rect(
        &self,
        x: (f64, f64),
        y: (f64, f64),
        sub: usize,
        mut f: impl FnMut(f64, f64) -> f64,
    ) -> f64 {
        let hx = (x.1 - x.0) / sub as f64;
        let hy = (y.1 - y.0) / sub as f64;
        let mut total = 0.0;
        for a in 0..sub {
            let cx = x.0 + (a as f64 + 0.5) * hx;
            for b in 0..sub {
                let cy = y.0 + (b as f64 + 0.5) * hy;
                let mut acc = 0.0;
                for (xi, wi) in self.nodes.iter().zip(&self.weights) {
                    let px = cx + 0.5 * hx * xi;
                    for (yj, wj) in self.nodes.iter().zip(&self.weights) {
                        acc += wi * wj * f(px, cy + 0.5 * hy * yj);
                    }
                }
                total += acc * 0.25 * hx * hy;
            }
        }
        total
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// `∫_a^b ρ^p dρ` for `0 <= a < b` (with `p > -1` when `a = 0`).
pub fn pow_integral(p: f64, a: f64, b: f64) -> f64 {
    let q = p + 1.0;
    if q.abs() < 1e-13 {
        (b / a).ln()
    } else if a == 0.0 {
        b.powf(q) / q
    } else {
        (b.powf(q) - a.powf(q)) / q
    }
}

/// `∫_a^b (α + βρ) ρ^p dρ`.
pub fn linear_pow_integral(alpha: f64, beta: f64, p: f64, a: f64, b: f64) -> f64 {
    alpha * pow_integral(p, a, b) + beta * pow_integral(p + 1.0, a, b)
}
