//! The fractional gradient of a field on Ω, sampled over all of ℝᵈ.
//!
//! `u` vanishes outside Ω but `∇ˢu` does not, and `∫_{ℝᵈ}|∇ˢu|² = ⟨u, (-Δ)ˢu⟩`
//! only when the exterior is included. The samples come in two groups:
//!
//! * a band around Ω on the half-spacing lattice (nodes, edge midpoints and
//!   cell centres). Sampling only at the nodes would miss the alternating
//!   mode: an odd kernel summed at integer offsets has a vanishing symbol at
//!   the Nyquist frequency. The band map is a convolution applied with FFTs.
//! * a graded polar rule over the rest of the exterior, stored as a dense
//!   matrix since `∇ˢu` is smooth there.
//!
//! With the tail correction enabled the graded rule runs out to where the
//! neglected energy is below `1e-7` of the monopole part; otherwise it stops
//! at the tail radius.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{weights, NonlocalOperator, OperatorKind};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::quadrature::GaussLegendre;

/// Minimum band width in grid spacings.
const MIN_BAND: usize = 8;
/// Band width as a fraction of diam(Ω).
const BAND_FRACTION: f64 = 0.25;

pub struct WholeSpaceGradient {
    grid: Arc<Grid>,
    band: Band,
    /// One `samples × nodes` block per component.
    far: Vec<DMatrix<f64>>,
    /// Quadrature weight of each sample, band first.
    weights: Vec<f64>,
}

struct Band {
    /// Half-lattice points per axis (`1` on the unused axis in 1D).
    extent: [usize; 2],
    pad: [usize; 2],
    spectra: Vec<Vec<Complex<f64>>>,
    node_slots: Vec<usize>,
    forward: [Arc<dyn Fft<f64>>; 2],
    inverse: [Arc<dyn Fft<f64>>; 2],
}

impl std::fmt::Debug for WholeSpaceGradient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WholeSpaceGradient")
            .field("band", &self.band.extent)
            .field("pad", &self.band.pad)
            .field("far", &self.far.first().map_or(0, |m| m.nrows()))
            .finish()
    }
}

impl WholeSpaceGradient {
    pub fn new(grad: &NonlocalOperator) -> Result<Self> {
        if grad.kind() != OperatorKind::Gradient {
            return Err(Error::KindMismatch {
                expected: "gradient",
                found: grad.kind().name(),
            });
        }
        let grid = grad.grid().clone();
        let s = grad.order();
        let mu = grad.constant();
        let d = grid.dim();
        let diam = grid.diameter();
        let h: Vec<f64> = grid.spacing().to_vec();
        let n: Vec<usize> = grid.nodes_per_axis().to_vec();
        let halo: Vec<usize> = h
            .iter()
            .map(|&hk| ((BAND_FRACTION * diam / hk).ceil() as usize).max(MIN_BAND))
            .collect();

        let band = Band::new(s, mu, &h, &n, &halo)?;
        let half_cell: f64 = h.iter().map(|hk| 0.5 * hk).product();
        let mut weights = vec![half_cell; band.len()];

        // lower corner of Ω and the band box (inset by a quarter spacing)
        let lo: Vec<f64> = (0..d).map(|k| grid.axis(k)[0] - 0.5 * h[k]).collect();
        let hi: Vec<f64> = (0..d)
            .map(|k| grid.axis(k)[n[k] - 1] + 0.5 * h[k])
            .collect();
        let band_lo: Vec<f64> = (0..d)
            .map(|k| lo[k] + 0.25 * h[k] - halo[k] as f64 * h[k])
            .collect();
        let band_hi: Vec<f64> = (0..d)
            .map(|k| hi[k] - 0.25 * h[k] + halo[k] as f64 * h[k])
            .collect();
        let centre: Vec<f64> = (0..d).map(|k| 0.5 * (lo[k] + hi[k])).collect();
        let reach = if grad.params().tail_correction {
            // monopole energy outside radius ρ decays like ρ^{-(d+2s)}
            diam * 1e7f64.powf(1.0 / (d as f64 + 2.0 * s))
        } else {
            grad.params().tail_radius(&grid)
        };
        let width = halo
            .iter()
            .zip(&h)
            .map(|(&m, hk)| m as f64 * hk)
            .fold(f64::INFINITY, f64::min);

        let (points, far_weights) = if d == 1 {
            far_points_1d(band_lo[0], band_hi[0], centre[0], reach, width)
        } else {
            far_points_2d(
                [band_lo[0], band_lo[1]],
                [band_hi[0], band_hi[1]],
                [centre[0], centre[1]],
                reach,
                width,
            )
        };
        weights.extend_from_slice(&far_weights);

        let nodes: Vec<[f64; 2]> = (0..grid.len()).map(|i| grid.coord(i)).collect();
        let rows: Vec<Vec<[f64; 2]>> = points
            .par_iter()
            .map(|x| {
                nodes
                    .iter()
                    .map(|y| {
                        if d == 1 {
                            let v = mu
                                * h[0].powf(-s)
                                * weights::hat_weight_1d(s, (y[0] - x[0]) / h[0]);
                            [v, 0.0]
                        } else {
                            let o = [y[0] - x[0], y[1] - x[1]];
                            weights::far_hat_weight_2d(s, h[0], h[1], o).map(|v| mu * v)
                        }
                    })
                    .collect()
            })
            .collect();
        let far = (0..d)
            .map(|c| DMatrix::from_fn(points.len(), nodes.len(), |q, j| rows[q][j][c]))
            .collect();

        Ok(Self {
            grid,
            band,
            far,
            weights,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Number of sample points.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Quadrature weight of each sample.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `∇ˢu` at every sample, one vector per component.
    pub fn apply(&self, u: &[f64]) -> Vec<Vec<f64>> {
        let mut out = self.band.apply(u);
        let uv = DVector::from_column_slice(u);
        for (comp, m) in out.iter_mut().zip(&self.far) {
            comp.extend((m * &uv).iter());
        }
        out
    }

    /// Adjoint of [`WholeSpaceGradient::apply`] under the plain Euclidean
    /// pairings: `Σ_c Kᵀ_c ψ_c` at the nodes of Ω.
    pub fn adjoint(&self, psi: &[Vec<f64>]) -> Vec<f64> {
        let nb = self.band.len();
        let band: Vec<&[f64]> = psi.iter().map(|p| &p[..nb]).collect();
        let mut out = DVector::from_vec(self.band.adjoint(&band));
        for (p, m) in psi.iter().zip(&self.far) {
            let tail = DVector::from_column_slice(&p[nb..]);
            out += m.tr_mul(&tail);
        }
        out.data.into()
    }
}

impl Band {
    fn new(s: f64, mu: f64, h: &[f64], n: &[usize], halo: &[usize]) -> Result<Self> {
        let d = h.len();
        let mut extent = [1usize; 2];
        for k in 0..d {
            extent[k] = 2 * n[k] - 1 + 4 * halo[k];
        }
        // node-to-sample offsets span ±(extent - 1)
        let pad = extent.map(|e| {
            if e > 1 {
                (2 * e - 1).next_power_of_two()
            } else {
                1
            }
        });
        let len = pad[0] * pad[1];
        let wrap = |m: i64, p: usize| m.rem_euclid(p as i64) as usize;

        // reversed kernel K'(m) = K(-m) on the padded torus
        let mut kernels = vec![vec![Complex::new(0.0, 0.0); len]; d];
        if d == 1 {
            let scale = mu * h[0].powf(-s);
            for m in 1..extent[0] as i64 {
                let v = scale * weights::hat_weight_1d(s, 0.5 * m as f64);
                kernels[0][wrap(-m, pad[0])].re = v;
                kernels[0][wrap(m, pad[0])].re = -v;
            }
        } else {
            let (rx, ry) = (extent[0] - 1, extent[1] - 1);
            let t = weights::half_lattice_gradient_2d(s, h[0], h[1], rx, ry);
            for my in -(ry as i64)..=ry as i64 {
                for mx in -(rx as i64)..=rx as i64 {
                    let a = t.get(mx, my);
                    let idx = wrap(-mx, pad[0]) + pad[0] * wrap(-my, pad[1]);
                    kernels[0][idx].re = mu * a[0];
                    kernels[1][idx].re = mu * a[1];
                }
            }
        }

        let nx = n[0];
        let node_slots = (0..n.iter().product())
            .map(|i: usize| {
                let (ix, iy) = (i % nx, i / nx);
                let sx = 2 * halo[0] + 2 * ix;
                let sy = if d == 2 { 2 * halo[1] + 2 * iy } else { 0 };
                sx + pad[0] * sy
            })
            .collect();

        let mut planner = FftPlanner::new();
        let forward = [
            planner.plan_fft_forward(pad[0]),
            planner.plan_fft_forward(pad[1]),
        ];
        let inverse = [
            planner.plan_fft_inverse(pad[0]),
            planner.plan_fft_inverse(pad[1]),
        ];
        let mut out = Self {
            extent,
            pad,
            spectra: Vec::new(),
            node_slots,
            forward,
            inverse,
        };
        for k in kernels.iter_mut() {
            out.transform(k, false);
        }
        out.spectra = kernels;
        Ok(out)
    }

    fn len(&self) -> usize {
        self.extent[0] * self.extent[1]
    }

    fn sample_slot(&self, e: usize) -> usize {
        (e % self.extent[0]) + self.pad[0] * (e / self.extent[0])
    }

    fn transform(&self, buf: &mut [Complex<f64>], inverse: bool) {
        let plans = if inverse {
            &self.inverse
        } else {
            &self.forward
        };
        let [p0, p1] = self.pad;
        for row in buf.chunks_exact_mut(p0) {
            plans[0].process(row);
        }
        if p1 > 1 {
            let mut column = vec![Complex::new(0.0, 0.0); p1];
            for c in 0..p0 {
                for (r, v) in column.iter_mut().enumerate() {
                    *v = buf[c + p0 * r];
                }
                plans[1].process(&mut column);
                for (r, v) in column.iter().enumerate() {
                    buf[c + p0 * r] = *v;
                }
            }
        }
        if inverse {
            let scale = 1.0 / (p0 * p1) as f64;
            for v in buf.iter_mut() {
                *v *= scale;
            }
        }
    }

    fn apply(&self, u: &[f64]) -> Vec<Vec<f64>> {
        let mut buf = vec![Complex::new(0.0, 0.0); self.pad[0] * self.pad[1]];
        for (v, &slot) in u.iter().zip(&self.node_slots) {
            buf[slot].re = *v;
        }
        self.transform(&mut buf, false);
        self.spectra
            .iter()
            .map(|spec| {
                let mut out: Vec<Complex<f64>> = buf.iter().zip(spec).map(|(a, b)| a * b).collect();
                self.transform(&mut out, true);
                (0..self.len())
                    .map(|e| out[self.sample_slot(e)].re)
                    .collect()
            })
            .collect()
    }

    fn adjoint(&self, psi: &[&[f64]]) -> Vec<f64> {
        let len = self.pad[0] * self.pad[1];
        let mut acc = vec![Complex::new(0.0, 0.0); len];
        for (comp, spec) in psi.iter().zip(&self.spectra) {
            let mut buf = vec![Complex::new(0.0, 0.0); len];
            for (e, v) in comp.iter().enumerate() {
                buf[self.sample_slot(e)].re = *v;
            }
            self.transform(&mut buf, false);
            for ((a, b), k) in acc.iter_mut().zip(&buf).zip(spec) {
                *a += b * k.conj();
            }
        }
        self.transform(&mut acc, true);
        self.node_slots.iter().map(|&slot| acc[slot].re).collect()
    }
}

/// Log-graded rule in `σ ∈ [0, σ_max]` with `σ = ℓ(e^τ - 1)`.
fn graded(scale: f64, sigma_max: f64, panel: f64, gauss: &GaussLegendre) -> Vec<(f64, f64)> {
    let tau_max = (sigma_max / scale).ln_1p();
    let panels = (tau_max / panel).ceil().max(1.0) as usize;
    let step = tau_max / panels as f64;
    let mut out = Vec::with_capacity(panels * gauss.len());
    for p in 0..panels {
        let a = p as f64 * step;
        for (t, w) in gauss.scaled(a, a + step) {
            out.push((scale * t.exp_m1(), w * scale * t.exp()));
        }
    }
    out
}

fn far_points_1d(
    lo: f64,
    hi: f64,
    centre: f64,
    reach: f64,
    width: f64,
) -> (Vec<[f64; 2]>, Vec<f64>) {
    let gauss = GaussLegendre::new(6);
    let mut points = Vec::new();
    let mut w = Vec::new();
    for (edge, dir) in [(lo, -1.0), (hi, 1.0)] {
        let sigma_max = reach - (edge - centre).abs();
        if sigma_max <= 0.0 {
            continue;
        }
        for (sigma, weight) in graded(width, sigma_max, 1.0, &gauss) {
            points.push([edge + dir * sigma, 0.0]);
            w.push(weight);
        }
    }
    (points, w)
}

fn far_points_2d(
    lo: [f64; 2],
    hi: [f64; 2],
    centre: [f64; 2],
    reach: f64,
    width: f64,
) -> (Vec<[f64; 2]>, Vec<f64>) {
    let radial = GaussLegendre::new(4);
    let angular = GaussLegendre::new(4);
    let half = [0.5 * (hi[0] - lo[0]), 0.5 * (hi[1] - lo[1])];
    let corner = half[1].atan2(half[0]);
    let cuts = [-corner, corner, PI - corner, PI + corner, 2.0 * PI - corner];
    let boundary = |t: f64| {
        let (c, s) = (t.cos().abs(), t.sin().abs());
        let rx = if c > 0.0 { half[0] / c } else { f64::INFINITY };
        let ry = if s > 0.0 { half[1] / s } else { f64::INFINITY };
        rx.min(ry)
    };
    let mut points = Vec::new();
    let mut w = Vec::new();
    for seg in cuts.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let r_mid = boundary(0.5 * (a + b));
        // keep panel arc length near the band width at the band edge
        let panels = ((b - a) * r_mid / width).ceil().max(2.0) as usize;
        let step = (b - a) / panels as f64;
        for p in 0..panels {
            let t0 = a + p as f64 * step;
            for (t, wt) in angular.scaled(t0, t0 + step) {
                let r0 = boundary(t);
                let sigma_max = reach - r0;
                if sigma_max <= 0.0 {
                    continue;
                }
                for (sigma, wr) in graded(width, sigma_max, 1.0, &radial) {
                    let r = r0 + sigma;
                    points.push([centre[0] + r * t.cos(), centre[1] + r * t.sin()]);
                    w.push(wt * wr * r);
                }
            }
        }
    }
    (points, w)
}
