//! Lattice weights for the product-integration scheme.
//!
//! Nodal values are interpolated by hat functions on the infinite lattice
//! generated by the grid, with every lattice node outside the domain carrying
//! the value zero. The singular kernels are then integrated exactly (1D) or by
//! polar/tensor Gauss rules (2D) against each hat. All weights depend only on
//! the node offset, so one table per offset suffices.
//!
//! Gradient weights are for the kernel `r / |r|^{d+s+1}`; Laplacian weights
//! for `|r|^{-d-2s}` outside a near-field box of half-width `δh`, inside which
//! the symmetric second difference replaces the interpolant.

use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;

use crate::quadrature::{linear_pow_integral, GaussLegendre};

/// Offsets beyond this use Gauss rules instead of closed-form antiderivatives
/// (avoids cancellation between large nearly equal powers).
const CLOSED_FORM_LIMIT: usize = 4;

/// 1D gradient weights `a_m = ∫ sign(ρ)|ρ|^{-1-s} hat(ρ - m) dρ`, `m = 0..=max`,
/// in units where `h = 1`. Physical weights are `h^{-s} a_m`, odd in `m`.
pub fn gradient_1d(s: f64, max: usize) -> Vec<f64> {
    let p = -1.0 - s;
    hat_moments_1d(p, 0.0, max)
}

/// 1D Laplacian pieces in `h = 1` units.
#[derive(Debug, Clone)]
pub struct Laplacian1d {
    /// `∫_{|ρ|>δ} |ρ|^{-1-2s}` (or truncated at the tail radius).
    pub far_total: f64,
    /// `∫_{|ρ|>δ} hat(ρ - m) |ρ|^{-1-2s}`, `m = 0..=max` (even in `m`).
    pub far: Vec<f64>,
    /// `∫_{|ρ|<δ} ρ² |ρ|^{-1-2s}`.
    pub near: f64,
}

pub fn laplacian_1d(s: f64, delta: f64, max: usize, tail: Option<f64>) -> Laplacian1d {
    let p = -1.0 - 2.0 * s;
    let far_total = match tail {
        None => delta.powf(-2.0 * s) / s,
        Some(t) => (delta.powf(-2.0 * s) - t.powf(-2.0 * s)) / s,
    };
    let near = 2.0 * delta.powf(2.0 - 2.0 * s) / (2.0 - 2.0 * s);
    let mut far = hat_moments_1d(p, delta, max);
    // m = 0 collects both sides of the origin.
    far[0] *= 2.0;
    Laplacian1d {
        far_total,
        far,
        near,
    }
}

/// `∫_{ρ > cut} hat(ρ - m) ρ^p dρ` for `m = 0..=max` with `cut ∈ [0, 1]`.
fn hat_moments_1d(p: f64, cut: f64, max: usize) -> Vec<f64> {
    let gauss = GaussLegendre::new(12);
    (0..=max)
        .map(|m| {
            let mf = m as f64;
            if m == 0 {
                // hat(ρ) = 1 - ρ on [cut, 1]; zero when cut = 0 is used for
                // the odd gradient kernel, whose m = 0 weight vanishes.
                if cut == 0.0 || cut >= 1.0 {
                    return 0.0;
                }
                return linear_pow_integral(1.0, -1.0, p, cut, 1.0);
            }
            if m > CLOSED_FORM_LIMIT {
                let left = gauss.integrate(mf - 1.0, mf, |r| (r - mf + 1.0) * r.powf(p));
                let right = gauss.integrate(mf, mf + 1.0, |r| (mf + 1.0 - r) * r.powf(p));
                return left + right;
            }
            let lo = (mf - 1.0).max(cut);
            let mut v = 0.0;
            if lo < mf {
                // rising flank: (ρ - (m - 1))
                v += linear_pow_integral(-(mf - 1.0), 1.0, p, lo, mf);
            }
            // falling flank: (m + 1 - ρ)
            v += linear_pow_integral(mf + 1.0, -1.0, p, mf, mf + 1.0);
            v
        })
        .collect()
}

/// Offset-indexed 2D table over `[-(nx-1), nx-1] x [-(ny-1), ny-1]`.
#[derive(Debug, Clone)]
pub struct OffsetTable<T> {
    pub nx: usize,
    pub ny: usize,
    pub data: Vec<T>,
}

impl<T: Copy> OffsetTable<T> {
    pub fn get(&self, mx: i64, my: i64) -> T {
        let w = 2 * self.nx - 1;
        let ix = (mx + self.nx as i64 - 1) as usize;
        let iy = (my + self.ny as i64 - 1) as usize;
        self.data[ix + w * iy]
    }
}

fn offsets(nx: usize, ny: usize) -> Vec<(i64, i64)> {
    let mut out = Vec::with_capacity((2 * nx - 1) * (2 * ny - 1));
    for my in -(ny as i64 - 1)..=(ny as i64 - 1) {
        for mx in -(nx as i64 - 1)..=(nx as i64 - 1) {
            out.push((mx, my));
        }
    }
    out
}

/// Linear factor `c0 + c1 t` of `hat(t - m)` on the unit interval `[k, k+1]`.
fn hat_piece(k: i64, m: i64) -> (f64, f64) {
    if m == k {
        ((k + 1) as f64, -1.0)
    } else {
        debug_assert_eq!(m, k + 1);
        (-(k as f64), 1.0)
    }
}

/// Cell `[kx hx, (kx+1) hx] x [ky hy, (ky+1) hy]` and the bilinear factor of
/// `H_m` on it, written in physical coordinates.
struct CellPiece {
    x: (f64, f64),
    y: (f64, f64),
    ax: f64,
    bx: f64,
    ay: f64,
    by: f64,
    corner: bool,
}

fn support_cells(mx: i64, my: i64, hx: f64, hy: f64) -> impl Iterator<Item = CellPiece> {
    let mut out = Vec::with_capacity(4);
    for kx in [mx - 1, mx] {
        for ky in [my - 1, my] {
            let (cx0, cx1) = hat_piece(kx, mx);
            let (cy0, cy1) = hat_piece(ky, my);
            out.push(CellPiece {
                x: (kx as f64 * hx, (kx + 1) as f64 * hx),
                y: (ky as f64 * hy, (ky + 1) as f64 * hy),
                ax: cx0,
                bx: cx1 / hx,
                ay: cy0,
                by: cy1 / hy,
                corner: (kx == 0 || kx == -1) && (ky == 0 || ky == -1),
            });
        }
    }
    out.into_iter()
}

/// Distance from the origin to the cell, in units of `h`.
fn cell_distance(x: (f64, f64), y: (f64, f64), h: f64) -> f64 {
    let dx = if x.0 > 0.0 {
        x.0
    } else if x.1 < 0.0 {
        -x.1
    } else {
        0.0
    };
    let dy = if y.0 > 0.0 {
        y.0
    } else if y.1 < 0.0 {
        -y.1
    } else {
        0.0
    };
    (dx * dx + dy * dy).sqrt() / h
}

/// Cells this far out see a smooth kernel; a low-order rule suffices.
const FAR_CELL: f64 = 8.0;

fn subdivisions(x: (f64, f64), y: (f64, f64), h: f64) -> usize {
    let dist = cell_distance(x, y, h);
    if dist < 1.5 {
        6
    } else if dist < 4.0 {
        3
    } else {
        1
    }
}

/// Angular integral over a quadrant of a rectangle with a corner at the
/// origin: `∫_0^{π/2} f(θ, R(θ)) dθ` with `R = min(hx/cosθ, hy/sinθ)`.
fn quadrant_integral(gauss: &GaussLegendre, hx: f64, hy: f64, f: impl Fn(f64, f64) -> f64) -> f64 {
    let kink = (hy / hx).atan();
    let a = gauss.integrate(0.0, kink, |t| f(t, hx / t.cos()));
    let b = gauss.integrate(kink, FRAC_PI_2, |t| f(t, hy / t.sin()));
    a + b
}

/// 2D gradient weights `A_m = ∫ r |r|^{-3-s} H_m(r) dr` in physical units.
pub fn gradient_2d(s: f64, hx: f64, hy: f64, nx: usize, ny: usize) -> OffsetTable<[f64; 2]> {
    let gauss = GaussLegendre::new(8);
    let coarse = GaussLegendre::new(4);
    let angular = GaussLegendre::new(24);
    let h = hx.max(hy);
    let data = offsets(nx, ny)
        .into_par_iter()
        .map(|(mx, my)| {
            if mx == 0 && my == 0 {
                return [0.0, 0.0];
            }
            let mut acc = [0.0; 2];
            for cell in support_cells(mx, my, hx, hy) {
                if cell.corner {
                    let sx = if cell.x.0 >= 0.0 { 1.0 } else { -1.0 };
                    let sy = if cell.y.0 >= 0.0 { 1.0 } else { -1.0 };
                    debug_assert!((cell.ax * cell.ay).abs() < 1e-12);
                    for (c, slot) in acc.iter_mut().enumerate() {
                        *slot += quadrant_integral(&angular, hx, hy, |t, r| {
                            let (ct, st) = (sx * t.cos(), sy * t.sin());
                            let e = if c == 0 { ct } else { st };
                            let lin = cell.ax * cell.by * st + cell.bx * cell.ay * ct;
                            let quad = cell.bx * cell.by * ct * st;
                            e * (lin * r.powf(1.0 - s) / (1.0 - s)
                                + quad * r.powf(2.0 - s) / (2.0 - s))
                        });
                    }
                } else {
                    let sub = subdivisions(cell.x, cell.y, h);
                    let rule = if cell_distance(cell.x, cell.y, h) >= FAR_CELL {
                        &coarse
                    } else {
                        &gauss
                    };
                    for (c, slot) in acc.iter_mut().enumerate() {
                        *slot += rule.rect(cell.x, cell.y, sub, |x, y| {
                            let r2 = x * x + y * y;
                            let hat = (cell.ax + cell.bx * x) * (cell.ay + cell.by * y);
                            let comp = if c == 0 { x } else { y };
                            comp * hat * r2.powf(-(3.0 + s) / 2.0)
                        });
                    }
                }
            }
            acc
        })
        .collect::<Vec<_>>();
    let mut table = OffsetTable { nx, ny, data };
    antisymmetrize(&mut table);
    table
}

/// Enforce `A_{-m} = -A_m` exactly (the rule is symmetric up to rounding).
fn antisymmetrize(t: &mut OffsetTable<[f64; 2]>) {
    let len = t.data.len();
    for i in 0..len / 2 {
        let j = len - 1 - i;
        let a = t.data[i];
        let b = t.data[j];
        let avg = [0.5 * (b[0] - a[0]), 0.5 * (b[1] - a[1])];
        t.data[j] = avg;
        t.data[i] = [-avg[0], -avg[1]];
    }
    t.data[len / 2] = [0.0, 0.0];
}

/// 2D Laplacian pieces in physical units.
#[derive(Debug, Clone)]
pub struct Laplacian2d {
    pub far_total: f64,
    pub far: OffsetTable<f64>,
    /// `∫_N r_x² |r|^{-2-2s}` and `∫_N r_y² |r|^{-2-2s}` over the near box.
    pub near: [f64; 2],
}

pub fn laplacian_2d(
    s: f64,
    hx: f64,
    hy: f64,
    nx: usize,
    ny: usize,
    delta: f64,
    tail: Option<f64>,
) -> Laplacian2d {
    let angular = GaussLegendre::new(24);
    let (dx, dy) = (delta * hx, delta * hy);
    let far_total = 4.0
        * quadrant_integral(&angular, dx, dy, |_, r| {
            let inner = r.powf(-2.0 * s);
            let outer = tail.map_or(0.0, |t| t.powf(-2.0 * s));
            (inner - outer) / (2.0 * s)
        });
    let near_x = 4.0
        * quadrant_integral(&angular, dx, dy, |t, r| {
            t.cos().powi(2) * r.powf(2.0 - 2.0 * s) / (2.0 - 2.0 * s)
        });
    let near_y = 4.0
        * quadrant_integral(&angular, dx, dy, |t, r| {
            t.sin().powi(2) * r.powf(2.0 - 2.0 * s) / (2.0 - 2.0 * s)
        });

    let gauss = GaussLegendre::new(8);
    let h = hx.max(hy);
    let kernel = |x: f64, y: f64| (x * x + y * y).powf(-1.0 - s);
    let data = offsets(nx, ny)
        .into_par_iter()
        .map(|(mx, my)| {
            let mut acc = 0.0;
            for cell in support_cells(mx, my, hx, hy) {
                let hat = |x: f64, y: f64| (cell.ax + cell.bx * x) * (cell.ay + cell.by * y);
                if cell.corner {
                    if delta >= 1.0 {
                        continue;
                    }
                    // cell minus the near box: two rectangles
                    let (x0, x1) = cell.x;
                    let (y0, y1) = cell.y;
                    let sx = if x0 >= 0.0 { 1.0 } else { -1.0 };
                    let sy = if y0 >= 0.0 { 1.0 } else { -1.0 };
                    let (bx, by) = (sx * dx, sy * dy);
                    let far_x = if sx > 0.0 { (bx, x1) } else { (x0, bx) };
                    let near_x = if sx > 0.0 { (x0, bx) } else { (bx, x1) };
                    let far_y = if sy > 0.0 { (by, y1) } else { (y0, by) };
                    acc += gauss.rect2(far_x, (y0, y1), 8, |x, y| hat(x, y) * kernel(x, y));
                    acc += gauss.rect2(near_x, far_y, 8, |x, y| hat(x, y) * kernel(x, y));
                } else {
                    let sub = subdivisions(cell.x, cell.y, h);
                    acc += gauss.rect(cell.x, cell.y, sub, |x, y| hat(x, y) * kernel(x, y));
                }
            }
            acc
        })
        .collect::<Vec<_>>();
    let mut far = OffsetTable { nx, ny, data };
    symmetrize(&mut far);
    Laplacian2d {
        far_total,
        far,
        near: [near_x, near_y],
    }
}

fn symmetrize(t: &mut OffsetTable<f64>) {
    let len = t.data.len();
    for i in 0..len / 2 {
        let j = len - 1 - i;
        let avg = 0.5 * (t.data[i] + t.data[j]);
        t.data[i] = avg;
        t.data[j] = avg;
    }
}

impl GaussLegendre {
    /// Tensor rule that tolerates degenerate rectangles.
    fn rect2(
        &self,
        x: (f64, f64),
        y: (f64, f64),
        sub: usize,
        f: impl FnMut(f64, f64) -> f64,
    ) -> f64 {
        if x.1 - x.0 <= 0.0 || y.1 - y.0 <= 0.0 {
            return 0.0;
        }
        self.rect(x, y, sub, f)
    }
}

/// `PV ∫ sign(ρ)|ρ|^{-1-s} hat(ρ - c) dρ` for any real offset `c`, in units
/// where `h = 1`. When the evaluation point sits inside the hat support the
/// hat value there is subtracted on the support and its odd integral over a
/// symmetric window restored, which leaves only integrable pieces.
pub fn hat_weight_1d(s: f64, c: f64) -> f64 {
    let p = -1.0 - s;
    if c.abs() > 1.0 + CLOSED_FORM_LIMIT as f64 {
        let g = GaussLegendre::new(12);
        let k = |r: f64| r.signum() * r.abs().powf(p);
        return g.integrate(c - 1.0, c, |r| (r - c + 1.0) * k(r))
            + g.integrate(c, c + 1.0, |r| (c + 1.0 - r) * k(r));
    }
    let h0 = (1.0 - c.abs()).max(0.0);
    let mut cuts = vec![c - 1.0, c, c + 1.0];
    if c - 1.0 < 0.0 && 0.0 < c + 1.0 && c != 0.0 {
        cuts.push(0.0);
    }
    cuts.sort_by(f64::total_cmp);
    // ∫ sign(ρ)|ρ|^p (α + βρ) over [x0, x1] not straddling the origin
    let piece = |x0: f64, x1: f64, alpha: f64, beta: f64| -> f64 {
        if x0 >= 0.0 {
            linear_pow_integral(alpha, beta, p, x0, x1)
        } else {
            // ρ = -σ
            -linear_pow_integral(alpha, -beta, p, -x1, -x0)
        }
    };
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        if x1 <= x0 {
            continue;
        }
        let (alpha, beta) = if x0 >= c {
            (1.0 + c, -1.0)
        } else {
            (1.0 - c, 1.0)
        };
        if x0 == 0.0 || x1 == 0.0 {
            // hat - h0 = βρ on a piece ending at the origin
            let width = x1 - x0;
            total += beta * width.powf(1.0 - s) / (1.0 - s);
        } else {
            total += piece(x0, x1, alpha - h0, beta);
        }
    }
    if h0 > 0.0 {
        let b = c.abs() + 1.0;
        let (lo, hi) = (c - 1.0, c + 1.0);
        if lo > -b {
            total -= h0 * piece(-b, lo, 1.0, 0.0);
        }
        if hi < b {
            total -= h0 * piece(hi, b, 1.0, 0.0);
        }
    }
    total
}

/// `PV ∫ r|r|^{-3-s} H(r - o) dr` for the bilinear hat `H` of half-widths
/// `(hx, hy)` centred at an arbitrary physical offset `o`.
pub fn hat_weight_2d(s: f64, hx: f64, hy: f64, o: [f64; 2], rules: &Rules) -> [f64; 2] {
    let h = hx.max(hy);
    let hat1 = |t: f64| (1.0 - t.abs()).max(0.0);
    let h0 = hat1(o[0] / hx) * hat1(o[1] / hy);
    let cuts = |c: f64, w: f64| {
        let mut v = vec![c - w, c, c + w];
        if c - w < 0.0 && 0.0 < c + w && c != 0.0 {
            v.push(0.0);
        }
        v.sort_by(f64::total_cmp);
        v
    };
    let kernel = |x: f64, y: f64| (x * x + y * y).powf(-(3.0 + s) / 2.0);
    let (xs, ys) = (cuts(o[0], hx), cuts(o[1], hy));
    let mut acc = [0.0; 2];
    for wx in xs.windows(2) {
        for wy in ys.windows(2) {
            let (x, y) = ((wx[0], wx[1]), (wy[0], wy[1]));
            if x.1 <= x.0 || y.1 <= y.0 {
                continue;
            }
            let (ax, bx) = if x.0 >= o[0] {
                (1.0 + o[0] / hx, -1.0 / hx)
            } else {
                (1.0 - o[0] / hx, 1.0 / hx)
            };
            let (ay, by) = if y.0 >= o[1] {
                (1.0 + o[1] / hy, -1.0 / hy)
            } else {
                (1.0 - o[1] / hy, 1.0 / hy)
            };
            let corner = (x.0 == 0.0 || x.1 == 0.0) && (y.0 == 0.0 || y.1 == 0.0);
            if corner {
                let sx = if x.1 > 0.0 { 1.0 } else { -1.0 };
                let sy = if y.1 > 0.0 { 1.0 } else { -1.0 };
                let (w, v) = (x.1 - x.0, y.1 - y.0);
                for (c, slot) in acc.iter_mut().enumerate() {
                    *slot += quadrant_integral(&rules.angular, w, v, |t, r| {
                        let (ct, st) = (sx * t.cos(), sy * t.sin());
                        let e = if c == 0 { ct } else { st };
                        let lin = ax * by * st + bx * ay * ct;
                        let quad = bx * by * ct * st;
                        e * (lin * r.powf(1.0 - s) / (1.0 - s) + quad * r.powf(2.0 - s) / (2.0 - s))
                    });
                }
            } else {
                let dist = cell_distance(x, y, h);
                let (rule, sub) = if dist >= FAR_CELL {
                    (&rules.coarse, 1)
                } else {
                    (&rules.fine, subdivisions(x, y, h))
                };
                for (c, slot) in acc.iter_mut().enumerate() {
                    *slot += rule.rect(x, y, sub, |px, py| {
                        let hat = (ax + bx * px) * (ay + by * py) - h0;
                        let comp = if c == 0 { px } else { py };
                        comp * hat * kernel(px, py)
                    });
                }
            }
        }
    }
    if h0 > 0.0 {
        let b = [o[0].abs() + hx, o[1].abs() + hy];
        let (x0, x1) = (o[0] - hx, o[0] + hx);
        let (y0, y1) = (o[1] - hy, o[1] + hy);
        let outside = [
            ((-b[0], x0), (-b[1], b[1])),
            ((x1, b[0]), (-b[1], b[1])),
            ((x0, x1), (-b[1], y0)),
            ((x0, x1), (y1, b[1])),
        ];
        for (x, y) in outside {
            for (c, slot) in acc.iter_mut().enumerate() {
                *slot -= h0
                    * rules.fine.rect2(x, y, 6, |px, py| {
                        let comp = if c == 0 { px } else { py };
                        comp * kernel(px, py)
                    });
            }
        }
    }
    acc
}

/// [`hat_weight_2d`] for a hat whose support lies well away from the origin,
/// with a 2×2 rule per cell.
pub fn far_hat_weight_2d(s: f64, hx: f64, hy: f64, o: [f64; 2]) -> [f64; 2] {
    const G: f64 = 0.577_350_269_189_625_8;
    let mut acc = [0.0; 2];
    for (x0, y0) in [(-1.0, -1.0), (0.0, -1.0), (-1.0, 0.0), (0.0, 0.0)] {
        for gx in [-G, G] {
            for gy in [-G, G] {
                let (tx, ty) = (x0 + 0.5 * (1.0 + gx), y0 + 0.5 * (1.0 + gy));
                let hat = (1.0 - tx.abs()) * (1.0 - ty.abs());
                let (px, py) = (o[0] + tx * hx, o[1] + ty * hy);
                let k = hat * (px * px + py * py).powf(-(3.0 + s) / 2.0);
                acc[0] += px * k;
                acc[1] += py * k;
            }
        }
    }
    // each cell has area hx·hy and four points of weight 1/4
    acc.map(|v| 0.25 * hx * hy * v)
}

/// Quadrature rules shared by the 2D hat weights.
pub struct Rules {
    pub fine: GaussLegendre,
    pub coarse: GaussLegendre,
    pub angular: GaussLegendre,
}

impl Default for Rules {
    fn default() -> Self {
        Self {
            fine: GaussLegendre::new(8),
            coarse: GaussLegendre::new(4),
            angular: GaussLegendre::new(24),
        }
    }
}

/// Gradient weights on the half-spacing lattice: entry `(mx, my)` is the
/// weight of a node at offset `(mx hx/2, my hy/2)` from the evaluation point.
pub fn half_lattice_gradient_2d(
    s: f64,
    hx: f64,
    hy: f64,
    rx: usize,
    ry: usize,
) -> OffsetTable<[f64; 2]> {
    let rules = Rules::default();
    let data = offsets(rx + 1, ry + 1)
        .into_par_iter()
        .map(|(mx, my)| {
            hat_weight_2d(
                s,
                hx,
                hy,
                [0.5 * mx as f64 * hx, 0.5 * my as f64 * hy],
                &rules,
            )
        })
        .collect::<Vec<_>>();
    let mut table = OffsetTable {
        nx: rx + 1,
        ny: ry + 1,
        data,
    };
    antisymmetrize(&mut table);
    table
}
