//! Complex geometric optics solutions of `L* V = 0`, the interior probe
//! built on them, and a stationary phase probe for `(z - z0)^2` phases.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use gauss_quad::GaussLegendre;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::forward::CoefficientSet;
use crate::linops::{build_linearized, MagneticData};
use crate::mesh::{gradient, Field, Grid, C64, I, ONE, ZERO};

/// Largest admissible `tau * h`.
pub const MAX_TAU_H: f64 = 1.5;

/// Probe points must sit at least this far from the boundary.
pub const PROBE_MARGIN: f64 = 0.25;

/// Width of the cutoff band around the square in the periodic transport box.
const CUTOFF_BAND: f64 = 0.1;

/// `zeta = (tau / sqrt 2)(d + i d_perp)` with `d_perp = (-d_y, d_x)`, so
/// that `zeta . zeta = 0` and `|zeta| = tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexFrequency {
    pub d: [f64; 2],
    pub tau: f64,
}

pub fn make_frequency(d: [f64; 2], tau: f64) -> Result<ComplexFrequency> {
    let norm = d[0].hypot(d[1]);
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::ZeroDirection);
    }
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::BadTau(tau));
    }
    Ok(ComplexFrequency {
        d: [d[0] / norm, d[1] / norm],
        tau,
    })
}

impl ComplexFrequency {
    pub fn perp(&self) -> [f64; 2] {
        [-self.d[1], self.d[0]]
    }

    /// `zeta / tau = (d + i d_perp) / sqrt 2`.
    pub fn unit(&self) -> [C64; 2] {
        let p = self.perp();
        [
            C64::new(self.d[0], p[0]) * FRAC_1_SQRT_2,
            C64::new(self.d[1], p[1]) * FRAC_1_SQRT_2,
        ]
    }

    pub fn zeta(&self) -> [C64; 2] {
        let u = self.unit();
        [u[0] * self.tau, u[1] * self.tau]
    }

    /// `zeta . (x, y)`.
    pub fn phase(&self, x: f64, y: f64) -> C64 {
        let z = self.zeta();
        z[0] * x + z[1] * y
    }

    /// Frequency whose exponential is exactly harmonic for the five-point
    /// Laplacian with spacing `h`: `cosh(z1 h) + cosh(z2 h) = 2`. The
    /// component along the dominant axis of `d` is kept and the other one
    /// is solved for, on the branch nearest the continuous value.
    pub fn discrete_zeta(&self, h: f64) -> [C64; 2] {
        let z = self.zeta();
        if self.tau == 0.0 {
            return z;
        }
        let (keep, solve) = if self.d[0].abs() >= self.d[1].abs() {
            (0, 1)
        } else {
            (1, 0)
        };
        let root = (C64::from(2.0) - (z[keep] * h).cosh()).acosh() / h;
        let other = if (root - z[solve]).norm() <= (-root - z[solve]).norm() {
            root
        } else {
            -root
        };
        let mut out = z;
        out[solve] = other;
        out
    }
}

/// C^2 smootherstep on `[0, 1]`.
fn smootherstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

/// Extends `f[0..n]` to indices `lo..lo + len` (offset by `lo < 0`) with
/// the reflection `f(-t) = 6f(t) - 8f(2t) + 3f(3t)`, which is C^2 across
/// both ends, and multiplies by a cutoff that is one on the square.
fn extend_line(f: &[C64], lo: isize, len: usize, h: f64, band: f64) -> Vec<C64> {
    let n = f.len() as isize;
    let last = n - 1;
    (0..len as isize)
        .map(|m| {
            let i = lo + m;
            let x = i as f64 * h;
            let cut = if x < 0.0 {
                smootherstep(1.0 + x / band)
            } else if x > 1.0 {
                smootherstep(1.0 - (x - 1.0) / band)
            } else {
                1.0
            };
            if cut == 0.0 {
                return ZERO;
            }
            let value = if i < 0 {
                let t = -i;
                if 3 * t > last {
                    return ZERO;
                }
                f[t as usize] * 6.0 - f[2 * t as usize] * 8.0 + f[3 * t as usize] * 3.0
            } else if i > last {
                let t = i - last;
                if 3 * t > last {
                    return ZERO;
                }
                f[(last - t) as usize] * 6.0 - f[(last - 2 * t) as usize] * 8.0
                    + f[(last - 3 * t) as usize] * 3.0
            } else {
                f[i as usize]
            };
            value * cut
        })
        .collect()
}

/// Solves `(d + i d_perp) . grad phi = (d + i d_perp) . Z / 2` on the
/// square. The right side is extended to a periodic box of side two and the
/// Cauchy-Riemann type symbol is inverted by FFT; the mean is set to zero.
/// A constant mean of the right side is absorbed by a linear term. The
/// result does not depend on `tau`.
pub fn solve_transport(mag: &MagneticData, freq: &ComplexFrequency) -> Result<Field> {
    let grid = mag.z.x.grid().clone();
    let (n, h) = (grid.n(), grid.h());
    let p = freq.perp();
    let w = [C64::new(freq.d[0], p[0]), C64::new(freq.d[1], p[1])];
    let g = mag.z.dot_const(w).scale(C64::from(0.5));

    let m = 2 * (n - 1);
    let offset = ((n - 1) / 2) as isize;
    let band = CUTOFF_BAND.max(3.0 * h).min(1.0 / 3.0);

    let mut rows = vec![ZERO; n * m];
    for j in 0..n {
        let line: Vec<C64> = (0..n).map(|i| g.at(i, j)).collect();
        rows[j * m..(j + 1) * m].copy_from_slice(&extend_line(&line, -offset, m, h, band));
    }
    let mut data = vec![ZERO; m * m];
    for c in 0..m {
        let col: Vec<C64> = (0..n).map(|j| rows[j * m + c]).collect();
        for (r, v) in extend_line(&col, -offset, m, h, band)
            .into_iter()
            .enumerate()
        {
            data[r * m + c] = v;
        }
    }

    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    fft2(&mut data, m, &*fwd);
    // The zero mode of the right side has no periodic preimage; it is
    // carried by the linear function `mean * (d . x)`.
    let mean = data[0] / (m * m) as f64;

    let period = m as f64 * h;
    let wave = |idx: usize| {
        let s = if idx <= m / 2 {
            idx as f64
        } else {
            idx as f64 - m as f64
        };
        2.0 * PI * s / period
    };
    for r in 0..m {
        let ky = wave(r);
        for c in 0..m {
            let kx = wave(c);
            let k = r * m + c;
            if r == 0 && c == 0 {
                data[k] = ZERO;
                continue;
            }
            let along = kx * freq.d[0] + ky * freq.d[1];
            let across = kx * p[0] + ky * p[1];
            data[k] /= C64::new(-across, along);
        }
    }
    fft2(&mut data, m, &*inv);
    let norm = 1.0 / (m * m) as f64;

    let o = offset as usize;
    let values = (0..grid.len())
        .map(|k| {
            let (i, j) = grid.ij(k);
            let (x, y) = grid.coords(k);
            data[(j + o) * m + (i + o)] * norm + mean * (freq.d[0] * x + freq.d[1] * y)
        })
        .collect();
    let phi = Field::from_values(&grid, values)?;
    if phi
        .values()
        .iter()
        .any(|v| !v.re.is_finite() || !v.im.is_finite())
    {
        return Err(Error::NonFinite("transport solve"));
    }
    Ok(phi)
}

fn fft2(data: &mut [C64], m: usize, fft: &dyn rustfft::Fft<f64>) {
    for row in data.chunks_mut(m) {
        fft.process(row);
    }
    let mut col = vec![ZERO; m];
    for c in 0..m {
        for r in 0..m {
            col[r] = data[r * m + c];
        }
        fft.process(&mut col);
        for r in 0..m {
            data[r * m + c] = col[r];
        }
    }
}

/// `max |zeta . grad_h phi + i zeta . A| / tau` with `A = iZ/2`, over all
/// nodes.
pub fn transport_residual(mag: &MagneticData, freq: &ComplexFrequency, phi: &Field) -> f64 {
    let u = freq.unit();
    let gp = gradient(phi);
    let half_z = mag.z.scale(C64::from(0.5));
    (&gp - &half_z).dot_const(u).max_abs()
}

/// `V0 = e^{zeta.x + phi}(1 + r)` solving `L* V0 = 0`. The exponential
/// uses the grid-harmonic frequency [`ComplexFrequency::discrete_zeta`];
/// with the continuous one the remainder grows like `e^{c tau^3 h^2}`.
#[derive(Debug, Clone)]
pub struct CgoSolution {
    pub freq: ComplexFrequency,
    pub zeta_h: [C64; 2],
    pub phi: Field,
    pub v0: Field,
    /// `e^{-zeta_h.x - phi} V0 - 1`.
    pub remainder: Field,
    /// Sup of the remainder over `[1/4, 3/4]^2`.
    pub remainder_sup: f64,
    /// `|L*_h V0|_inf / (|L*_h|_inf |V0|_inf)` over interior nodes.
    pub residual: f64,
    pub transport_residual: f64,
}

pub fn build_cgo(
    set: &CoefficientSet,
    u0: &Field,
    mag: &MagneticData,
    freq: &ComplexFrequency,
    tol: f64,
) -> Result<CgoSolution> {
    let grid = set.grid().clone();
    let tau_h = freq.tau * grid.h();
    if tau_h > MAX_TAU_H {
        return Err(Error::Unresolved {
            tau: freq.tau,
            tau_h,
        });
    }
    let phi = solve_transport(mag, freq)?;
    let transport_residual = transport_residual(mag, freq, &phi);

    let zeta_h = freq.discrete_zeta(grid.h());
    let envelope = Field::from_values(
        &grid,
        (0..grid.len())
            .map(|k| {
                let (x, y) = grid.coords(k);
                (zeta_h[0] * x + zeta_h[1] * y + phi.values()[k]).exp()
            })
            .collect(),
    )?;
    let pair = build_linearized(set, u0)?;
    let fac = pair.adjoint.stencil().factor()?;
    let v0 = fac.solve(&Field::zeros(&grid), &envelope.trace(), tol)?;
    if v0
        .values()
        .iter()
        .any(|v| !v.re.is_finite() || !v.im.is_finite())
    {
        return Err(Error::NonFinite("CGO solve"));
    }

    let row_norm = fac
        .stencil()
        .coefficients()
        .iter()
        .map(|row| row.iter().map(|c| c.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let scale = row_norm * v0.max_abs();
    let residual = if scale > 0.0 {
        pair.adjoint.apply(&v0).max_abs_interior() / scale
    } else {
        0.0
    };
    let remainder = v0.zip_map(&envelope, |v, e| v / e - ONE);
    let remainder_sup = remainder.max_abs_in_square(0.25, 0.75);
    Ok(CgoSolution {
        freq: *freq,
        zeta_h,
        phi,
        v0,
        remainder,
        remainder_sup,
        residual,
        transport_residual,
    })
}

/// `D = e^{-(zeta.x0 + phi(x0))} div(q grad V0)(x0) / tau` next to its
/// large-`tau` limit `P = (q Z + grad q) . zeta / tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub node: usize,
    pub value: C64,
    pub predicted: C64,
}

impl Probe {
    pub fn error(&self) -> f64 {
        (self.value - self.predicted).norm()
    }
}

fn check_probe_point(x0: (f64, f64)) -> Result<()> {
    if Grid::boundary_distance(x0.0, x0.1) < PROBE_MARGIN - 1e-12 {
        return Err(Error::TooCloseToBoundary(x0.0, x0.1));
    }
    Ok(())
}

/// `(q Z + grad q) . zeta / tau` at the node nearest `x0`.
pub fn predicted_limit(
    set: &CoefficientSet,
    mag: &MagneticData,
    freq: &ComplexFrequency,
    x0: (f64, f64),
) -> Result<C64> {
    check_probe_point(x0)?;
    let k = set.grid().nearest(x0.0, x0.1);
    let gq = gradient(&set.q);
    let q = set.q.values()[k];
    let z = mag.z.at(k);
    let g = gq.at(k);
    let u = freq.unit();
    Ok((q * z[0] + g[0]) * u[0] + (q * z[1] + g[1]) * u[1])
}

pub fn nonvanishing_probe(
    set: &CoefficientSet,
    mag: &MagneticData,
    sol: &CgoSolution,
    x0: (f64, f64),
) -> Result<Probe> {
    check_probe_point(x0)?;
    let freq = &sol.freq;
    if !(freq.tau > 0.0) {
        return Err(Error::BadTau(freq.tau));
    }
    let grid = set.grid();
    let (n, h) = (grid.n(), grid.h());
    let k = grid.nearest(x0.0, x0.1);
    let (x, y) = grid.coords(k);
    let (q, v) = (set.q.values(), sol.v0.values());
    let mut acc = ZERO;
    for nb in [k + 1, k - 1, k + n, k - n] {
        acc += (q[k] + q[nb]) * 0.5 * (v[nb] - v[k]);
    }
    let flux = acc / (h * h);
    let z = sol.zeta_h;
    let value = flux * (-(z[0] * x + z[1] * y + sol.phi.values()[k])).exp() / freq.tau;
    Ok(Probe {
        node: k,
        value,
        predicted: predicted_limit(set, mag, freq, x0)?,
    })
}

/// C^infinity cutoff: one for `|t| <= inner`, zero for `|t| >= outer`.
pub fn smooth_window(t: f64, inner: f64, outer: f64) -> f64 {
    let r = t.abs();
    if r <= inner {
        return 1.0;
    }
    if r >= outer {
        return 0.0;
    }
    let s = (r - inner) / (outer - inner);
    let psi = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    let up = psi(1.0 - s);
    up / (up + psi(s))
}

/// Inner radius of the window applied to stationary phase integrands.
pub const WINDOW_INNER: f64 = 0.15;

/// Panel layout for the composite Gauss-Legendre rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    /// Panel width as a multiple of `h'`, capped at `max_panel`.
    pub panel_per_h: f64,
    pub max_panel: f64,
    pub nodes: usize,
}

impl Quadrature {
    pub const STANDARD: Quadrature = Quadrature {
        panel_per_h: 2.0,
        max_panel: 0.02,
        nodes: 12,
    };
    pub const DENSE: Quadrature = Quadrature {
        panel_per_h: 1.0,
        max_panel: 0.01,
        nodes: 16,
    };
}

/// `int f w e^{(Phi - conj Phi)/h'}` with `Phi = (z - z0)^2`, i.e. the
/// phase `4i (x - x0)(y - y0) / h'`, where `w` is a smooth window of
/// radius [`PROBE_MARGIN`] centred at `z0`.
pub fn stationary_phase_integral(
    f: &(dyn Fn(f64, f64) -> C64 + Sync),
    z0: (f64, f64),
    hp: f64,
    rule: Quadrature,
) -> Result<C64> {
    check_probe_point(z0)?;
    if !(hp > 0.0) || !hp.is_finite() {
        return Err(Error::Invalid(format!("h' must be positive, got {hp}")));
    }
    let r = PROBE_MARGIN;
    let panel = (rule.panel_per_h * hp).min(rule.max_panel);
    let panels = (2.0 * r / panel).ceil() as usize;
    let width = 2.0 * r / panels as f64;
    let gl = GaussLegendre::new(rule.nodes).map_err(|e| Error::Invalid(e.to_string()))?;
    let mut pts = Vec::with_capacity(panels * rule.nodes);
    for p in 0..panels {
        let a = -r + p as f64 * width;
        for &(t, wt) in gl.as_node_weight_pairs() {
            let s = a + 0.5 * width * (t + 1.0);
            let w = 0.5 * width * wt * smooth_window(s, WINDOW_INNER, r);
            if w != 0.0 {
                pts.push((s, w));
            }
        }
    }
    let acc = pts
        .par_iter()
        .map(|&(sy, wy)| {
            pts.iter().fold(ZERO, |acc, &(sx, wx)| {
                let phase = I * (4.0 * sx * sy / hp);
                acc + f(z0.0 + sx, z0.1 + sy) * phase.exp() * (wx * wy)
            })
        })
        .sum();
    Ok(acc)
}

/// `I(h') / h'` along a decreasing sequence of `h'`, with the ratios of
/// consecutive entries.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryPhaseReport {
    pub h_values: Vec<f64>,
    pub scaled: Vec<C64>,
    pub ratios: Vec<C64>,
}

impl StationaryPhaseReport {
    /// `|ratio - 1|` for the last pair of step sizes.
    pub fn last_ratio_gap(&self) -> f64 {
        self.ratios
            .last()
            .map_or(f64::INFINITY, |r| (r - ONE).norm())
    }

    pub fn limit(&self) -> C64 {
        self.scaled.last().copied().unwrap_or(ZERO)
    }
}

pub fn stationary_phase_probe(
    f: &(dyn Fn(f64, f64) -> C64 + Sync),
    z0: (f64, f64),
    h_values: &[f64],
    rule: Quadrature,
) -> Result<StationaryPhaseReport> {
    let scaled = h_values
        .iter()
        .map(|&hp| stationary_phase_integral(f, z0, hp, rule).map(|v| v / hp))
        .collect::<Result<Vec<_>>>()?;
    let ratios = scaled.windows(2).map(|w| w[1] / w[0]).collect();
    Ok(StationaryPhaseReport {
        h_values: h_values.to_vec(),
        scaled,
        ratios,
    })
}

/// Width of the Gaussian used to calibrate the stationary phase constant.
pub const REFERENCE_WIDTH: f64 = 0.25;

pub fn reference_gaussian(z0: (f64, f64)) -> impl Fn(f64, f64) -> C64 {
    move |x, y| {
        let r2 = (x - z0.0).powi(2) + (y - z0.1).powi(2);
        C64::from((-r2 / (2.0 * REFERENCE_WIDTH * REFERENCE_WIDTH)).exp())
    }
}

/// `I(h') / (h' f(z0))` for the reference Gaussian, computed with the
/// dense rule.
pub fn calibrate_constant(z0: (f64, f64), hp: f64) -> Result<C64> {
    let g = reference_gaussian(z0);
    Ok(stationary_phase_integral(&g, z0, hp, Quadrature::DENSE)? / hp)
}

/// Reads `f(z0)` off a probe report using a calibrated constant.
pub fn recovered_value(report: &StationaryPhaseReport, constant: C64) -> C64 {
    report.limit() / constant
}
