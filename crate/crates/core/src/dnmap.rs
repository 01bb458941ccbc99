//! Discrete Dirichlet-to-Neumann maps, their first and second
//! finite-difference linearizations, and the integral identity satisfied
//! by the second linearization.

use rayon::prelude::*;

use crate::elliptic::{EllipticOperator, EllipticProblem, Factorization, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::forward::{solve_quasilinear, CoefficientSet, ForwardSolution, NewtonOptions};
use crate::mesh::{
    divergence_form, integrate, integrate_trace, normal_derivative, BoundaryTrace, Field, GridRef,
    Region, C64,
};

pub const DEFAULT_EPS: f64 = 1e-3;
pub const EPS_RANGE: (f64, f64) = (1e-5, 1e-1);

/// Orthonormal Fourier modes along the perimeter arclength `s in [0, 4)`.
#[derive(Debug, Clone)]
pub struct BoundaryBasis {
    modes: Vec<BoundaryTrace>,
    labels: Vec<String>,
}

impl BoundaryBasis {
    /// Constant mode followed by `cos`/`sin` pairs of frequency `1..=k_max`.
    pub fn fourier(grid: &GridRef, k_max: usize) -> Self {
        let tau = std::f64::consts::TAU;
        let amp = std::f64::consts::FRAC_1_SQRT_2;
        let len = grid.boundary_len();
        let mut modes = vec![BoundaryTrace::constant(grid, C64::from(0.5))];
        let mut labels = vec!["const".to_string()];
        for k in 1..=k_max {
            for (kind, f) in [("cos", f64::cos as fn(f64) -> f64), ("sin", f64::sin)] {
                let vals = (0..len)
                    .map(|p| C64::from(amp * f(tau * k as f64 * grid.arclength(p) / 4.0)))
                    .collect();
                modes.push(BoundaryTrace::from_values(grid, vals).expect("sized by grid"));
                labels.push(format!("{kind}{k}"));
            }
        }
        BoundaryBasis { modes, labels }
    }

    /// Default resolution `k_max = n / 4`.
    pub fn default_for(grid: &GridRef) -> Self {
        Self::fourier(grid, grid.n() / 4)
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn mode(&self, j: usize) -> &BoundaryTrace {
        &self.modes[j]
    }

    pub fn modes(&self) -> &[BoundaryTrace] {
        &self.modes
    }

    pub fn label(&self, j: usize) -> &str {
        &self.labels[j]
    }

    /// Index of the `cos`/`sin` mode of frequency `k`.
    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Discrete inner product `h * sum conj(f) g` over all boundary positions.
pub fn boundary_inner(f: &BoundaryTrace, g: &BoundaryTrace) -> C64 {
    let prod: Vec<C64> = f
        .values()
        .iter()
        .zip(g.values())
        .map(|(a, b)| a.conj() * b)
        .collect();
    integrate_trace(&BoundaryTrace::from_values(f.grid(), prod).expect("same grid"))
}

/// Columns of normal-derivative samples at the non-corner boundary nodes.
#[derive(Debug, Clone)]
pub struct DnMatrix {
    /// `columns[j][r]`: row `r` is the `r`-th non-corner boundary position.
    pub columns: Vec<Vec<C64>>,
    pub labels: Vec<String>,
    /// Largest per-coefficient perturbation for which every forward solve
    /// converged.
    pub eps_box: f64,
}

impl DnMatrix {
    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn cols(&self) -> usize {
        self.columns.len()
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.columns[c][r]
    }

    /// Max modulus of the entrywise difference.
    pub fn max_diff(&self, other: &DnMatrix) -> f64 {
        self.columns
            .iter()
            .zip(&other.columns)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).norm()))
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.columns
            .iter()
            .flatten()
            .fold(0.0, |m, v| m.max(v.norm()))
    }

    /// CSV with one row per non-corner node: `s` followed by re/im of each column.
    pub fn to_csv(&self, grid: &GridRef) -> String {
        let mut header = vec!["s".to_string()];
        for l in &self.labels {
            header.push(format!("{l}_re"));
            header.push(format!("{l}_im"));
        }
        let mut out = header.join(",");
        out.push('\n');
        for (r, p) in grid.dn_positions().into_iter().enumerate() {
            let mut row = vec![format!("{:.16e}", grid.arclength(p))];
            for col in &self.columns {
                row.push(format!("{:.16e}", col[r].re));
                row.push(format!("{:.16e}", col[r].im));
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Solver settings shared by the DN experiments.
#[derive(Debug, Clone)]
pub struct DnOptions {
    pub newton: NewtonOptions,
    pub eps: f64,
}

impl Default for DnOptions {
    fn default() -> Self {
        DnOptions {
            newton: NewtonOptions::default(),
            eps: DEFAULT_EPS,
        }
    }
}

/// Error floors for DN data of order 0, 1 and 2: solver tolerance divided
/// by `h`, then once or twice more by `eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Floors {
    pub order0: f64,
    pub order1: f64,
    pub order2: f64,
}

impl Floors {
    pub fn new(grid: &GridRef, tol: f64, eps: f64) -> Self {
        let order0 = tol / grid.h();
        Floors {
            order0,
            order1: order0 / eps,
            order2: order0 / (eps * eps),
        }
    }

    pub fn for_order(&self, order: usize) -> f64 {
        match order {
            0 => self.order0,
            1 => self.order1,
            _ => self.order2,
        }
    }
}

/// Multiplier on the floor below which two DN data sets are declared equal.
pub const AGREEMENT_FACTOR: f64 = 10.0;

/// Normal derivative of the forward solution with Dirichlet data `f`.
/// All boundary positions are returned; corners are excluded by callers
/// through [`BoundaryTrace::non_corner`].
pub fn dn_apply(set: &CoefficientSet, f: &BoundaryTrace) -> Result<BoundaryTrace> {
    dn_apply_from(set, f, None, &NewtonOptions::default())
}

pub fn dn_apply_from(
    set: &CoefficientSet,
    f: &BoundaryTrace,
    guess: Option<&Field>,
    opts: &NewtonOptions,
) -> Result<BoundaryTrace> {
    let sol = solve_quasilinear(set, f, guess, opts)?;
    Ok(normal_derivative(&sol.u0))
}

fn check_eps(eps: f64) -> Result<()> {
    if !(EPS_RANGE.0..=EPS_RANGE.1).contains(&eps) {
        return Err(Error::StepOutOfRange(eps));
    }
    Ok(())
}

fn combine(f0: &BoundaryTrace, terms: &[(f64, &BoundaryTrace)]) -> BoundaryTrace {
    terms.iter().fold(f0.clone(), |acc, (s, m)| acc.axpy(*s, m))
}

/// Which finite-difference derivative of the DN map to form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FdOrder {
    /// Central difference in every basis direction.
    First,
    /// Mixed central stencil for each listed pair of basis indices.
    Second(Vec<(usize, usize)>),
}

/// Finite-difference linearization of the DN map around `f0`, with the
/// forward solves warm-started from `background`.
pub fn fd_linearize(
    set: &CoefficientSet,
    background: &ForwardSolution,
    basis: &BoundaryBasis,
    order: &FdOrder,
    opts: &DnOptions,
) -> Result<DnMatrix> {
    check_eps(opts.eps)?;
    let eps = opts.eps;
    let f0 = background.u0.trace();
    let dn = |f: BoundaryTrace| -> Result<Vec<C64>> {
        Ok(dn_apply_from(set, &f, Some(&background.u0), &opts.newton)?.non_corner())
    };
    let (columns, labels): (Vec<Vec<C64>>, Vec<String>) = match order {
        FdOrder::First => {
            let cols = (0..basis.len())
                .into_par_iter()
                .map(|j| {
                    let m = basis.mode(j);
                    let p = dn(combine(&f0, &[(eps, m)]))?;
                    let q = dn(combine(&f0, &[(-eps, m)]))?;
                    Ok(p.iter()
                        .zip(&q)
                        .map(|(a, b)| (a - b) / (2.0 * eps))
                        .collect())
                })
                .collect::<Result<Vec<_>>>()?;
            let labels = (0..basis.len())
                .map(|j| basis.label(j).to_string())
                .collect();
            (cols, labels)
        }
        FdOrder::Second(pairs) => {
            for &(j, k) in pairs {
                if j >= basis.len() || k >= basis.len() {
                    return Err(Error::Invalid(format!(
                        "basis pair ({j}, {k}) out of range"
                    )));
                }
            }
            let cols = pairs
                .par_iter()
                .map(|&(j, k)| {
                    let (a, b) = (basis.mode(j), basis.mode(k));
                    let pp = dn(combine(&f0, &[(eps, a), (eps, b)]))?;
                    let pm = dn(combine(&f0, &[(eps, a), (-eps, b)]))?;
                    let mp = dn(combine(&f0, &[(-eps, a), (eps, b)]))?;
                    let mm = dn(combine(&f0, &[(-eps, a), (-eps, b)]))?;
                    Ok((0..pp.len())
                        .map(|r| (pp[r] - pm[r] - mp[r] + mm[r]) / (4.0 * eps * eps))
                        .collect())
                })
                .collect::<Result<Vec<_>>>()?;
            let labels = pairs
                .iter()
                .map(|&(j, k)| format!("{}x{}", basis.label(j), basis.label(k)))
                .collect();
            (cols, labels)
        }
    };
    Ok(DnMatrix {
        columns,
        labels,
        eps_box: eps,
    })
}

/// DN map columns `Lambda(f0 + amp * mode_j)` for every basis mode, plus
/// `Lambda(f0)` as the first column.
pub fn dn_samples(
    set: &CoefficientSet,
    f0: &BoundaryTrace,
    basis: &BoundaryBasis,
    amp: f64,
    opts: &NewtonOptions,
) -> Result<DnMatrix> {
    let mut traces = vec![f0.clone()];
    traces.extend(basis.modes().iter().map(|m| f0.axpy(amp, m)));
    let columns = traces
        .par_iter()
        .map(|f| Ok(dn_apply_from(set, f, None, opts)?.non_corner()))
        .collect::<Result<Vec<_>>>()?;
    let mut labels = vec!["f0".to_string()];
    labels.extend((0..basis.len()).map(|j| format!("f0+{}", basis.label(j))));
    Ok(DnMatrix {
        columns,
        labels,
        eps_box: amp,
    })
}

/// Solves `L V = 0` with `V = f` on the boundary.
pub fn solve_linearized(l: &EllipticOperator, f: &BoundaryTrace) -> Result<Field> {
    let p = EllipticProblem::homogeneous(l.clone(), f.clone())?;
    crate::elliptic::solve_dirichlet(&p, DEFAULT_TOL)
}

/// Source `-div(q V1 grad V2) - div(q V2 grad V1)` of the second
/// linearized equation.
pub fn second_source(q: &Field, v1: &Field, v2: &Field) -> Field {
    let a = divergence_form(&(q * v1), v2);
    let b = divergence_form(&(q * v2), v1);
    -&(&a + &b)
}

/// Solves `L w = -div(q V1 grad V2) - div(q V2 grad V1)`, `w = 0`.
pub fn solve_second(l: &EllipticOperator, q: &Field, v1: &Field, v2: &Field) -> Result<Field> {
    let fac = l.stencil().factor()?;
    solve_second_with(&fac, q, v1, v2)
}

pub fn solve_second_with(fac: &Factorization, q: &Field, v1: &Field, v2: &Field) -> Result<Field> {
    let grid = q.grid();
    fac.solve(
        &second_source(q, v1, v2),
        &BoundaryTrace::zeros(grid),
        DEFAULT_TOL,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityReport {
    pub lhs: C64,
    pub rhs: C64,
    pub gap: f64,
    /// `gap / max(|lhs|, |rhs|)`, zero when both sides vanish.
    pub relative_gap: f64,
}

/// Compares `-int V0 (div(q V1 grad V2) + div(q V2 grad V1))` with the
/// boundary terms `int V0 Theta d_nu w + int V0 w q d_nu u0 - int w Theta d_nu V0`
/// given by Green's formula when `L* V0 = 0`.
pub fn verify_second_identity(
    set: &CoefficientSet,
    u0: &Field,
    v0: &Field,
    v1: &Field,
    v2: &Field,
    w: &Field,
) -> IdentityReport {
    let source = second_source(&set.q, v1, v2);
    let lhs = integrate(&(v0 * &source), Region::Interior);
    let theta = set.theta(u0).trace();
    let (t0, tw) = (v0.trace(), w.trace());
    let (dw, dv0, du0) = (
        normal_derivative(w),
        normal_derivative(v0),
        normal_derivative(u0),
    );
    let qt = set.q.trace();
    let vals: Vec<C64> = (0..theta.values().len())
        .map(|p| {
            t0.get(p) * theta.get(p) * dw.get(p) + t0.get(p) * tw.get(p) * qt.get(p) * du0.get(p)
                - tw.get(p) * theta.get(p) * dv0.get(p)
        })
        .collect();
    let rhs = integrate_trace(&BoundaryTrace::from_values(set.grid(), vals).expect("same grid"));
    let gap = (lhs - rhs).norm();
    let scale = lhs.norm().max(rhs.norm());
    IdentityReport {
        lhs,
        rhs,
        gap,
        relative_gap: if scale > 0.0 { gap / scale } else { 0.0 },
    }
}

/// Max discrepancy between two DN data sets over the non-corner rows.
pub fn dn_discrepancy(a: &DnMatrix, b: &DnMatrix) -> f64 {
    a.max_diff(b)
}

/// `Lambda(f)` evaluated on `set` at each trace, corners dropped.
pub fn dn_columns(
    set: &CoefficientSet,
    traces: &[BoundaryTrace],
    opts: &NewtonOptions,
) -> Result<Vec<Vec<C64>>> {
    traces
        .par_iter()
        .map(|f| Ok(dn_apply_from(set, f, None, opts)?.non_corner()))
        .collect()
}

/// Max entry of the non-corner rows; helper for relative gaps.
pub fn max_abs_rows(v: &[C64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.norm()))
}

/// Max entrywise gap between two column sets.
pub fn max_gap(a: &[Vec<C64>], b: &[Vec<C64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).norm()))
        .fold(0.0, f64::max)
}
