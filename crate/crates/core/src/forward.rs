//! Newton solver for `div((sigma + q u) grad u) = F`, `u = f` on the
//! boundary, plus condition checks and a manufactured exact solution.

use crate::elliptic::{EllipticOperator, EllipticProblem, Stencil, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::mesh::{divergence_form, gradient, BoundaryTrace, Field, GridRef, C64, ZERO};

pub const DEFAULT_MAX_ITER: usize = 50;
const MAX_HALVINGS: usize = 30;

/// One instance `(sigma, q, F, f0)` of the quasilinear problem.
#[derive(Debug, Clone)]
pub struct CoefficientSet {
    pub sigma: Field,
    pub q: Field,
    pub source: Field,
    pub f0: BoundaryTrace,
}

impl CoefficientSet {
    pub fn new(sigma: Field, q: Field, source: Field, f0: BoundaryTrace) -> Result<Self> {
        sigma.check_grid(&q)?;
        sigma.check_grid(&source)?;
        if f0.grid().n() != sigma.grid().n() {
            return Err(Error::GridMismatch(f0.grid().n(), sigma.grid().n()));
        }
        Ok(CoefficientSet {
            sigma,
            q,
            source,
            f0,
        })
    }

    /// Analytic coefficients sampled on `grid`.
    pub fn from_fns(
        grid: &GridRef,
        sigma: impl Fn(f64, f64) -> f64,
        q: impl Fn(f64, f64) -> f64,
        source: impl Fn(f64, f64) -> f64,
        f0: impl Fn(f64, f64) -> f64,
    ) -> Self {
        CoefficientSet {
            sigma: Field::from_real_fn(grid, sigma),
            q: Field::from_real_fn(grid, q),
            source: Field::from_real_fn(grid, source),
            f0: BoundaryTrace::from_fn(grid, |x, y| C64::new(f0(x, y), 0.0)),
        }
    }

    pub fn grid(&self) -> &GridRef {
        self.sigma.grid()
    }

    /// `sigma + q u`.
    pub fn theta(&self, u: &Field) -> Field {
        &self.sigma + &(&self.q * u)
    }

    pub fn with_source(&self, source: Field) -> Self {
        CoefficientSet {
            source,
            ..self.clone()
        }
    }

    pub fn with_boundary(&self, f0: BoundaryTrace) -> Self {
        CoefficientSet { f0, ..self.clone() }
    }
}

/// Named analytic coefficient sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// `sigma = 2, q = 1, F = -1, f = 0`.
    Constant,
    /// `sigma = 2 + x, q = 1, F = 0, f = 0`; its solution is `u = 0`.
    Affine,
    /// Closed-form solution `-1 + sqrt(1 + 2w)`, see [`manufactured_solution`].
    Manufactured,
    /// `sigma = 1, q = 0, F = -1, f = 0`.
    Linear,
}

impl Preset {
    pub fn build(self, grid: &GridRef) -> CoefficientSet {
        match self {
            Preset::Constant => {
                CoefficientSet::from_fns(grid, |_, _| 2.0, |_, _| 1.0, |_, _| -1.0, |_, _| 0.0)
            }
            Preset::Affine => {
                CoefficientSet::from_fns(grid, |x, _| 2.0 + x, |_, _| 1.0, |_, _| 0.0, |_, _| 0.0)
            }
            Preset::Manufactured => manufactured_solution(grid).0,
            Preset::Linear => {
                CoefficientSet::from_fns(grid, |_, _| 1.0, |_, _| 0.0, |_, _| -1.0, |_, _| 0.0)
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Constant => "constant",
            Preset::Affine => "affine",
            Preset::Manufactured => "manufactured",
            Preset::Linear => "linear",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "constant" => Some(Preset::Constant),
            "affine" => Some(Preset::Affine),
            "manufactured" => Some(Preset::Manufactured),
            "linear" => Some(Preset::Linear),
            _ => None,
        }
    }
}

/// `w = x(1-x) + y(1-y)`, `sigma = q = 1`, `F = lap w = -4` and exact
/// solution `u = -1 + sqrt(1 + 2w)`.
pub fn manufactured_solution(grid: &GridRef) -> (CoefficientSet, Field) {
    let w = |x: f64, y: f64| x * (1.0 - x) + y * (1.0 - y);
    let u = move |x: f64, y: f64| -1.0 + (1.0 + 2.0 * w(x, y)).sqrt();
    let set = CoefficientSet::from_fns(grid, |_, _| 1.0, |_, _| 1.0, |_, _| -4.0, u);
    (set, Field::from_real_fn(grid, u))
}

/// Options for [`solve_quasilinear`].
#[derive(Debug, Clone)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Relative residual target of each inner linear solve.
    pub linear_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-10,
            max_iter: DEFAULT_MAX_ITER,
            linear_tol: DEFAULT_TOL,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForwardSolution {
    pub u0: Field,
    pub newton_iters: usize,
    pub final_residual: f64,
    /// Interior max-norm residual of every iterate, starting guess first.
    pub residual_history: Vec<f64>,
    /// `(sigma + q u0, q grad u0, div(q grad u0))`.
    pub linearization: EllipticOperator,
}

/// Discrete residual `div_h((sigma + q u) grad_h u) - F` on interior nodes.
pub fn residual(set: &CoefficientSet, u: &Field) -> Field {
    let r = divergence_form(&set.theta(u), u);
    let mut out = &r - &set.source;
    for &k in set.grid().boundary() {
        out.values_mut()[k] = ZERO;
    }
    out
}

/// Exact derivative of [`residual`] with respect to interior values of `u`.
pub fn jacobian(set: &CoefficientSet, u: &Field) -> Stencil {
    let g = set.grid();
    let (n, h) = (g.n(), g.h());
    let ih2 = 1.0 / (h * h);
    let theta = set.theta(u);
    let (t, q, uv) = (theta.values(), set.q.values(), u.values());
    let mut coef = vec![[ZERO; 5]; g.unknown_count()];
    for &k in g.interior() {
        let row = &mut coef[g.unknown(k).expect("interior node")];
        for (slot, nb) in [(1, k + 1), (2, k - 1), (3, k + n), (4, k - n)] {
            let face = (t[k] + t[nb]) * 0.5;
            let du = uv[nb] - uv[k];
            row[slot] = (face + q[nb] * 0.5 * du) * ih2;
            row[0] += (-face + q[k] * 0.5 * du) * ih2;
        }
    }
    Stencil::from_coefficients(g, coef).expect("sized by grid")
}

fn check_ellipticity(set: &CoefficientSet, u: &Field) -> Result<()> {
    let theta = set.theta(u);
    let (node, value) = theta.min_re();
    if !(value > 0.0) {
        let (x, y) = set.grid().coords(node);
        return Err(Error::EllipticityLost { node, x, y, value });
    }
    Ok(())
}

/// Frozen coefficients of the linearized operator at `u0`.
pub fn linearization(set: &CoefficientSet, u0: &Field) -> EllipticOperator {
    let gu = gradient(u0);
    let b = gu.scale_by(&set.q);
    let c = divergence_form(&set.q, u0);
    EllipticOperator {
        a: set.theta(u0),
        b,
        c,
    }
}

/// Solution of the linear problem `div(sigma grad u) = F`, `u = f`.
pub fn linear_guess(set: &CoefficientSet, f: &BoundaryTrace, tol: f64) -> Result<Field> {
    let op = EllipticOperator::divergence_form(set.sigma.clone());
    let p = EllipticProblem::new(op, set.source.clone(), f.clone())?;
    crate::elliptic::solve_dirichlet(&p, tol)
}

pub fn solve_quasilinear(
    set: &CoefficientSet,
    f: &BoundaryTrace,
    guess: Option<&Field>,
    opts: &NewtonOptions,
) -> Result<ForwardSolution> {
    let mut u = match guess {
        Some(g) => {
            set.sigma.check_grid(g)?;
            g.clone()
        }
        None => linear_guess(set, f, opts.linear_tol)?,
    };
    u.set_trace(f);
    check_ellipticity(set, &u)?;

    let mut r = residual(set, &u);
    let mut rn = r.max_abs();
    let mut history = vec![rn];
    let zero_trace = BoundaryTrace::zeros(set.grid());
    let mut iters = 0;
    while rn > opts.tol {
        if iters == opts.max_iter {
            return Err(Error::NewtonDiverged {
                iterations: iters,
                history,
            });
        }
        let delta = jacobian(set, &u)
            .factor()?
            .solve(&-&r, &zero_trace, opts.linear_tol)?;
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial = &u + &(&delta * step);
            check_ellipticity(set, &trial)?;
            let tr = residual(set, &trial);
            let tn = tr.max_abs();
            if tn.is_finite() && tn < rn {
                accepted = Some((trial, tr, tn));
                break;
            }
            step *= 0.5;
        }
        iters += 1;
        match accepted {
            Some((nu, nr, nn)) => {
                u = nu;
                r = nr;
                rn = nn;
                history.push(rn);
            }
            None => {
                // No decrease along the Newton direction: roundoff floor.
                history.push(rn);
                return Err(Error::NewtonDiverged {
                    iterations: iters,
                    history,
                });
            }
        }
    }
    let lin = linearization(set, &u);
    Ok(ForwardSolution {
        u0: u,
        newton_iters: iters,
        final_residual: rn,
        residual_history: history,
        linearization: lin,
    })
}

/// Solve with the set's own boundary data and default options.
pub fn solve(set: &CoefficientSet) -> Result<ForwardSolution> {
    solve_quasilinear(set, &set.f0, None, &NewtonOptions::default())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Margin {
    pub value: f64,
    pub pass: bool,
}

/// The four structural margins of a background solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionReport {
    /// `min (sigma + q u0)`.
    pub ellipticity: Margin,
    /// `max div(q grad u0)`, passing below `10 h^2`.
    pub sign: Margin,
    /// `min |q|`.
    pub nondegeneracy: Margin,
    /// `min |grad(sigma / q)|`; zero when `q` vanishes somewhere.
    pub structural: Margin,
}

const MARGIN_FLOOR: f64 = 1e-10;

pub fn check_conditions(set: &CoefficientSet, u0: &Field) -> ConditionReport {
    let g = set.grid();
    let h = g.h();
    let ell = set.theta(u0).min_re().1;
    let sign = divergence_form(&set.q, u0)
        .values()
        .iter()
        .fold(f64::NEG_INFINITY, |m, v| m.max(v.re));
    let min_q = set
        .q
        .values()
        .iter()
        .fold(f64::INFINITY, |m, v| m.min(v.norm()));
    let structural = if min_q == 0.0 {
        0.0
    } else {
        let ratio = set.sigma.zip_map(&set.q, |s, q| s / q);
        gradient(&ratio)
            .norm()
            .values()
            .iter()
            .fold(f64::INFINITY, |m, v| m.min(v.re))
    };
    ConditionReport {
        ellipticity: Margin {
            value: ell,
            pass: ell > MARGIN_FLOOR,
        },
        sign: Margin {
            value: sign,
            pass: sign <= 10.0 * h * h,
        },
        nondegeneracy: Margin {
            value: min_q,
            pass: min_q > MARGIN_FLOOR,
        },
        structural: Margin {
            value: structural,
            pass: structural > MARGIN_FLOOR,
        },
    }
}
