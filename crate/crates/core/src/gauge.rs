//! Gauge obstructions to recovering `(sigma, F)`: the additive-source gauge
//! of the linear equation, the scaling gauge when `sigma / q` is constant,
//! their breaking by the nonlinearity, and the transformation rules for
//! solutions under a magnetic gauge.

use crate::dnmap::{dn_samples, fd_linearize, BoundaryBasis, DnOptions, FdOrder, Floors};
use crate::elliptic::{Factorization, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::forward::{solve_quasilinear, CoefficientSet};
use crate::linops::{build_magnetic, magnetic_operator_with_divergence};
use crate::mesh::{
    divergence, divergence_form, gradient, laplacian, normal_derivative, BoundaryTrace, Field,
    GridRef, VectorField, C64, I,
};

/// Tolerance for the discrete trace conditions on an additive gauge.
pub const TRACE_TOL: f64 = 1e-12;

/// Amplitude of the boundary perturbations used to sample DN maps.
pub const SAMPLE_AMPLITUDE: f64 = 0.1;

/// Half-width of the flat collar of [`bump`].
pub const BUMP_COLLAR: f64 = 0.25;

/// `C^2` bump on `[0, 1]`: `((t - d)(1 - d - t) / (1/2 - d)^2)^3` inside
/// `[d, 1 - d]` and zero outside, equal to one at `t = 1/2`.
pub fn bump(t: f64) -> f64 {
    let d = BUMP_COLLAR;
    if t <= d || t >= 1.0 - d {
        return 0.0;
    }
    ((t - d) * (1.0 - d - t) / ((0.5 - d) * (0.5 - d))).powi(3)
}

/// `psi(x, y) * bump(x) * bump(y)`; vanishes with its normal derivative
/// on a collar of the boundary, so both trace conditions hold exactly.
pub fn gauge_generator(grid: &GridRef, psi: impl Fn(f64, f64) -> f64) -> Field {
    Field::from_real_fn(grid, |x, y| psi(x, y) * bump(x) * bump(y))
}

/// `(x(1-x) y(1-y))^2`, zero on the boundary.
pub fn beta_squared(grid: &GridRef) -> Field {
    Field::from_real_fn(grid, |x, y| (x * (1.0 - x) * y * (1.0 - y)).powi(2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaugeFlavor {
    AdditiveSource,
    Scaling,
    Magnetic,
}

#[derive(Debug, Clone)]
pub struct GaugePair {
    pub base: CoefficientSet,
    pub transformed: CoefficientSet,
    pub phi: Field,
    pub flavor: GaugeFlavor,
    /// False when the construction is not expected to preserve the DN map.
    pub obstruction_expected: bool,
}

/// Discrete trace and normal derivative of `phi`, as maxima.
pub fn trace_conditions(phi: &Field) -> (f64, f64) {
    (phi.trace().max_abs(), normal_derivative(phi).max_abs())
}

/// Linear pair `(sigma, q = 0, F)` and `(sigma, q = 0, F + div(sigma grad phi))`.
pub fn build_linear_counterexample(
    sigma: &Field,
    source: &Field,
    phi: &Field,
) -> Result<GaugePair> {
    sigma.check_grid(source)?;
    sigma.check_grid(phi)?;
    let (trace, normal) = trace_conditions(phi);
    if trace > TRACE_TOL || normal > TRACE_TOL {
        return Err(Error::TraceConditions { trace, normal });
    }
    let g = sigma.grid();
    let base = CoefficientSet::new(
        sigma.clone(),
        Field::zeros(g),
        source.clone(),
        BoundaryTrace::zeros(g),
    )?;
    let transformed = base.with_source(source + &divergence_form(sigma, phi));
    Ok(GaugePair {
        base,
        transformed,
        phi: phi.clone(),
        flavor: GaugeFlavor::AdditiveSource,
        obstruction_expected: true,
    })
}

impl GaugePair {
    /// `u + phi`, the solution of the transformed problem.
    pub fn shifted_solution(&self, u: &Field) -> Field {
        u + &self.phi
    }
}

/// `(sigma, q, F) -> (sigma^2 / q, sigma, sigma F / q)`.
pub fn build_scaling_gauge(set: &CoefficientSet) -> Result<GaugePair> {
    if let Some(k) = set.q.values().iter().position(|v| v.norm() == 0.0) {
        return Err(Error::VanishingQ(k));
    }
    let ratio = set.sigma.zip_map(&set.q, |s, q| s / q);
    let (lo, hi) = ratio
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| {
            (l.min(v.re), h.max(v.re))
        });
    let constant = ratio.is_real() && hi - lo <= 1e-12 * hi.abs().max(1.0);
    let transformed = CoefficientSet::new(
        &set.sigma * &ratio,
        set.sigma.clone(),
        &set.source * &ratio,
        set.f0.clone(),
    )?;
    Ok(GaugePair {
        base: set.clone(),
        transformed,
        phi: Field::zeros(set.grid()),
        flavor: GaugeFlavor::Scaling,
        obstruction_expected: constant,
    })
}

/// DN discrepancy of two sets over `Lambda(f0)` and `Lambda(f0 + a e_j)`.
pub fn dn_pair_discrepancy(
    a: &CoefficientSet,
    b: &CoefficientSet,
    basis: &BoundaryBasis,
    opts: &DnOptions,
) -> Result<f64> {
    let da = dn_samples(a, &a.f0, basis, SAMPLE_AMPLITUDE, &opts.newton)?;
    let db = dn_samples(b, &b.f0, basis, SAMPLE_AMPLITUDE, &opts.newton)?;
    Ok(da.max_diff(&db))
}

/// DN margins of order 0, 1 and 2 between two coefficient sets sharing
/// the boundary data `f0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderMargins {
    pub margins: [f64; 3],
    /// Index of the basis column (order 1) or pair (order 2) attaining each margin.
    pub argmax: [usize; 3],
}

/// Pairs probed for the second-order comparison.
pub fn second_order_pairs(basis: &BoundaryBasis) -> Vec<(usize, usize)> {
    let m = basis.len().min(5);
    let mut pairs = Vec::new();
    for j in 1..m {
        for k in j..m {
            pairs.push((j, k));
        }
    }
    if pairs.is_empty() {
        pairs.push((0, 0));
    }
    pairs
}

fn column_argmax(a: &[Vec<C64>], b: &[Vec<C64>]) -> (f64, usize) {
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(j, (x, y))| {
            (
                x.iter()
                    .zip(y)
                    .map(|(p, q)| (p - q).norm())
                    .fold(0.0, f64::max),
                j,
            )
        })
        .fold((0.0, 0), |best, c| if c.0 > best.0 { c } else { best })
}

pub fn order_margins(
    a: &CoefficientSet,
    b: &CoefficientSet,
    basis: &BoundaryBasis,
    opts: &DnOptions,
) -> Result<OrderMargins> {
    let sa = solve_quasilinear(a, &a.f0, None, &opts.newton)?;
    let sb = solve_quasilinear(b, &b.f0, None, &opts.newton)?;
    let d0a = normal_derivative(&sa.u0).non_corner();
    let d0b = normal_derivative(&sb.u0).non_corner();
    let (m0, _) = column_argmax(&[d0a], &[d0b]);
    let l1a = fd_linearize(a, &sa, basis, &FdOrder::First, opts)?;
    let l1b = fd_linearize(b, &sb, basis, &FdOrder::First, opts)?;
    let (m1, j1) = column_argmax(&l1a.columns, &l1b.columns);
    let pairs = FdOrder::Second(second_order_pairs(basis));
    let l2a = fd_linearize(a, &sa, basis, &pairs, opts)?;
    let l2b = fd_linearize(b, &sb, basis, &pairs, opts)?;
    let (m2, j2) = column_argmax(&l2a.columns, &l2b.columns);
    Ok(OrderMargins {
        margins: [m0, m1, m2],
        argmax: [0, j1, j2],
    })
}

/// Outcome of the additive gauge applied to the quasilinear equation.
#[derive(Debug, Clone)]
pub struct GaugeBreakReport {
    pub f_shift: f64,
    pub nonlinear: OrderMargins,
    pub linear_control: OrderMargins,
    pub floors: Floors,
    pub transformed: CoefficientSet,
}

impl GaugeBreakReport {
    /// First-order margin over the control's first-order margin.
    pub fn break_ratio(&self) -> f64 {
        let c = self.linear_control.margins[1];
        if c == 0.0 {
            f64::INFINITY
        } else {
            self.nonlinear.margins[1] / c
        }
    }
}

/// `F + div((sigma + q(u0 + phi)) grad(u0 + phi)) - div((sigma + q u0) grad u0)`,
/// which equals `div((sigma + q(u0 + phi)) grad(u0 + phi))` when `u0`
/// solves the base problem.
pub fn transformed_source(set: &CoefficientSet, u0: &Field, phi: &Field) -> Field {
    let shifted = u0 + phi;
    let after = divergence_form(&set.theta(&shifted), &shifted);
    let before = divergence_form(&set.theta(u0), u0);
    &set.source + &(&after - &before)
}

pub fn gauge_break_experiment(
    set: &CoefficientSet,
    phi: &Field,
    basis: &BoundaryBasis,
    opts: &DnOptions,
) -> Result<GaugeBreakReport> {
    let (trace, normal) = trace_conditions(phi);
    if trace > TRACE_TOL || normal > TRACE_TOL {
        return Err(Error::TraceConditions { trace, normal });
    }
    let run = |s: &CoefficientSet| -> Result<(OrderMargins, CoefficientSet)> {
        let base = solve_quasilinear(s, &s.f0, None, &opts.newton)?;
        let t = s.with_source(transformed_source(s, &base.u0, phi));
        Ok((order_margins(s, &t, basis, opts)?, t))
    };
    let (nonlinear, transformed) = run(set)?;
    let control_set = CoefficientSet {
        q: Field::zeros(set.grid()),
        ..set.clone()
    };
    let (linear_control, _) = run(&control_set)?;
    Ok(GaugeBreakReport {
        f_shift: (&transformed.source - &set.source).max_abs(),
        nonlinear,
        linear_control,
        floors: Floors::new(set.grid(), opts.newton.tol, opts.eps),
        transformed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelationReport {
    /// `|v~ - e^{i phi} v|_inf / |v|_inf`.
    pub forward_residual: f64,
    /// `|V0~ - (Theta / Theta~) e^{-i phi} V0|_inf / |V0|_inf`.
    pub adjoint_residual: f64,
}

fn solve_magnetic(
    a: &VectorField,
    div_a: &Field,
    q: &Field,
    trace: &BoundaryTrace,
) -> Result<Field> {
    let fac: Factorization = magnetic_operator_with_divergence(a, div_a, q)
        .stencil()
        .factor()?;
    fac.solve(&Field::zeros(q.grid()), trace, DEFAULT_TOL)
}

/// Checks how solutions transform when the magnetic potential of the
/// background `(set, u0)` is shifted to `A - grad phi` for a purely
/// imaginary `phi` with zero trace, while the adjoint side is normalized by
/// a second conductivity `theta_tilde`.
pub fn verify_solution_relations(
    set: &CoefficientSet,
    u0: &Field,
    phi: &Field,
    theta_tilde: &Field,
    f: &BoundaryTrace,
) -> Result<RelationReport> {
    if phi.values().iter().any(|v| v.re != 0.0) {
        return Err(Error::Invalid(
            "gauge generator must be purely imaginary".into(),
        ));
    }
    let trace = phi.trace().max_abs();
    if trace > TRACE_TOL {
        return Err(Error::TraceConditions {
            trace,
            normal: normal_derivative(phi).max_abs(),
        });
    }
    let mag = build_magnetic(set, u0)?;
    let div_a = divergence(&mag.a);
    let shifted = &mag.a - &gradient(phi);
    let div_shifted = &div_a - &laplacian(phi);

    let v = solve_magnetic(&mag.a, &div_a, &mag.q, f)?;
    let vt = solve_magnetic(&shifted, &div_shifted, &mag.q, f)?;
    let phase = phi.map(|p| (I * p).exp());
    let vmax = v.max_abs().max(f64::MIN_POSITIVE);
    let forward_residual = (&vt - &(&phase * &v)).max_abs() / vmax;

    // Adjoint side: Theta V0 solves the conjugate magnetic equation.
    let conj = |vf: &VectorField| vf.map(|c| c.conj());
    let theta = &mag.theta;
    let q_bar = mag.q.conj();
    let theta_f = BoundaryTrace::from_values(
        set.grid(),
        f.values()
            .iter()
            .zip(theta.trace().values())
            .map(|(a, b)| a * b)
            .collect(),
    )?;
    let w0 = solve_magnetic(&conj(&mag.a), &div_a.conj(), &q_bar, &theta_f)?;
    let wt = solve_magnetic(&conj(&shifted), &div_shifted.conj(), &q_bar, &theta_f)?;
    let v0 = w0.zip_map(theta, |a, b| a / b);
    let v0t = wt.zip_map(theta_tilde, |a, b| a / b);
    let back_phase = phi.map(|p| (-I * p).exp());
    let ratio = theta.zip_map(theta_tilde, |a, b| a / b);
    let predicted = &(&ratio * &back_phase) * &v0;
    let v0max = v0.max_abs().max(f64::MIN_POSITIVE);
    let adjoint_residual = (&v0t - &predicted).max_abs() / v0max;
    Ok(RelationReport {
        forward_residual,
        adjoint_residual,
    })
}

/// Gauge generator `i beta^2` used for the magnetic relations.
pub fn imaginary_beta_gauge(grid: &GridRef, scale: f64) -> Field {
    beta_squared(grid).map(|v| I * v * scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{manufactured_solution, solve, Preset};
    use crate::mesh::{build_grid, ONE};

    #[test]
    fn bump_profile() {
        assert_eq!(bump(0.5), 1.0);
        assert_eq!(bump(0.25), 0.0);
        assert_eq!(bump(0.1), 0.0);
        assert_eq!(bump(0.9), 0.0);
        assert!(bump(0.3) > 0.0);
    }

    #[test]
    fn generator_meets_trace_conditions() {
        for n in [9, 17, 33, 65] {
            let g = build_grid(n).unwrap();
            let phi = gauge_generator(&g, |x, y| 1.0 + x * y);
            let (t, nd) = trace_conditions(&phi);
            assert_eq!(t, 0.0);
            assert_eq!(nd, 0.0);
        }
    }

    #[test]
    fn beta_squared_fails_discrete_normal_condition() {
        let g = build_grid(33).unwrap();
        let sigma = Field::constant(&g, ONE);
        let phi = beta_squared(&g);
        match build_linear_counterexample(&sigma, &Field::zeros(&g), &phi) {
            Err(Error::TraceConditions { trace, normal }) => {
                assert_eq!(trace, 0.0);
                assert!(normal > TRACE_TOL);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn beta_squared_laplacian_at_centre() {
        // Polynomial oracle: lap (x(1-x)y(1-y))^2 at (1/2, 1/2) is -1/8.
        let g = build_grid(33).unwrap();
        let l = laplacian(&beta_squared(&g));
        let k = g.index(16, 16);
        assert!((l.values()[k].re + 0.125).abs() < 1e-3);
    }

    #[test]
    fn zero_gauge_is_identity() {
        let g = build_grid(17).unwrap();
        let sigma = Field::from_real_fn(&g, |x, _| 1.0 + x);
        let f = Field::from_real_fn(&g, |x, y| x - y);
        let pair = build_linear_counterexample(&sigma, &f, &Field::zeros(&g)).unwrap();
        assert_eq!(pair.transformed.source.values(), f.values());
    }

    #[test]
    fn scaling_gauge_flags() {
        let g = build_grid(9).unwrap();
        let unit_set = CoefficientSet::from_fns(&g, |_, _| 1.0, |_, _| 1.0, |x, _| x, |_, _| 0.0);
        let p = build_scaling_gauge(&unit_set).unwrap();
        assert!(p.obstruction_expected);
        assert_eq!(p.transformed.sigma.values(), unit_set.sigma.values());
        assert_eq!(p.transformed.source.values(), unit_set.source.values());

        let c = build_scaling_gauge(&Preset::Constant.build(&g)).unwrap();
        assert!(c.obstruction_expected);
        assert_eq!(c.transformed.sigma.values()[5].re, 4.0);
        assert_eq!(c.transformed.q.values()[5].re, 2.0);
        assert_eq!(c.transformed.source.values()[5].re, -2.0);

        let a = build_scaling_gauge(&Preset::Affine.build(&g)).unwrap();
        assert!(!a.obstruction_expected);

        assert!(matches!(
            build_scaling_gauge(&Preset::Linear.build(&g)),
            Err(Error::VanishingQ(0))
        ));
    }

    #[test]
    fn shifted_solution_keeps_cauchy_data() {
        let g = build_grid(33).unwrap();
        let (set, exact) = manufactured_solution(&g);
        let phi = gauge_generator(&g, |_, _| 0.5);
        let pair = build_linear_counterexample(&set.sigma, &set.source, &phi).unwrap();
        let shifted = pair.shifted_solution(&exact);
        let a = normal_derivative(&shifted);
        let b = normal_derivative(&exact);
        for p in 0..g.boundary_len() {
            assert!((a.get(p) - b.get(p)).norm() <= 1e-12);
            assert_eq!(shifted.trace().get(p), exact.trace().get(p));
        }
    }

    #[test]
    fn identical_relation_is_exact() {
        let g = build_grid(17).unwrap();
        let (set, _) = manufactured_solution(&g);
        let sol = solve(&set).unwrap();
        let theta = set.theta(&sol.u0);
        let f = BoundaryTrace::from_fn(&g, |x, y| C64::new(x + y, 0.0));
        let rep = verify_solution_relations(&set, &sol.u0, &Field::zeros(&g), &theta, &f).unwrap();
        assert_eq!(rep.forward_residual, 0.0);
        assert_eq!(rep.adjoint_residual, 0.0);
    }

    #[test]
    fn zero_phi_gauge_break_is_silent() {
        let g = build_grid(17).unwrap();
        let (set, _) = manufactured_solution(&g);
        let basis = BoundaryBasis::fourier(&g, 1);
        let rep =
            gauge_break_experiment(&set, &Field::zeros(&g), &basis, &DnOptions::default()).unwrap();
        assert_eq!(rep.f_shift, 0.0);
        assert_eq!(rep.nonlinear.margins, [0.0; 3]);
        assert_eq!(rep.linear_control.margins, [0.0; 3]);
    }
}
