//! Linearized operator `L`, its adjoint, and the magnetic Schrödinger
//! form `-(grad + iA)^2 + Q` of `-L / Theta`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::elliptic::EllipticOperator;
use crate::error::{Error, Result};
use crate::forward::{linearization, CoefficientSet};
use crate::mesh::{
    divergence, gradient, inner, l2_norm, laplacian, BoundaryTrace, Field, GridRef, VectorField,
    C64, I, ONE, ZERO,
};

/// `L = (Theta, q grad u0, div(q grad u0))` and `L* = (Theta, -q grad u0, 0)`.
#[derive(Debug, Clone)]
pub struct LinearizedPair {
    pub l: EllipticOperator,
    pub adjoint: EllipticOperator,
}

fn check_theta(theta: &Field) -> Result<()> {
    let (node, value) = theta.min_re();
    if !(value > 0.0) {
        let (x, y) = theta.grid().coords(node);
        return Err(Error::EllipticityLost { node, x, y, value });
    }
    Ok(())
}

pub fn build_linearized(set: &CoefficientSet, u0: &Field) -> Result<LinearizedPair> {
    let l = linearization(set, u0);
    check_theta(&l.a)?;
    let adjoint = EllipticOperator {
        a: l.a.clone(),
        b: l.b.scale(-ONE),
        c: Field::zeros(set.grid()),
    };
    Ok(LinearizedPair { l, adjoint })
}

/// Fields of the magnetic reduction at a background `u0`.
#[derive(Debug, Clone)]
pub struct MagneticData {
    pub theta: Field,
    pub x: VectorField,
    pub r: Field,
    /// `A = iX / 2`.
    pub a: VectorField,
    /// `Q = X.X / 4 - div X / 2 + R`.
    pub q: Field,
    /// `Z = -(grad sigma + u0 grad q) / Theta`.
    pub z: VectorField,
    /// Max gap between `Q` and its expanded closed form over nodes at
    /// least two cells from the boundary.
    pub q_consistency: f64,
}

pub fn build_magnetic(set: &CoefficientSet, u0: &Field) -> Result<MagneticData> {
    let theta = set.theta(u0);
    check_theta(&theta)?;
    let inv_theta = theta.map(|t| ONE / t);
    let gu = gradient(u0);
    let gq = gradient(&set.q);
    let gs = gradient(&set.sigma);
    let gt = gradient(&theta);
    let lu = laplacian(u0);
    let qgu = gu.scale_by(&set.q);

    let x = (&gt + &qgu).scale_by(&inv_theta).scale(-ONE);
    let r = &(&gq.dot(&gu) + &(&set.q * &lu)) * &inv_theta.scale(-ONE);
    let a = x.scale(I * 0.5);
    let q = &(&(&x.dot(&x) * 0.25) - &(&divergence(&x) * 0.5)) + &r;
    let z = (&gs + &gq.scale_by(u0)).scale_by(&inv_theta).scale(-ONE);

    let lt = laplacian(&theta);
    let expanded = {
        let first = &(&(&lt - &(&set.q * &lu)) - &gq.dot(&gu)) * &inv_theta.scale(C64::from(0.5));
        let second = &(&(&(&set.q * &set.q) * &gu.dot(&gu)) - &gt.dot(&gt))
            * &(&inv_theta * &inv_theta).scale(C64::from(0.25));
        &first + &second
    };
    let g = set.grid();
    let n = g.n();
    let diff = &q - &expanded;
    let q_consistency = (0..g.len())
        .filter(|&k| {
            let (i, j) = g.ij(k);
            (2..n - 2).contains(&i) && (2..n - 2).contains(&j)
        })
        .fold(0.0, |m: f64, k| m.max(diff.values()[k].norm()));
    for f in [&q, &r, &x.x, &x.y] {
        if f.values()
            .iter()
            .any(|v| !v.re.is_finite() || !v.im.is_finite())
        {
            return Err(Error::NonFinite("magnetic reduction"));
        }
    }
    Ok(MagneticData {
        theta,
        x,
        r,
        a,
        q,
        z,
        q_consistency,
    })
}

/// `-(grad + iA)^2 + Q` as the triple `(-1, -2iA, -i div A + A.A + Q)`.
pub fn magnetic_operator(a: &VectorField, q: &Field) -> EllipticOperator {
    magnetic_operator_with_divergence(a, &divergence(a), q)
}

/// Same as [`magnetic_operator`] with `div A` supplied by the caller.
pub fn magnetic_operator_with_divergence(
    a: &VectorField,
    div_a: &Field,
    q: &Field,
) -> EllipticOperator {
    let g = q.grid().clone();
    let c = &(&(div_a * (-I)) + &a.dot(a)) + q;
    EllipticOperator {
        a: Field::constant(&g, -ONE),
        b: a.scale(-2.0 * I),
        c,
    }
}

/// Smooth complex field `sum_{k,l<=3} c_kl sin(k pi x) sin(l pi y)`,
/// zero on the boundary. The same coefficients are produced on every grid
/// for a given generator state.
pub fn random_zero_trace_field(grid: &GridRef, rng: &mut ChaCha8Rng) -> Field {
    let mut coef = [[ZERO; 3]; 3];
    for row in coef.iter_mut() {
        for c in row.iter_mut() {
            *c = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
    }
    let pi = std::f64::consts::PI;
    let mut f = Field::from_fn(grid, |x, y| {
        let mut acc = ZERO;
        for (k, row) in coef.iter().enumerate() {
            let sx = ((k + 1) as f64 * pi * x).sin();
            for (l, c) in row.iter().enumerate() {
                acc += c * (sx * ((l + 1) as f64 * pi * y).sin());
            }
        }
        acc
    });
    f.set_trace(&BoundaryTrace::zeros(grid));
    f
}

/// `|<f, L g> - <L* f, g>| / (|f| |g|)` for one pair.
pub fn pairing_gap(pair: &LinearizedPair, f: &Field, g: &Field) -> f64 {
    let denom = l2_norm(f) * l2_norm(g);
    if denom == 0.0 {
        return 0.0;
    }
    let lhs = inner(f, &pair.l.apply(g));
    let rhs = inner(&pair.adjoint.apply(f), g);
    (lhs - rhs).norm() / denom
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjointReport {
    pub trials: usize,
    pub max_gap: f64,
}

pub fn verify_adjoint_pairing(pair: &LinearizedPair, trials: usize, seed: u64) -> AdjointReport {
    let grid = pair.l.grid().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_gap: f64 = 0.0;
    for _ in 0..trials {
        let f = random_zero_trace_field(&grid, &mut rng);
        let g = random_zero_trace_field(&grid, &mut rng);
        max_gap = max_gap.max(pairing_gap(pair, &f, &g));
    }
    AdjointReport { trials, max_gap }
}

/// Relative interior residual of
/// `L_{A + grad phi, Q}(e^{-i phi} v) - e^{-i phi} L_{A,Q} v`. The identity
/// is local, so the trace of `phi` is not inspected.
pub fn verify_gauge_conjugation(mag: &MagneticData, phi: &Field, v: &Field) -> Result<f64> {
    phi.check_grid(v)?;
    let vmax = v.max_abs_interior();
    if vmax == 0.0 {
        return Ok(0.0);
    }
    let shifted = &mag.a + &gradient(phi);
    let div_a = divergence(&mag.a);
    let div_shifted = &div_a + &laplacian(phi);
    let phase = phi.map(|p| (-I * p).exp());
    let lhs =
        magnetic_operator_with_divergence(&shifted, &div_shifted, &mag.q).apply(&(&phase * v));
    let rhs = &phase * &magnetic_operator_with_divergence(&mag.a, &div_a, &mag.q).apply(v);
    Ok((&lhs - &rhs).max_abs_interior() / vmax)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{manufactured_solution, CoefficientSet};
    use crate::mesh::build_grid;

    #[test]
    fn linear_case_is_self_adjoint() {
        let g = build_grid(17).unwrap();
        let set = CoefficientSet::from_fns(&g, |x, _| 1.0 + x, |_, _| 0.0, |_, _| 0.0, |_, _| 0.0);
        let u0 = Field::from_real_fn(&g, |x, y| x * y);
        let pair = build_linearized(&set, &u0).unwrap();
        assert_eq!(pair.l.b.max_abs(), 0.0);
        assert_eq!(pair.l.c.max_abs(), 0.0);
        assert_eq!(pair.adjoint.b.max_abs(), 0.0);
    }

    #[test]
    fn manufactured_theta_at_centre() {
        let g = build_grid(33).unwrap();
        let (set, exact) = manufactured_solution(&g);
        let pair = build_linearized(&set, &exact).unwrap();
        let k = g.index(16, 16);
        assert!((pair.l.a.values()[k].re - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn flat_background_has_trivial_magnetic_data() {
        let g = build_grid(9).unwrap();
        let set = CoefficientSet::from_fns(&g, |_, _| 1.0, |_, _| 1.0, |_, _| 0.0, |_, _| 0.0);
        let m = build_magnetic(&set, &Field::zeros(&g)).unwrap();
        assert_eq!(m.x.max_abs(), 0.0);
        assert_eq!(m.r.max_abs(), 0.0);
        assert_eq!(m.a.max_abs(), 0.0);
        assert_eq!(m.q.max_abs(), 0.0);
    }

    #[test]
    fn affine_potential_closed_form() {
        let g = build_grid(17).unwrap();
        let set = CoefficientSet::from_fns(&g, |x, _| 2.0 + x, |_, _| 1.0, |_, _| 0.0, |_, _| 0.0);
        let m = build_magnetic(&set, &Field::zeros(&g)).unwrap();
        for k in 0..g.len() {
            let (x, _) = g.coords(k);
            let ax = -0.5 * I / (2.0 + x);
            assert!((m.a.x.values()[k] - ax).norm() < 1e-12);
            assert!(m.a.y.values()[k].norm() < 1e-12);
        }
        assert!((m.a.x.values()[0] - C64::new(0.0, -0.25)).norm() < 1e-12);
    }

    #[test]
    fn theta_must_be_positive() {
        let g = build_grid(9).unwrap();
        let set = CoefficientSet::from_fns(&g, |_, _| 1.0, |_, _| 1.0, |_, _| 0.0, |_, _| 0.0);
        let u = Field::constant(&g, C64::from(-3.0));
        assert!(matches!(
            build_magnetic(&set, &u),
            Err(Error::EllipticityLost { .. })
        ));
        assert!(matches!(
            build_linearized(&set, &u),
            Err(Error::EllipticityLost { .. })
        ));
    }

    #[test]
    fn zero_fields_give_zero_gap() {
        let g = build_grid(17).unwrap();
        let (set, exact) = manufactured_solution(&g);
        let pair = build_linearized(&set, &exact).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_zero_trace_field(&g, &mut rng);
        assert_eq!(pairing_gap(&pair, &f, &Field::zeros(&g)), 0.0);
        assert_eq!(pairing_gap(&pair, &Field::zeros(&g), &f), 0.0);
    }

    #[test]
    fn trivial_gauges_are_exact() {
        let g = build_grid(17).unwrap();
        let (set, exact) = manufactured_solution(&g);
        let m = build_magnetic(&set, &exact).unwrap();
        let v = Field::from_real_fn(&g, |x, y| (x + y).exp());
        assert_eq!(
            verify_gauge_conjugation(&m, &Field::zeros(&g), &v).unwrap(),
            0.0
        );
        let c = Field::constant(&g, C64::new(0.0, 0.3));
        let r = verify_gauge_conjugation(&m, &c, &v).unwrap();
        assert!(r < 1e-11, "{r}");
    }
}
