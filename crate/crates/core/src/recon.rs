//! Recovery steps for a pair of coefficient sets sharing `q`: boundary
//! determination of `sigma`, the `B = 1` and `A = 1` arguments, the coupled
//! system rows, and an end-to-end discrimination harness.

use crate::cgo::{build_cgo, make_frequency, nonvanishing_probe, predicted_limit, Probe};
use crate::dnmap::{BoundaryBasis, DnOptions, Floors, AGREEMENT_FACTOR};
use crate::elliptic::EllipticOperator;
use crate::error::{Error, Result};
use crate::forward::{check_conditions, solve_quasilinear, CoefficientSet, NewtonOptions};
use crate::gauge::{beta_squared, order_margins, second_order_pairs, OrderMargins};
use crate::linops::{build_magnetic, MagneticData};
use crate::mesh::{divergence, gradient, BoundaryTrace, Field, C64, I, ONE};

/// Perturbation margin below which a probe is declared degenerate.
pub const PROBE_DELTA: f64 = 1e-6;

/// A point is certified when `|D| >= CERTIFICATE_FACTOR |P|`.
pub const CERTIFICATE_FACTOR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeStatus {
    Determined,
    Indeterminate,
}

/// Boundary values recovered at one node from the two relations
/// `grad s - 2i s A = e` and `grad s - 2i s A' = e'`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryNode {
    pub position: usize,
    /// `|A - A'|` at the node.
    pub margin: f64,
    pub status: NodeStatus,
    pub sigma_hat: C64,
    pub grad_sigma_hat: [C64; 2],
    /// `sigma - sigma~` taken directly from the two sets.
    pub actual: C64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryReport {
    pub delta: f64,
    pub nodes: Vec<BoundaryNode>,
}

impl BoundaryReport {
    pub fn determined(&self) -> impl Iterator<Item = &BoundaryNode> {
        self.nodes
            .iter()
            .filter(|n| n.status == NodeStatus::Determined)
    }

    pub fn indeterminate_count(&self) -> usize {
        self.nodes.len() - self.determined().count()
    }

    /// Largest recovered `|sigma_hat| + |grad sigma_hat|` over determined nodes.
    pub fn max_recovered(&self) -> f64 {
        self.determined()
            .map(|n| n.sigma_hat.norm() + n.grad_sigma_hat[0].norm() + n.grad_sigma_hat[1].norm())
            .fold(0.0, f64::max)
    }

    /// Largest `|sigma_hat - actual|` over determined nodes.
    pub fn max_recovery_error(&self) -> f64 {
        self.determined()
            .map(|n| (n.sigma_hat - n.actual).norm())
            .fold(0.0, f64::max)
    }
}

/// Recovers `sigma - sigma~` and its gradient on the boundary of `a`
/// against `b`, using the background of `a.f0` and a second background
/// with Dirichlet data `second`. The relation defects are evaluated from
/// the two sets; when their DN data agree they vanish and so does the
/// recovered jet.
pub fn boundary_sigma_determination(
    a: &CoefficientSet,
    b: &CoefficientSet,
    second: &BoundaryTrace,
    opts: &NewtonOptions,
) -> Result<BoundaryReport> {
    a.sigma.check_grid(&b.sigma)?;
    let grid = a.grid().clone();
    let u0 = solve_quasilinear(a, &a.f0, None, opts)?.u0;
    let u1 = solve_quasilinear(a, second, Some(&u0), opts)?.u0;
    let m0 = build_magnetic(a, &u0)?;
    let m1 = build_magnetic(a, &u1)?;
    let s = &a.sigma - &b.sigma;
    let gs = gradient(&s);

    let nodes = grid
        .boundary()
        .iter()
        .enumerate()
        .map(|(p, &k)| {
            let (a0, a1) = (m0.a.at(k), m1.a.at(k));
            let w = [a0[0] - a1[0], a0[1] - a1[1]];
            let margin = (w[0].norm_sqr() + w[1].norm_sqr()).sqrt();
            let sv = s.values()[k];
            let g = gs.at(k);
            let defect = |av: [C64; 2]| [g[0] - 2.0 * I * sv * av[0], g[1] - 2.0 * I * sv * av[1]];
            let (e0, e1) = (defect(a0), defect(a1));
            if margin <= PROBE_DELTA {
                return BoundaryNode {
                    position: p,
                    margin,
                    status: NodeStatus::Indeterminate,
                    sigma_hat: C64::new(f64::NAN, f64::NAN),
                    grad_sigma_hat: [C64::new(f64::NAN, f64::NAN); 2],
                    actual: sv,
                };
            }
            // -2i (A - A') s = e - e', solved in the least-squares sense.
            let rhs = w[0].conj() * (e0[0] - e1[0]) + w[1].conj() * (e0[1] - e1[1]);
            let sigma_hat = rhs / (-2.0 * I * margin * margin);
            let grad = [
                e0[0] + 2.0 * I * sigma_hat * a0[0],
                e0[1] + 2.0 * I * sigma_hat * a0[1],
            ];
            BoundaryNode {
                position: p,
                margin,
                status: NodeStatus::Determined,
                sigma_hat,
                grad_sigma_hat: grad,
                actual: sv,
            }
        })
        .collect();
    Ok(BoundaryReport {
        delta: PROBE_DELTA,
        nodes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BRecoveryReport {
    /// `|B - 1|_inf` for unit boundary data.
    pub deviation: f64,
    /// `|B - 1|_inf` for the perturbed data `1 + 0.1 e_1`.
    pub control_deviation: f64,
    /// False when `q` is not positive, so no maximum principle backs the solve.
    pub max_principle: bool,
}

/// Solves `div(q grad B) = 0` with the given Dirichlet data.
pub fn solve_b(q: &Field, trace: &BoundaryTrace, tol: f64) -> Result<Field> {
    if let Some(k) = q.values().iter().position(|v| v.norm() == 0.0) {
        return Err(Error::VanishingQ(k));
    }
    let grid = q.grid();
    EllipticOperator::divergence_form(q.clone())
        .stencil()
        .factor()?
        .solve(&Field::zeros(grid), trace, tol)
}

pub fn verify_b_recovery(q: &Field, tol: f64) -> Result<BRecoveryReport> {
    let grid = q.grid();
    let one = BoundaryTrace::constant(grid, ONE);
    let b = solve_b(q, &one, tol)?;
    let mode = BoundaryBasis::fourier(grid, 1);
    let perturbed = one.axpy(0.1, mode.mode(1));
    let bc = solve_b(q, &perturbed, tol)?;
    let dev = |f: &Field| {
        f.values()
            .iter()
            .map(|v| (v - ONE).norm())
            .fold(0.0, f64::max)
    };
    Ok(BRecoveryReport {
        deviation: dev(&b),
        control_deviation: dev(&bc),
        max_principle: q.is_real() && q.values().iter().all(|v| v.re > 0.0),
    })
}

/// Directions tried at each probe point: 0, 45, 90 and 135 degrees.
pub const PROBE_DIRECTIONS: [[f64; 2]; 4] = [
    [1.0, 0.0],
    [
        std::f64::consts::FRAC_1_SQRT_2,
        std::f64::consts::FRAC_1_SQRT_2,
    ],
    [0.0, 1.0],
    [
        -std::f64::consts::FRAC_1_SQRT_2,
        std::f64::consts::FRAC_1_SQRT_2,
    ],
];

/// Nine points on `{0.3, 0.5, 0.7}^2`.
pub fn default_probe_points() -> Vec<(f64, f64)> {
    let c = [0.3, 0.5, 0.7];
    c.iter()
        .flat_map(|&y| c.iter().map(move |&x| (x, y)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointCertificate {
    pub x0: (f64, f64),
    pub direction: [f64; 2],
    pub probe: Probe,
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ARecoveryReport {
    pub tau: f64,
    /// Structural margin `min |grad(sigma / q)|` of the background.
    pub structural_margin: f64,
    pub points: Vec<PointCertificate>,
}

impl ARecoveryReport {
    pub fn certified_count(&self) -> usize {
        self.points.iter().filter(|p| p.certified).count()
    }

    /// `max |e^{2i phi~} - 1|` over certified points: zero when the gauge
    /// candidate `A = e^{2i phi~}` is compatible with the certificates.
    pub fn gauge_candidate_defect(&self, phi_tilde: &Field) -> f64 {
        let grid = phi_tilde.grid();
        self.points
            .iter()
            .filter(|p| p.certified)
            .map(|p| {
                let k = grid.nearest(p.x0.0, p.x0.1);
                ((2.0 * I * phi_tilde.values()[k]).exp() - ONE).norm()
            })
            .fold(0.0, f64::max)
    }
}

/// At each point picks the direction maximizing `|P|`, builds the CGO
/// solution at `tau` and certifies the point when `|P| > delta` and
/// `|D| >= |P| / 2`. A certified point forces `(1 - A)(x0) = 0` for any
/// gauge factor `A` compatible with `B = 1`.
pub fn verify_a_recovery(
    set: &CoefficientSet,
    u0: &Field,
    points: &[(f64, f64)],
    tau: f64,
    tol: f64,
) -> Result<ARecoveryReport> {
    let mag = build_magnetic(set, u0)?;
    let structural_margin = check_conditions(set, u0).structural.value;
    let mut built: Vec<Option<crate::cgo::CgoSolution>> = vec![None; PROBE_DIRECTIONS.len()];
    let mut out = Vec::with_capacity(points.len());
    for &x0 in points {
        let mut best = (0, -1.0);
        for (j, d) in PROBE_DIRECTIONS.iter().enumerate() {
            let p = predicted_limit(set, &mag, &make_frequency(*d, tau)?, x0)?.norm();
            if p > best.1 {
                best = (j, p);
            }
        }
        let j = best.0;
        if built[j].is_none() {
            let freq = make_frequency(PROBE_DIRECTIONS[j], tau)?;
            built[j] = Some(build_cgo(set, u0, &mag, &freq, tol)?);
        }
        let sol = built[j].as_ref().expect("built above");
        let probe = nonvanishing_probe(set, &mag, sol, x0)?;
        let p = probe.predicted.norm();
        let certified = p > PROBE_DELTA && probe.value.norm() >= CERTIFICATE_FACTOR * p;
        out.push(PointCertificate {
            x0,
            direction: PROBE_DIRECTIONS[j],
            probe,
            certified,
        });
    }
    Ok(ARecoveryReport {
        tau,
        structural_margin,
        points: out,
    })
}

/// Copy of `set` with `sigma + amplitude * 256 beta^2`; the bump peaks at
/// `amplitude` in the centre and matches `sigma` to first order on the
/// boundary.
pub fn with_sigma_bump(set: &CoefficientSet, amplitude: f64) -> CoefficientSet {
    let bump = beta_squared(set.grid()).scale(C64::from(256.0 * amplitude));
    CoefficientSet {
        sigma: &set.sigma + &bump,
        ..set.clone()
    }
}

/// Rows of the coupled system for two sets and their backgrounds.
#[derive(Debug, Clone)]
pub struct SystemResidual {
    /// `-2i div(A - A~)`.
    pub r1: Field,
    /// `Q - Q~`.
    pub r2: Field,
    /// `M = ((1/Theta, q/Theta), (1/(2 Theta), -q/(2 Theta)))`, row-major.
    pub m: [Field; 4],
    pub det_m: Field,
    /// `max |det M + q / Theta^2|`.
    pub det_gap: f64,
    /// `|r1|_inf / |2 div A|_inf`, or the absolute value when the scale is zero.
    pub r1_relative: f64,
    /// `|r2|_inf / |Q|_inf`, likewise.
    pub r2_relative: f64,
}

fn relative(num: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        num / scale
    } else {
        num
    }
}

pub fn system_residual(
    a: &CoefficientSet,
    u0: &Field,
    b: &CoefficientSet,
    u0b: &Field,
) -> Result<SystemResidual> {
    a.q.check_grid(&b.q)?;
    let ma = build_magnetic(a, u0)?;
    let mb = build_magnetic(b, u0b)?;
    Ok(residual_from(a, &ma, &mb))
}

fn residual_from(a: &CoefficientSet, ma: &MagneticData, mb: &MagneticData) -> SystemResidual {
    let div_a = divergence(&ma.a);
    let div_b = divergence(&mb.a);
    let r1 = (&div_a - &div_b).scale(-2.0 * I);
    let r2 = &ma.q - &mb.q;
    let inv = ma.theta.map(|t| ONE / t);
    let m = [
        inv.clone(),
        &a.q * &inv,
        inv.scale(C64::from(0.5)),
        (&a.q * &inv).scale(C64::from(-0.5)),
    ];
    let det_m = &(&m[0] * &m[3]) - &(&m[1] * &m[2]);
    let expected = &(&a.q * &inv) * &inv;
    let det_gap = (&det_m + &expected).max_abs();
    let scale1 = 2.0 * div_a.max_abs().max(div_b.max_abs());
    let scale2 = ma.q.max_abs().max(mb.q.max_abs());
    SystemResidual {
        r1_relative: relative(r1.max_abs(), scale1),
        r2_relative: relative(r2.max_abs(), scale2),
        r1,
        r2,
        m,
        det_m,
        det_gap,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    /// Every margin is at or below its floor.
    Indistinguishable,
    /// Some margin exceeds ten times its floor; the lowest such order is kept.
    Discriminated {
        order: usize,
        mode: String,
    },
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessReport {
    pub margins: OrderMargins,
    pub floors: Floors,
    pub outcome: Outcome,
}

fn mode_label(basis: &BoundaryBasis, order: usize, index: usize) -> String {
    match order {
        0 => "f0".to_string(),
        1 => basis.label(index).to_string(),
        _ => {
            let (j, k) = second_order_pairs(basis)[index];
            format!("{}*{}", basis.label(j), basis.label(k))
        }
    }
}

/// Compares DN data of orders 0 to 2 for two sets sharing `f0`.
pub fn uniqueness_experiment(
    a: &CoefficientSet,
    b: &CoefficientSet,
    basis: &BoundaryBasis,
    opts: &DnOptions,
) -> Result<UniquenessReport> {
    let margins = order_margins(a, b, basis, opts)?;
    let floors = Floors::new(a.grid(), opts.newton.tol, opts.eps);
    let outcome = if (0..3).all(|o| margins.margins[o] <= floors.for_order(o)) {
        Outcome::Indistinguishable
    } else if let Some(o) =
        (0..3).find(|&o| margins.margins[o] > AGREEMENT_FACTOR * floors.for_order(o))
    {
        Outcome::Discriminated {
            order: o,
            mode: mode_label(basis, o, margins.argmax[o]),
        }
    } else {
        Outcome::Inconclusive
    };
    Ok(UniquenessReport {
        margins,
        floors,
        outcome,
    })
}
