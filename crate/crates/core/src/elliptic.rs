//! Generic linear Dirichlet problem `div(a grad v) + b . grad v + c v = g`.

use crate::error::{Error, Result};
use crate::linalg::BandLu;
use crate::mesh::{BoundaryTrace, Field, GridRef, VectorField, C64, ONE, ZERO};

/// Default relative residual target for linear solves.
pub const DEFAULT_TOL: f64 = 1e-10;

const REFINEMENT_STEPS: usize = 6;

/// Coefficient triple `(a, b, c)`.
#[derive(Debug, Clone)]
pub struct EllipticOperator {
    pub a: Field,
    pub b: VectorField,
    pub c: Field,
}

impl EllipticOperator {
    pub fn new(a: Field, b: VectorField, c: Field) -> Result<Self> {
        a.check_grid(&b.x)?;
        a.check_grid(&b.y)?;
        a.check_grid(&c)?;
        Ok(EllipticOperator { a, b, c })
    }

    /// `div(a grad .)` with no lower-order terms.
    pub fn divergence_form(a: Field) -> Self {
        let g = a.grid().clone();
        EllipticOperator {
            a,
            b: VectorField::zeros(&g),
            c: Field::zeros(&g),
        }
    }

    pub fn laplacian(grid: &GridRef) -> Self {
        Self::divergence_form(Field::constant(grid, ONE))
    }

    pub fn grid(&self) -> &GridRef {
        self.a.grid()
    }

    /// Real instance with `a > 0` and `c <= 0`, for which the discrete
    /// maximum principle is expected.
    pub fn is_maximum_principle(&self) -> bool {
        self.a.is_real()
            && self.b.x.is_real()
            && self.b.y.is_real()
            && self.c.is_real()
            && self.a.values().iter().all(|v| v.re > 0.0)
            && self.c.values().iter().all(|v| v.re <= 0.0)
    }

    /// Five-point stencil of the operator at every interior node.
    pub fn stencil(&self) -> Stencil {
        let g = self.grid().clone();
        let (n, h) = (g.n(), g.h());
        let ih2 = 1.0 / (h * h);
        let i2h = 0.5 / h;
        let (a, bx, by, c) = (
            self.a.values(),
            self.b.x.values(),
            self.b.y.values(),
            self.c.values(),
        );
        let mut coef = vec![[ZERO; 5]; g.unknown_count()];
        for &k in g.interior() {
            let u = g.unknown(k).expect("interior node");
            let ae = (a[k] + a[k + 1]) * 0.5;
            let aw = (a[k] + a[k - 1]) * 0.5;
            let an = (a[k] + a[k + n]) * 0.5;
            let as_ = (a[k] + a[k - n]) * 0.5;
            coef[u] = [
                -(ae + aw + an + as_) * ih2 + c[k],
                ae * ih2 + bx[k] * i2h,
                aw * ih2 - bx[k] * i2h,
                an * ih2 + by[k] * i2h,
                as_ * ih2 - by[k] * i2h,
            ];
        }
        Stencil { grid: g, coef }
    }

    /// Discrete operator applied to `v`; zero on boundary nodes.
    pub fn apply(&self, v: &Field) -> Field {
        self.stencil().apply(v)
    }
}

/// Per-interior-node coefficients `[center, east, west, north, south]`,
/// indexed by interior unknown.
#[derive(Debug, Clone)]
pub struct Stencil {
    grid: GridRef,
    coef: Vec<[C64; 5]>,
}

impl Stencil {
    pub fn from_coefficients(grid: &GridRef, coef: Vec<[C64; 5]>) -> Result<Self> {
        if coef.len() != grid.unknown_count() {
            return Err(Error::Invalid(format!(
                "stencil has {} rows, grid has {} interior nodes",
                coef.len(),
                grid.unknown_count()
            )));
        }
        Ok(Stencil {
            grid: grid.clone(),
            coef,
        })
    }

    pub fn grid(&self) -> &GridRef {
        &self.grid
    }

    pub fn coefficients(&self) -> &[[C64; 5]] {
        &self.coef
    }

    #[inline]
    fn neighbours(&self, k: usize) -> [usize; 5] {
        let n = self.grid.n();
        [k, k + 1, k - 1, k + n, k - n]
    }

    /// Sparse row of unknown `u` as `(node, coefficient)` pairs, boundary
    /// neighbours included.
    pub fn row(&self, u: usize) -> Vec<(usize, C64)> {
        let m = self.grid.n() - 2;
        let k = self.grid.index(u % m + 1, u / m + 1);
        self.neighbours(k).into_iter().zip(self.coef[u]).collect()
    }

    pub fn apply(&self, v: &Field) -> Field {
        let g = &self.grid;
        let vals = v.values();
        let mut out = vec![ZERO; g.len()];
        for &k in g.interior() {
            let u = g.unknown(k).expect("interior node");
            let nb = self.neighbours(k);
            let cf = &self.coef[u];
            out[k] = (0..5).fold(ZERO, |s, t| s + cf[t] * vals[nb[t]]);
        }
        Field::from_values(g, out).expect("same grid")
    }

    /// Band LU of the interior block.
    pub fn factor(&self) -> Result<Factorization> {
        let g = &self.grid;
        let m = g.n() - 2;
        let mut lu = BandLu::new(g.unknown_count(), m, m);
        for &k in g.interior() {
            let u = g.unknown(k).expect("interior node");
            for (t, nb) in self.neighbours(k).into_iter().enumerate() {
                if let Some(col) = g.unknown(nb) {
                    lu.set(u, col, self.coef[u][t]);
                }
            }
        }
        lu.factor()?;
        Ok(Factorization {
            stencil: self.clone(),
            lu,
        })
    }

    /// Interior right-hand side with the Dirichlet values moved across.
    fn reduced_rhs(&self, rhs: &Field, trace: &BoundaryTrace) -> Vec<C64> {
        let g = &self.grid;
        let mut b = vec![ZERO; g.unknown_count()];
        for &k in g.interior() {
            let u = g.unknown(k).expect("interior node");
            let mut acc = rhs.values()[k];
            for (t, nb) in self.neighbours(k).into_iter().enumerate() {
                if let Some(p) = g.boundary_position(nb) {
                    acc -= self.coef[u][t] * trace.get(p);
                }
            }
            b[u] = acc;
        }
        b
    }
}

fn max_abs(v: &[C64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.norm()))
}

/// Factored interior operator, reusable across right-hand sides and traces.
#[derive(Debug, Clone)]
pub struct Factorization {
    stencil: Stencil,
    lu: BandLu,
}

/// Solution together with the relative residual it attained.
#[derive(Debug, Clone)]
pub struct Solved {
    pub field: Field,
    pub residual: f64,
}

impl Factorization {
    pub fn stencil(&self) -> &Stencil {
        &self.stencil
    }

    /// Solves with iterative refinement until the relative residual
    /// `|b - A x|_inf / |b|_inf` is at most `tol`.
    pub fn solve(&self, rhs: &Field, trace: &BoundaryTrace, tol: f64) -> Result<Field> {
        self.solve_with_residual(rhs, trace, tol).map(|s| s.field)
    }

    pub fn solve_with_residual(
        &self,
        rhs: &Field,
        trace: &BoundaryTrace,
        tol: f64,
    ) -> Result<Solved> {
        let st = &self.stencil;
        let g = st.grid.clone();
        if rhs.grid().n() != g.n() {
            return Err(Error::GridMismatch(rhs.grid().n(), g.n()));
        }
        let b = st.reduced_rhs(rhs, trace);
        let scale = max_abs(&b);
        let mut x = b.clone();
        self.lu.solve(&mut x);

        let mut field = Field::zeros(&g);
        field.set_trace(trace);
        let interior = g.interior().to_vec();
        let write = |field: &mut Field, x: &[C64]| {
            let vals = field.values_mut();
            for &k in &interior {
                vals[k] = x[g.unknown(k).expect("interior node")];
            }
        };
        write(&mut field, &x);

        let residual_of = |field: &Field| -> Vec<C64> {
            let ax = st.apply(field);
            let mut r = vec![ZERO; g.unknown_count()];
            for &k in g.interior() {
                r[g.unknown(k).expect("interior node")] = rhs.values()[k] - ax.values()[k];
            }
            r
        };
        let mut r = residual_of(&field);
        let mut rel = if scale > 0.0 {
            max_abs(&r) / scale
        } else {
            max_abs(&r)
        };
        for _ in 0..REFINEMENT_STEPS {
            if !rel.is_finite() || rel <= tol * 1e-3 {
                break;
            }
            let mut d = r.clone();
            self.lu.solve(&mut d);
            let trial: Vec<C64> = x.iter().zip(&d).map(|(a, b)| a + b).collect();
            let mut trial_field = field.clone();
            write(&mut trial_field, &trial);
            let tr = residual_of(&trial_field);
            let trel = if scale > 0.0 {
                max_abs(&tr) / scale
            } else {
                max_abs(&tr)
            };
            if trel >= rel {
                break;
            }
            x = trial;
            field = trial_field;
            r = tr;
            rel = trel;
        }
        if !rel.is_finite() {
            return Err(Error::NonFinite("linear solve"));
        }
        if rel > tol {
            return Err(Error::ResidualNotMet {
                achieved: rel,
                target: tol,
            });
        }
        Ok(Solved {
            field,
            residual: rel,
        })
    }
}

/// Operator, right-hand side and Dirichlet data of one linear problem.
#[derive(Debug, Clone)]
pub struct EllipticProblem {
    pub op: EllipticOperator,
    pub rhs: Field,
    pub trace: BoundaryTrace,
}

impl EllipticProblem {
    pub fn new(op: EllipticOperator, rhs: Field, trace: BoundaryTrace) -> Result<Self> {
        op.a.check_grid(&rhs)?;
        if trace.grid().n() != rhs.grid().n() {
            return Err(Error::GridMismatch(trace.grid().n(), rhs.grid().n()));
        }
        Ok(EllipticProblem { op, rhs, trace })
    }

    /// Homogeneous equation with Dirichlet data `trace`.
    pub fn homogeneous(op: EllipticOperator, trace: BoundaryTrace) -> Result<Self> {
        let rhs = Field::zeros(op.grid());
        Self::new(op, rhs, trace)
    }
}

/// Assembled interior system: `stencil` acting on unknowns equals `rhs`.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub stencil: Stencil,
    pub rhs: Vec<C64>,
}

impl LinearSystem {
    /// Matrix row of unknown `u` restricted to unknown columns.
    pub fn matrix_row(&self, u: usize) -> Vec<(usize, C64)> {
        let g = &self.stencil.grid;
        self.stencil
            .row(u)
            .into_iter()
            .filter_map(|(k, v)| g.unknown(k).map(|c| (c, v)))
            .collect()
    }
}

pub fn assemble(problem: &EllipticProblem) -> Result<LinearSystem> {
    problem.op.a.check_grid(&problem.rhs)?;
    let stencil = problem.op.stencil();
    let rhs = stencil.reduced_rhs(&problem.rhs, &problem.trace);
    Ok(LinearSystem { stencil, rhs })
}

pub fn solve_dirichlet(problem: &EllipticProblem, tol: f64) -> Result<Field> {
    let sys = assemble(problem)?;
    sys.stencil
        .factor()?
        .solve(&problem.rhs, &problem.trace, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_grid;
    use std::f64::consts::PI;

    #[test]
    fn laplacian_rows() {
        let g = build_grid(9).unwrap();
        let h2 = g.h() * g.h();
        let op = EllipticOperator::laplacian(&g);
        let p = EllipticProblem::homogeneous(op, BoundaryTrace::zeros(&g)).unwrap();
        let sys = assemble(&p).unwrap();
        let u = g.unknown(g.index(3, 3)).unwrap();
        let row = sys.matrix_row(u);
        assert_eq!(row.len(), 5);
        assert!((row[0].1 * h2 + 4.0).norm() < 1e-12);
        for e in &row[1..] {
            assert!((e.1 * h2 - 1.0).norm() < 1e-12);
        }
        // Corner unknown keeps only its two interior neighbours.
        assert_eq!(sys.matrix_row(0).len(), 3);
    }

    #[test]
    fn shift_and_convection() {
        let g = build_grid(9).unwrap();
        let base = EllipticOperator::laplacian(&g).stencil();
        let shifted = EllipticOperator::new(
            Field::constant(&g, ONE),
            VectorField::zeros(&g),
            Field::constant(&g, -ONE),
        )
        .unwrap()
        .stencil();
        let conv = EllipticOperator::new(
            Field::constant(&g, ONE),
            VectorField::constant(&g, [ONE, ZERO]),
            Field::zeros(&g),
        )
        .unwrap()
        .stencil();
        let i2h = 0.5 / g.h();
        for u in 0..g.unknown_count() {
            let (b, s, c) = (
                base.coefficients()[u],
                shifted.coefficients()[u],
                conv.coefficients()[u],
            );
            assert!((s[0] - b[0] + 1.0).norm() < 1e-12);
            assert!((c[1] - b[1] - i2h).norm() < 1e-12);
            assert!((c[2] - b[2] + i2h).norm() < 1e-12);
            assert_eq!(c[3], b[3]);
        }
    }

    #[test]
    fn linear_trace_reproduced() {
        let g = build_grid(17).unwrap();
        let exact = Field::from_real_fn(&g, |x, y| x + 2.0 * y);
        let p =
            EllipticProblem::homogeneous(EllipticOperator::laplacian(&g), exact.trace()).unwrap();
        let v = solve_dirichlet(&p, DEFAULT_TOL).unwrap();
        assert!((&v - &exact).max_abs() < 1e-12);
    }

    #[test]
    fn zero_data_zero_solution() {
        let g = build_grid(9).unwrap();
        let p =
            EllipticProblem::homogeneous(EllipticOperator::laplacian(&g), BoundaryTrace::zeros(&g))
                .unwrap();
        let v = solve_dirichlet(&p, DEFAULT_TOL).unwrap();
        assert_eq!(v.max_abs(), 0.0);
    }

    #[test]
    fn poisson_sine_second_order() {
        let err = |n: usize| {
            let g = build_grid(n).unwrap();
            let exact = Field::from_real_fn(&g, |x, y| (PI * x).sin() * (PI * y).sin());
            let rhs = &exact * (-2.0 * PI * PI);
            let p = EllipticProblem::new(
                EllipticOperator::laplacian(&g),
                rhs,
                BoundaryTrace::zeros(&g),
            )
            .unwrap();
            let v = solve_dirichlet(&p, DEFAULT_TOL).unwrap();
            (&v - &exact).max_abs()
        };
        let (e1, e2) = (err(17), err(33));
        assert!(e1 < 0.01);
        assert!((3.5..=4.5).contains(&(e1 / e2)), "ratio {}", e1 / e2);
    }

    #[test]
    fn unreachable_tolerance_reports_residual() {
        let g = build_grid(9).unwrap();
        let rhs = Field::from_real_fn(&g, |x, y| x * y + 1.0);
        let p = EllipticProblem::new(
            EllipticOperator::laplacian(&g),
            rhs,
            BoundaryTrace::zeros(&g),
        )
        .unwrap();
        // A negative target can never be met; the error carries what was reached.
        match solve_dirichlet(&p, -1.0) {
            Err(Error::ResidualNotMet { achieved, target }) => {
                assert!((0.0..1e-12).contains(&achieved));
                assert_eq!(target, -1.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn factorization_reuse_matches_direct() {
        let g = build_grid(13).unwrap();
        let op = EllipticOperator::new(
            Field::from_real_fn(&g, |x, _| 2.0 + x),
            VectorField::constant(&g, [C64::new(0.3, 0.0), C64::new(0.0, 0.2)]),
            Field::from_real_fn(&g, |_, y| -y),
        )
        .unwrap();
        let fac = op.stencil().factor().unwrap();
        for m in 1..3 {
            let trace = BoundaryTrace::from_fn(&g, |x, y| C64::new((m as f64 * x).cos(), y));
            let p = EllipticProblem::homogeneous(op.clone(), trace.clone()).unwrap();
            let a = solve_dirichlet(&p, DEFAULT_TOL).unwrap();
            let b = fac.solve(&Field::zeros(&g), &trace, DEFAULT_TOL).unwrap();
            assert!((&a - &b).max_abs() < 1e-13);
        }
    }
}
