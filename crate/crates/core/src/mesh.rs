//! Uniform lattice on the closed unit square, complex grid functions and
//! the finite-difference calculus built on them.
//!
//! Nodes are numbered row-major, `k = j * n + i`, with `x = i h` and
//! `y = j h`. Boundary nodes are additionally enumerated counterclockwise
//! starting at the origin, so that boundary position `p` sits at arclength
//! `p h` along the perimeter.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Lattice on `[0, 1]^2` with `n` nodes per side.
#[derive(Debug)]
pub struct Grid {
    n: usize,
    h: f64,
    interior: Vec<usize>,
    boundary: Vec<usize>,
    boundary_pos: Vec<Option<usize>>,
    normals: Vec<[f64; 2]>,
    corners: [usize; 4],
}

pub type GridRef = Arc<Grid>;

/// Builds the lattice with `n_per_side` nodes per axis.
pub fn build_grid(n_per_side: usize) -> Result<GridRef> {
    let n = n_per_side;
    if n < 9 {
        return Err(Error::GridTooCoarse(n));
    }
    let h = 1.0 / (n - 1) as f64;
    let idx = |i: usize, j: usize| j * n + i;

    let mut boundary = Vec::with_capacity(4 * (n - 1));
    for i in 0..n - 1 {
        boundary.push(idx(i, 0));
    }
    for j in 0..n - 1 {
        boundary.push(idx(n - 1, j));
    }
    for i in (1..n).rev() {
        boundary.push(idx(i, n - 1));
    }
    for j in (1..n).rev() {
        boundary.push(idx(0, j));
    }

    let mut boundary_pos = vec![None; n * n];
    for (p, &k) in boundary.iter().enumerate() {
        boundary_pos[k] = Some(p);
    }
    let interior = (0..n * n).filter(|&k| boundary_pos[k].is_none()).collect();

    let s = std::f64::consts::FRAC_1_SQRT_2;
    let normals = boundary
        .iter()
        .map(|&k| {
            let (i, j) = (k % n, k / n);
            let nx = if i == 0 {
                -1.0
            } else if i == n - 1 {
                1.0
            } else {
                0.0
            };
            let ny = if j == 0 {
                -1.0
            } else if j == n - 1 {
                1.0
            } else {
                0.0
            };
            if nx != 0.0 && ny != 0.0 {
                [nx * s, ny * s]
            } else {
                [nx, ny]
            }
        })
        .collect();
    let corners = [0, n - 1, 2 * (n - 1), 3 * (n - 1)];

    Ok(Arc::new(Grid {
        n,
        h,
        interior,
        boundary,
        boundary_pos,
        normals,
        corners,
    }))
}

impl Grid {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    pub fn ij(&self, k: usize) -> (usize, usize) {
        (k % self.n, k / self.n)
    }

    pub fn coords(&self, k: usize) -> (f64, f64) {
        let (i, j) = self.ij(k);
        (i as f64 * self.h, j as f64 * self.h)
    }

    /// Node nearest to `(x, y)`.
    pub fn nearest(&self, x: f64, y: f64) -> usize {
        let clamp = |t: f64| ((t / self.h).round().max(0.0) as usize).min(self.n - 1);
        self.index(clamp(x), clamp(y))
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    /// Boundary nodes in counterclockwise arclength order.
    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    pub fn boundary_len(&self) -> usize {
        self.boundary.len()
    }

    pub fn boundary_position(&self, k: usize) -> Option<usize> {
        self.boundary_pos[k]
    }

    pub fn is_boundary(&self, k: usize) -> bool {
        self.boundary_pos[k].is_some()
    }

    /// Outward unit normal at boundary position `p`.
    pub fn normal(&self, p: usize) -> [f64; 2] {
        self.normals[p]
    }

    pub fn is_corner_position(&self, p: usize) -> bool {
        self.corners.contains(&p)
    }

    /// Boundary positions excluding the four corners; the row set of DN data.
    pub fn dn_positions(&self) -> Vec<usize> {
        (0..self.boundary.len())
            .filter(|p| !self.is_corner_position(*p))
            .collect()
    }

    /// Arclength parameter of boundary position `p`, in `[0, 4)`.
    pub fn arclength(&self, p: usize) -> f64 {
        p as f64 * self.h
    }

    /// Interior unknown numbering used by the linear systems.
    pub fn unknown(&self, k: usize) -> Option<usize> {
        let (i, j) = self.ij(k);
        if i == 0 || j == 0 || i == self.n - 1 || j == self.n - 1 {
            None
        } else {
            Some((j - 1) * (self.n - 2) + (i - 1))
        }
    }

    pub fn unknown_count(&self) -> usize {
        (self.n - 2) * (self.n - 2)
    }

    /// Distance from `(x, y)` to the boundary of the square.
    pub fn boundary_distance(x: f64, y: f64) -> f64 {
        x.min(1.0 - x).min(y).min(1.0 - y)
    }
}

fn same_grid(a: &GridRef, b: &GridRef) -> Result<()> {
    if Arc::ptr_eq(a, b) || a.n == b.n {
        Ok(())
    } else {
        Err(Error::GridMismatch(a.n, b.n))
    }
}

/// Complex grid function.
#[derive(Debug, Clone)]
pub struct Field {
    grid: GridRef,
    values: Vec<C64>,
}

impl Field {
    pub fn zeros(grid: &GridRef) -> Self {
        Self::constant(grid, ZERO)
    }

    pub fn constant(grid: &GridRef, value: C64) -> Self {
        Field {
            grid: grid.clone(),
            values: vec![value; grid.len()],
        }
    }

    pub fn from_values(grid: &GridRef, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Invalid(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Field {
            grid: grid.clone(),
            values,
        })
    }

    pub fn from_fn(grid: &GridRef, f: impl Fn(f64, f64) -> C64) -> Self {
        let values = (0..grid.len())
            .map(|k| {
                let (x, y) = grid.coords(k);
                f(x, y)
            })
            .collect();
        Field {
            grid: grid.clone(),
            values,
        }
    }

    pub fn from_real_fn(grid: &GridRef, f: impl Fn(f64, f64) -> f64) -> Self {
        Self::from_fn(grid, |x, y| C64::new(f(x, y), 0.0))
    }

    pub fn grid(&self) -> &GridRef {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn at(&self, i: usize, j: usize) -> C64 {
        self.values[self.grid.index(i, j)]
    }

    /// True when every imaginary part is exactly zero.
    pub fn is_real(&self) -> bool {
        self.values.iter().all(|v| v.im == 0.0)
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(C64, C64) -> C64) -> Field {
        debug_assert_eq!(self.grid.n, other.grid.n);
        Field {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn conj(&self) -> Field {
        self.map(|v| v.conj())
    }

    pub fn scale(&self, s: C64) -> Field {
        self.map(|v| v * s)
    }

    pub fn check_grid(&self, other: &Field) -> Result<()> {
        same_grid(&self.grid, &other.grid)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn max_abs_interior(&self) -> f64 {
        self.grid
            .interior()
            .iter()
            .fold(0.0, |m, &k| m.max(self.values[k].norm()))
    }

    /// Max modulus over nodes whose coordinates lie in `[lo, hi]^2`.
    pub fn max_abs_in_square(&self, lo: f64, hi: f64) -> f64 {
        let tol = 1e-12;
        (0..self.grid.len())
            .filter(|&k| {
                let (x, y) = self.grid.coords(k);
                x >= lo - tol && x <= hi + tol && y >= lo - tol && y <= hi + tol
            })
            .fold(0.0, |m, k| m.max(self.values[k].norm()))
    }

    pub fn min_re(&self) -> (usize, f64) {
        self.values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |(bk, bv), (k, v)| {
                if v.re < bv {
                    (k, v.re)
                } else {
                    (bk, bv)
                }
            })
    }

    pub fn trace(&self) -> BoundaryTrace {
        BoundaryTrace {
            grid: self.grid.clone(),
            values: self
                .grid
                .boundary()
                .iter()
                .map(|&k| self.values[k])
                .collect(),
        }
    }

    /// Overwrites the boundary values with `trace`.
    pub fn set_trace(&mut self, trace: &BoundaryTrace) {
        for (&k, &v) in self.grid.boundary.iter().zip(&trace.values) {
            self.values[k] = v;
        }
    }

    /// Writes the field as `x,y,re,im` rows in node order.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x,y,re,im")?;
        for (k, v) in self.values.iter().enumerate() {
            let (x, y) = self.grid.coords(k);
            writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e}", x, y, v.re, v.im)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    /// Reads a field written by [`Field::write_csv`] onto `grid`.
    pub fn read_csv<R: Read>(grid: &GridRef, input: R) -> Result<Field> {
        let mut values = Vec::with_capacity(grid.len());
        for (line_no, line) in BufReader::new(input).lines().enumerate() {
            let line = line?;
            if line_no == 0 || line.trim().is_empty() {
                continue;
            }
            let cols: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Io(format!("line {}: {e}", line_no + 1)))?;
            if cols.len() != 4 {
                return Err(Error::Io(format!(
                    "line {}: expected 4 columns, found {}",
                    line_no + 1,
                    cols.len()
                )));
            }
            let k = values.len();
            if k < grid.len() {
                let (x, y) = grid.coords(k);
                if (x - cols[0]).abs() > 1e-9 || (y - cols[1]).abs() > 1e-9 {
                    return Err(Error::Io(format!(
                        "line {}: node ({}, {}) does not match grid",
                        line_no + 1,
                        cols[0],
                        cols[1]
                    )));
                }
            }
            values.push(C64::new(cols[2], cols[3]));
        }
        Field::from_values(grid, values)
    }
}

impl Add<&Field> for &Field {
    type Output = Field;
    fn add(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub<&Field> for &Field {
    type Output = Field;
    fn sub(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Mul<&Field> for &Field {
    type Output = Field;
    fn mul(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a * b)
    }
}

impl Mul<C64> for &Field {
    type Output = Field;
    fn mul(self, rhs: C64) -> Field {
        self.scale(rhs)
    }
}

impl Mul<f64> for &Field {
    type Output = Field;
    fn mul(self, rhs: f64) -> Field {
        self.map(|v| v * rhs)
    }
}

impl Neg for &Field {
    type Output = Field;
    fn neg(self) -> Field {
        self.map(|v| -v)
    }
}

/// Pair of fields `(x, y)` holding a vector quantity.
#[derive(Debug, Clone)]
pub struct VectorField {
    pub x: Field,
    pub y: Field,
}

impl VectorField {
    pub fn zeros(grid: &GridRef) -> Self {
        VectorField {
            x: Field::zeros(grid),
            y: Field::zeros(grid),
        }
    }

    pub fn constant(grid: &GridRef, v: [C64; 2]) -> Self {
        VectorField {
            x: Field::constant(grid, v[0]),
            y: Field::constant(grid, v[1]),
        }
    }

    pub fn at(&self, k: usize) -> [C64; 2] {
        [self.x.values[k], self.y.values[k]]
    }

    /// Complex bilinear dot product, no conjugation.
    pub fn dot(&self, other: &VectorField) -> Field {
        &(&self.x * &other.x) + &(&self.y * &other.y)
    }

    pub fn dot_const(&self, v: [C64; 2]) -> Field {
        self.x.zip_map(&self.y, |a, b| a * v[0] + b * v[1])
    }

    pub fn scale_by(&self, s: &Field) -> VectorField {
        VectorField {
            x: &self.x * s,
            y: &self.y * s,
        }
    }

    pub fn scale(&self, s: C64) -> VectorField {
        VectorField {
            x: self.x.scale(s),
            y: self.y.scale(s),
        }
    }

    pub fn map(&self, f: impl Fn(C64) -> C64 + Copy) -> VectorField {
        VectorField {
            x: self.x.map(f),
            y: self.y.map(f),
        }
    }

    /// Pointwise Euclidean modulus `sqrt(|v_x|^2 + |v_y|^2)`.
    pub fn norm(&self) -> Field {
        self.x.zip_map(&self.y, |a, b| {
            C64::new((a.norm_sqr() + b.norm_sqr()).sqrt(), 0.0)
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.norm().max_abs()
    }
}

impl Add<&VectorField> for &VectorField {
    type Output = VectorField;
    fn add(self, rhs: &VectorField) -> VectorField {
        VectorField {
            x: &self.x + &rhs.x,
            y: &self.y + &rhs.y,
        }
    }
}

impl Sub<&VectorField> for &VectorField {
    type Output = VectorField;
    fn sub(self, rhs: &VectorField) -> VectorField {
        VectorField {
            x: &self.x - &rhs.x,
            y: &self.y - &rhs.y,
        }
    }
}

/// Values at the boundary nodes, indexed by boundary position.
#[derive(Debug, Clone)]
pub struct BoundaryTrace {
    grid: GridRef,
    values: Vec<C64>,
}

impl BoundaryTrace {
    pub fn zeros(grid: &GridRef) -> Self {
        Self::constant(grid, ZERO)
    }

    pub fn constant(grid: &GridRef, v: C64) -> Self {
        BoundaryTrace {
            grid: grid.clone(),
            values: vec![v; grid.boundary_len()],
        }
    }

    pub fn from_fn(grid: &GridRef, f: impl Fn(f64, f64) -> C64) -> Self {
        let values = grid
            .boundary()
            .iter()
            .map(|&k| {
                let (x, y) = grid.coords(k);
                f(x, y)
            })
            .collect();
        BoundaryTrace {
            grid: grid.clone(),
            values,
        }
    }

    pub fn from_values(grid: &GridRef, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.boundary_len() {
            return Err(Error::Invalid(format!(
                "trace has {} values, boundary has {} nodes",
                values.len(),
                grid.boundary_len()
            )));
        }
        Ok(BoundaryTrace {
            grid: grid.clone(),
            values,
        })
    }

    pub fn grid(&self) -> &GridRef {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn get(&self, p: usize) -> C64 {
        self.values[p]
    }

    /// Linear combination `self + s * other`.
    pub fn axpy(&self, s: f64, other: &BoundaryTrace) -> BoundaryTrace {
        BoundaryTrace {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| a + b * s)
                .collect(),
        }
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> BoundaryTrace {
        BoundaryTrace {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Values at the non-corner positions, the row layout of DN data.
    pub fn non_corner(&self) -> Vec<C64> {
        self.grid
            .dn_positions()
            .into_iter()
            .map(|p| self.values[p])
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// Max modulus over the non-corner positions.
    pub fn max_abs_non_corner(&self) -> f64 {
        self.grid
            .dn_positions()
            .into_iter()
            .fold(0.0, |m, p| m.max(self.values[p].norm()))
    }
}

// ---------------------------------------------------------------------------
// One-dimensional stencils along an axis. `f(i)` reads the line; `i` ranges
// over `0..n`. One-sided formulas at the ends are second order.

#[inline]
fn d1(f: impl Fn(usize) -> C64, i: usize, n: usize, h: f64) -> C64 {
    if i == 0 {
        (f(0) * -3.0 + f(1) * 4.0 - f(2)) / (2.0 * h)
    } else if i == n - 1 {
        (f(n - 1) * 3.0 - f(n - 2) * 4.0 + f(n - 3)) / (2.0 * h)
    } else {
        (f(i + 1) - f(i - 1)) / (2.0 * h)
    }
}

#[inline]
fn d2(f: impl Fn(usize) -> C64, i: usize, n: usize, h: f64) -> C64 {
    let h2 = h * h;
    if i == 0 {
        (f(0) * 2.0 - f(1) * 5.0 + f(2) * 4.0 - f(3)) / h2
    } else if i == n - 1 {
        (f(n - 1) * 2.0 - f(n - 2) * 5.0 + f(n - 3) * 4.0 - f(n - 4)) / h2
    } else {
        (f(i + 1) - f(i) * 2.0 + f(i - 1)) / h2
    }
}

/// Gradient at every node: centered inside, one-sided second order on the
/// edges (normal direction) and corners (both directions).
pub fn gradient(field: &Field) -> VectorField {
    let g = &field.grid;
    let (n, h) = (g.n, g.h);
    let v = &field.values;
    let mut gx = vec![ZERO; g.len()];
    let mut gy = vec![ZERO; g.len()];
    for j in 0..n {
        for i in 0..n {
            let k = j * n + i;
            gx[k] = d1(|ii| v[j * n + ii], i, n, h);
            gy[k] = d1(|jj| v[jj * n + i], j, n, h);
        }
    }
    VectorField {
        x: Field {
            grid: g.clone(),
            values: gx,
        },
        y: Field {
            grid: g.clone(),
            values: gy,
        },
    }
}

/// Divergence of a vector field, same stencils as [`gradient`].
pub fn divergence(v: &VectorField) -> Field {
    let g = &v.x.grid;
    let (n, h) = (g.n, g.h);
    let (vx, vy) = (&v.x.values, &v.y.values);
    let values = (0..g.len())
        .map(|k| {
            let (i, j) = (k % n, k / n);
            d1(|ii| vx[j * n + ii], i, n, h) + d1(|jj| vy[jj * n + i], j, n, h)
        })
        .collect();
    Field {
        grid: g.clone(),
        values,
    }
}

/// Five-point Laplacian inside; four-point one-sided second differences
/// along the normal direction on the boundary.
pub fn laplacian(field: &Field) -> Field {
    let g = &field.grid;
    let (n, h) = (g.n, g.h);
    let v = &field.values;
    let values = (0..g.len())
        .map(|k| {
            let (i, j) = (k % n, k / n);
            d2(|ii| v[j * n + ii], i, n, h) + d2(|jj| v[jj * n + i], j, n, h)
        })
        .collect();
    Field {
        grid: g.clone(),
        values,
    }
}

/// `div(a grad f)`. Interior nodes use the conservative flux stencil with
/// face coefficients `(a_k + a_nb) / 2`; boundary nodes fall back to the
/// expanded form `a lap f + grad a . grad f` with one-sided stencils.
pub fn divergence_form(a: &Field, field: &Field) -> Field {
    let g = &field.grid;
    let (n, h) = (g.n, g.h);
    let ih2 = 1.0 / (h * h);
    let (av, fv) = (&a.values, &field.values);
    let mut values = vec![ZERO; g.len()];
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            let k = j * n + i;
            let mut acc = ZERO;
            for nb in [k + 1, k - 1, k + n, k - n] {
                acc += (av[k] + av[nb]) * 0.5 * (fv[nb] - fv[k]);
            }
            values[k] = acc * ih2;
        }
    }
    let ga = gradient(a);
    let gf = gradient(field);
    let lf = laplacian(field);
    for &k in g.boundary() {
        values[k] = av[k] * lf.values[k]
            + ga.x.values[k] * gf.x.values[k]
            + ga.y.values[k] * gf.y.values[k];
    }
    Field {
        grid: g.clone(),
        values,
    }
}

/// Outward normal derivative at every boundary position.
pub fn normal_derivative(field: &Field) -> BoundaryTrace {
    let g = &field.grid;
    let values = (0..g.boundary_len())
        .map(|p| normal_derivative_at_position(field, p))
        .collect();
    BoundaryTrace {
        grid: g.clone(),
        values,
    }
}

fn normal_derivative_at_position(field: &Field, p: usize) -> C64 {
    let g = &field.grid;
    let (n, h) = (g.n, g.h);
    let k = g.boundary[p];
    let (i, j) = (k % n, k / n);
    let v = &field.values;
    let nu = g.normals[p];
    let mut acc = ZERO;
    if nu[0] != 0.0 {
        acc += d1(|ii| v[j * n + ii], i, n, h) * nu[0];
    }
    if nu[1] != 0.0 {
        acc += d1(|jj| v[jj * n + i], j, n, h) * nu[1];
    }
    acc
}

/// Outward normal derivative at node `k`; errors on interior nodes.
pub fn normal_derivative_at(field: &Field, k: usize) -> Result<C64> {
    match field.grid.boundary_position(k) {
        Some(p) => Ok(normal_derivative_at_position(field, p)),
        None => Err(Error::NotBoundaryNode(k)),
    }
}

/// Derivative selector for [`diff`].
#[derive(Debug, Clone, Copy)]
pub enum DiffKind<'a> {
    Gradient,
    DivergenceForm(&'a Field),
    Laplacian,
    NormalDerivative,
}

#[derive(Debug, Clone)]
pub enum Derivative {
    Scalar(Field),
    Vector(VectorField),
    Boundary(BoundaryTrace),
}

pub fn diff(field: &Field, kind: DiffKind<'_>) -> Result<Derivative> {
    Ok(match kind {
        DiffKind::Gradient => Derivative::Vector(gradient(field)),
        DiffKind::DivergenceForm(a) => {
            a.check_grid(field)?;
            Derivative::Scalar(divergence_form(a, field))
        }
        DiffKind::Laplacian => Derivative::Scalar(laplacian(field)),
        DiffKind::NormalDerivative => Derivative::Boundary(normal_derivative(field)),
    })
}

/// Region selector for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Interior,
    Boundary,
}

/// Trapezoid quadrature over the square or along the perimeter.
pub fn integrate(field: &Field, region: Region) -> C64 {
    let g = &field.grid;
    let (n, h) = (g.n, g.h);
    match region {
        Region::Interior => {
            let mut acc = ZERO;
            for j in 0..n {
                let wy = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
                for i in 0..n {
                    let wx = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                    acc += field.values[j * n + i] * (wx * wy);
                }
            }
            acc * (h * h)
        }
        Region::Boundary => integrate_trace(&field.trace()),
    }
}

/// Composite trapezoid rule along the closed perimeter.
pub fn integrate_trace(trace: &BoundaryTrace) -> C64 {
    let h = trace.grid.h;
    trace.values.iter().fold(ZERO, |a, &v| a + v) * h
}

/// `integral conj(f) g` over the square.
pub fn inner(f: &Field, g: &Field) -> C64 {
    integrate(&f.zip_map(g, |a, b| a.conj() * b), Region::Interior)
}

/// Discrete L2 norm over the square.
pub fn l2_norm(f: &Field) -> f64 {
    inner(f, f).re.max(0.0).sqrt()
}

/// Renders an `(x, y, values...)` table with a header row.
pub fn table_csv(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        let _ = writeln!(s, "{}", line.join(","));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn grid_counts() {
        let g = build_grid(9).unwrap();
        assert_eq!(g.len(), 81);
        assert_eq!(g.boundary_len(), 32);
        assert_eq!(g.interior().len(), 49);
        assert_eq!(g.h(), 0.125);
        assert_eq!(build_grid(33).unwrap().h(), 0.03125);
        assert!(matches!(build_grid(5), Err(Error::GridTooCoarse(5))));
    }

    #[test]
    fn partition_and_normals() {
        let g = build_grid(11).unwrap();
        let mut seen = vec![0; g.len()];
        for &k in g.interior() {
            seen[k] += 1;
        }
        for &k in g.boundary() {
            seen[k] += 1;
        }
        assert!(seen.iter().all(|&c| c == 1));
        for p in 0..g.boundary_len() {
            let nu = g.normal(p);
            assert!(((nu[0] * nu[0] + nu[1] * nu[1]).sqrt() - 1.0).abs() < 1e-15);
        }
        // Counterclockwise: position 1 is on the bottom edge.
        assert_eq!(g.normal(1), [0.0, -1.0]);
        assert_eq!(g.dn_positions().len(), g.boundary_len() - 4);
    }

    #[test]
    fn linear_gradient_exact() {
        let g = build_grid(9).unwrap();
        let f = Field::from_real_fn(&g, |x, y| x + 2.0 * y);
        let gr = gradient(&f);
        for k in 0..g.len() {
            assert!((gr.x.values()[k] - ONE).norm() < 1e-12);
            assert!((gr.y.values()[k] - 2.0 * ONE).norm() < 1e-12);
        }
    }

    #[test]
    fn quadratic_laplacian_exact() {
        let g = build_grid(9).unwrap();
        let f = Field::from_real_fn(&g, |x, y| x * x + y * y);
        let l = laplacian(&f);
        for k in 0..g.len() {
            assert!((l.values()[k].re - 4.0).abs() < 1e-10, "{k}");
        }
    }

    #[test]
    fn normal_derivative_interior_rejected() {
        let g = build_grid(9).unwrap();
        let f = Field::zeros(&g);
        let k = g.index(4, 4);
        assert_eq!(normal_derivative_at(&f, k), Err(Error::NotBoundaryNode(k)));
        assert!(normal_derivative_at(&f, 0).is_ok());
    }

    #[test]
    fn quadrature_examples() {
        let g = build_grid(17).unwrap();
        let one = Field::constant(&g, ONE);
        assert!((integrate(&one, Region::Interior).re - 1.0).abs() < 1e-14);
        assert!((integrate(&one, Region::Boundary).re - 4.0).abs() < 1e-14);
        let x = Field::from_real_fn(&g, |x, _| x);
        assert!((integrate(&x, Region::Interior).re - 0.5).abs() < 1e-12);
    }

    #[test]
    fn divergence_form_sine() {
        // a = 1 reduces to the Laplacian of sin(pi x) sin(pi y).
        let err = |n: usize| {
            let g = build_grid(n).unwrap();
            let f = Field::from_real_fn(&g, |x, y| (PI * x).sin() * (PI * y).sin());
            let a = Field::constant(&g, ONE);
            let d = divergence_form(&a, &f);
            g.interior()
                .iter()
                .map(|&k| (d.values()[k] + f.values()[k] * (2.0 * PI * PI)).norm())
                .fold(0.0, f64::max)
        };
        let ratio = err(33) / err(65);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn csv_roundtrip() {
        let g = build_grid(9).unwrap();
        let f = Field::from_fn(&g, |x, y| C64::new(x.sin(), y.exp() / 3.0));
        let s = f.to_csv_string();
        assert!(s.starts_with("x,y,re,im\n"));
        let back = Field::read_csv(&g, s.as_bytes()).unwrap();
        assert_eq!(back.values(), f.values());
    }
}
