use std::fs::File;
use std::path::Path;

use quasilin::cgo::{build_cgo, make_frequency, nonvanishing_probe, MAX_TAU_H};
use quasilin::dnmap::{
    dn_samples, fd_linearize, solve_linearized, solve_second_with, BoundaryBasis, DnOptions,
    FdOrder, Floors, AGREEMENT_FACTOR,
};
use quasilin::forward::{
    check_conditions, manufactured_solution, solve_quasilinear, CoefficientSet, ForwardSolution,
    NewtonOptions, Preset,
};
use quasilin::gauge::{
    build_linear_counterexample, gauge_break_experiment, gauge_generator, second_order_pairs,
};
use quasilin::linops::{
    build_linearized, build_magnetic, verify_adjoint_pairing, verify_gauge_conjugation,
};
use quasilin::mesh::{build_grid, normal_derivative, table_csv, Field, GridRef, C64};
use quasilin::recon::{
    default_probe_points, system_residual, uniqueness_experiment, verify_a_recovery,
    verify_b_recovery, with_sigma_bump, Outcome, CERTIFICATE_FACTOR, PROBE_DELTA,
};
use quasilin::{Error, Result};

use crate::config::{Command, ConfigError, RunConfig};
use crate::report::{Report, Status};

/// Interior point and direction used by `cgo-probe`.
pub const PROBE_POINT: (f64, f64) = (0.5, 0.5);
pub const PROBE_DIRECTION: [f64; 2] = [1.0, 0.0];
/// Peak of the conductivity bump compared against in `recon`.
pub const BUMP_AMPLITUDE: f64 = 0.01;
/// Identity residuals below this are treated as exact in `verify`.
pub const EXACT_LEVEL: f64 = 1e-10;
/// Constant `C` of the `C h^2` bound on the gap between `Q` and its
/// expanded closed form.
pub const MAGNETIC_CONSISTENCY_C: f64 = 100.0;
/// Random pairs drawn by the adjoint check in `verify`.
pub const ADJOINT_TRIALS: usize = 20;

/// Report plus named CSV artifacts.
#[derive(Debug, Clone, Default)]
pub struct Output {
    pub report: Report,
    pub files: Vec<(String, String)>,
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    grid: GridRef,
    set: CoefficientSet,
    out: Output,
}

impl Ctx<'_> {
    fn newton(&self) -> NewtonOptions {
        NewtonOptions {
            tol: self.cfg.tol,
            ..NewtonOptions::default()
        }
    }

    fn dn_options(&self) -> DnOptions {
        DnOptions {
            newton: self.newton(),
            eps: self.cfg.eps,
        }
    }

    fn background(&self) -> Result<ForwardSolution> {
        solve_quasilinear(&self.set, &self.set.f0, None, &self.newton())
    }

    fn file(&mut self, name: &str, content: String) {
        self.out.files.push((name.to_string(), content));
    }

    fn metric(&mut self, name: impl Into<String>, v: f64) {
        self.out.report.metric(name, v);
    }

    fn has_csv(&self) -> bool {
        let f = &self.cfg.fields;
        f.sigma.is_some() || f.q.is_some() || f.source.is_some()
    }

    /// Same coefficients on another grid; `None` when they come from CSV.
    fn set_on(&self, n: usize) -> Result<Option<CoefficientSet>> {
        if self.has_csv() {
            return Ok(None);
        }
        Ok(Some(self.cfg.preset.build(&build_grid(n)?)))
    }
}

fn read_field(
    grid: &GridRef,
    path: &Path,
    key: &'static str,
) -> std::result::Result<Field, ConfigError> {
    let bad = |message: String| ConfigError::Invalid { key, message };
    let file = File::open(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
    Field::read_csv(grid, file).map_err(|e| bad(format!("{}: {e}", path.display())))
}

/// Preset coefficients with any CSV fields swapped in.
pub fn load_set(cfg: &RunConfig) -> std::result::Result<CoefficientSet, ConfigError> {
    let grid = build_grid(cfg.grid_n).map_err(|e| ConfigError::Invalid {
        key: "grid_n",
        message: e.to_string(),
    })?;
    let base = cfg.preset.build(&grid);
    let f = &cfg.fields;
    let sigma = match &f.sigma {
        Some(p) => read_field(&grid, p, "fields.sigma")?,
        None => base.sigma.clone(),
    };
    let q = match &f.q {
        Some(p) => read_field(&grid, p, "fields.q")?,
        None => base.q.clone(),
    };
    let source = match &f.source {
        Some(p) => read_field(&grid, p, "fields.source")?,
        None => base.source.clone(),
    };
    CoefficientSet::new(sigma, q, source, base.f0.clone()).map_err(|e| ConfigError::Invalid {
        key: "fields",
        message: e.to_string(),
    })
}

/// Runs the configured experiment. Module failures become a FAIL verdict
/// named `error`; only configuration problems are returned as errors.
pub fn run(cfg: &RunConfig) -> std::result::Result<Output, ConfigError> {
    let set = load_set(cfg)?;
    let mut ctx = Ctx {
        cfg,
        grid: set.grid().clone(),
        set,
        out: Output::default(),
    };
    let result = match cfg.command {
        Command::Forward => forward(&mut ctx),
        Command::Dn => dn(&mut ctx),
        Command::Linearize => linearize(&mut ctx),
        Command::Verify => verify(&mut ctx),
        Command::GaugeDemo if cfg.linear => gauge_linear(&mut ctx),
        Command::GaugeDemo => gauge_break(&mut ctx),
        Command::CgoProbe => cgo_probe(&mut ctx),
        Command::Recon => recon(&mut ctx),
    };
    if let Err(e) = result {
        ctx.out.report.verdict("error", Status::Fail, e.to_string());
    }
    Ok(ctx.out)
}

fn forward(ctx: &mut Ctx) -> Result<()> {
    let sol = ctx.background()?;
    let h = ctx.grid.h();
    ctx.metric("newton_iters", sol.newton_iters as f64);
    ctx.metric("final_residual", sol.final_residual);
    let c = check_conditions(&ctx.set, &sol.u0);
    ctx.metric("ellipticity_margin", c.ellipticity.value);
    ctx.metric("sign_margin", c.sign.value);
    ctx.metric("nondegeneracy_margin", c.nondegeneracy.value);
    ctx.metric("structural_margin", c.structural.value);
    let r = &mut ctx.out.report;
    r.at_most("newton_converged", sol.final_residual, ctx.cfg.tol);
    r.at_least("ellipticity", c.ellipticity.value, 1e-10);
    r.at_most("sign_condition", c.sign.value, 10.0 * h * h);
    if c.nondegeneracy.pass {
        r.verdict(
            "nondegeneracy",
            Status::Pass,
            format!("min |q| = {:.6e}", c.nondegeneracy.value),
        );
    } else {
        r.verdict(
            "nondegeneracy",
            Status::Indeterminate,
            "q vanishes: linear regime",
        );
    }
    if c.structural.pass {
        r.verdict(
            "structural",
            Status::Pass,
            format!("min |grad(sigma/q)| = {:.6e}", c.structural.value),
        );
    } else {
        r.verdict(
            "structural",
            Status::Indeterminate,
            format!(
                "min |grad(sigma/q)| = {:.6e}: sigma/q constant or q vanishes",
                c.structural.value
            ),
        );
    }
    if ctx.cfg.preset == Preset::Manufactured && !ctx.has_csv() {
        let (_, exact) = manufactured_solution(&ctx.grid);
        let err = (&sol.u0 - &exact).max_abs();
        ctx.metric("max_error_vs_exact", err);
        ctx.out.report.at_most("manufactured_error", err, h * h);
    }
    let csv = sol.u0.to_csv_string();
    ctx.file("u0.csv", csv);
    Ok(())
}

fn dn(ctx: &mut Ctx) -> Result<()> {
    let basis = BoundaryBasis::default_for(&ctx.grid);
    let m = dn_samples(&ctx.set, &ctx.set.f0, &basis, ctx.cfg.eps, &ctx.newton())?;
    ctx.metric("dn_rows", m.rows() as f64);
    ctx.metric("dn_cols", m.cols() as f64);
    ctx.metric("dn_max_abs", m.max_abs());
    let finite = m
        .columns
        .iter()
        .flatten()
        .all(|v| v.re.is_finite() && v.im.is_finite());
    let shape = m.rows() == ctx.grid.dn_positions().len() && m.cols() == basis.len() + 1;
    let status = if finite && shape {
        Status::Pass
    } else {
        Status::Fail
    };
    ctx.out.report.verdict(
        "dn_matrix",
        status,
        format!(
            "{} x {} entries, finite {finite}, expected shape {shape}",
            m.rows(),
            m.cols()
        ),
    );
    let csv = m.to_csv(&ctx.grid);
    ctx.file("dn.csv", csv);
    Ok(())
}

fn rel_gap(a: &[C64], b: &[C64]) -> f64 {
    let num = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max);
    let den = b.iter().map(|y| y.norm()).fold(0.0, f64::max);
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

fn linearize(ctx: &mut Ctx) -> Result<()> {
    let bg = ctx.background()?;
    let pair = build_linearized(&ctx.set, &bg.u0)?;
    let basis = BoundaryBasis::default_for(&ctx.grid);
    let opts = ctx.dn_options();
    let fd = fd_linearize(&ctx.set, &bg, &basis, &FdOrder::First, &opts)?;
    let mut first: f64 = 0.0;
    let mut v = Vec::with_capacity(basis.len());
    for j in 0..basis.len() {
        let vj = solve_linearized(&pair.l, basis.mode(j))?;
        first = first.max(rel_gap(
            &fd.columns[j],
            &normal_derivative(&vj).non_corner(),
        ));
        v.push(vj);
    }
    let pairs = second_order_pairs(&basis);
    let fd2 = fd_linearize(
        &ctx.set,
        &bg,
        &basis,
        &FdOrder::Second(pairs.clone()),
        &opts,
    )?;
    let fac = pair.l.stencil().factor()?;
    let mut second: f64 = 0.0;
    for (c, &(j, k)) in pairs.iter().enumerate() {
        let w = solve_second_with(&fac, &ctx.set.q, &v[j], &v[k])?;
        second = second.max(rel_gap(
            &fd2.columns[c],
            &normal_derivative(&w).non_corner(),
        ));
    }
    ctx.metric("first_order_gap", first);
    ctx.metric("second_order_gap", second);
    ctx.metric("basis_size", basis.len() as f64);
    ctx.metric("second_order_pairs", pairs.len() as f64);
    ctx.out
        .report
        .at_most("first_order_consistency", first, 1e-3);
    ctx.out
        .report
        .at_most("second_order_consistency", second, 1e-2);
    let (c1, c2) = (fd.to_csv(&ctx.grid), fd2.to_csv(&ctx.grid));
    ctx.file("linearization_first.csv", c1);
    ctx.file("linearization_second.csv", c2);
    Ok(())
}

struct VerifyLevel {
    adjoint: f64,
    conjugation: f64,
    zero_phi: f64,
    q_consistency: f64,
}

fn verify_level(
    cfg: &RunConfig,
    set: &CoefficientSet,
    newton: &NewtonOptions,
) -> Result<VerifyLevel> {
    let g = set.grid().clone();
    let u0 = solve_quasilinear(set, &set.f0, None, newton)?.u0;
    let pair = build_linearized(set, &u0)?;
    let mag = build_magnetic(set, &u0)?;
    let phi = Field::from_real_fn(&g, |x, y| 0.5 * (x * y + (3.0 * x).sin() * y * y));
    let v = Field::from_fn(&g, |x, y| C64::new((x - y).cos(), x * y).exp());
    Ok(VerifyLevel {
        adjoint: verify_adjoint_pairing(&pair, ADJOINT_TRIALS, cfg.seed).max_gap,
        conjugation: verify_gauge_conjugation(&mag, &phi, &v)?,
        zero_phi: verify_gauge_conjugation(&mag, &Field::zeros(&g), &v)?,
        q_consistency: mag.q_consistency,
    })
}

/// Identity residuals at `n` and `2n - 1`; each must fall at second order.
fn verify(ctx: &mut Ctx) -> Result<()> {
    let newton = ctx.newton();
    let coarse = verify_level(ctx.cfg, &ctx.set, &newton)?;
    let r = &mut ctx.out.report;
    r.metric("adjoint_gap", coarse.adjoint);
    r.metric("gauge_conjugation_residual", coarse.conjugation);
    r.metric("gauge_conjugation_zero_phi", coarse.zero_phi);
    r.metric("magnetic_consistency", coarse.q_consistency);
    r.at_most("gauge_conjugation_identity", coarse.zero_phi, 1e-12);
    let h = ctx.grid.h();
    r.at_most(
        "magnetic_consistency",
        coarse.q_consistency,
        MAGNETIC_CONSISTENCY_C * h * h,
    );
    let fine_n = 2 * ctx.grid.n() - 1;
    match ctx.set_on(fine_n)? {
        None => {
            for name in ["adjoint_order", "gauge_conjugation_order"] {
                ctx.out.report.verdict(
                    name,
                    Status::Indeterminate,
                    "CSV coefficients fix the grid",
                );
            }
        }
        Some(set) => {
            let fine = verify_level(ctx.cfg, &set, &newton)?;
            let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { f64::INFINITY };
            let r = &mut ctx.out.report;
            r.metric("adjoint_gap_fine", fine.adjoint);
            r.metric("gauge_conjugation_residual_fine", fine.conjugation);
            r.metric("magnetic_consistency_fine", fine.q_consistency);
            let ra = ratio(coarse.adjoint, fine.adjoint);
            let rc = ratio(coarse.conjugation, fine.conjugation);
            r.metric("adjoint_ratio", ra);
            r.metric("gauge_conjugation_ratio", rc);
            // A residual already at round-off has no convergence ratio.
            if coarse.adjoint <= EXACT_LEVEL {
                r.at_most("adjoint_order", coarse.adjoint, EXACT_LEVEL);
            } else {
                r.within("adjoint_order", ra, 3.5, 4.5);
            }
            if coarse.conjugation <= EXACT_LEVEL {
                r.at_most("gauge_conjugation_order", coarse.conjugation, EXACT_LEVEL);
            } else {
                r.within("gauge_conjugation_order", rc, 3.5, 4.5);
            }
            r.metric(
                "magnetic_consistency_ratio",
                ratio(coarse.q_consistency, fine.q_consistency),
            );
        }
    }
    ctx.out
        .report
        .provenance
        .push(("adjoint_trials".into(), ADJOINT_TRIALS.to_string()));
    ctx.out
        .report
        .provenance
        .push(("fine_grid_n".into(), fine_n.to_string()));
    Ok(())
}

fn gauge_files(ctx: &mut Ctx, phi: &Field, shift: &Field) {
    let (a, b) = (phi.to_csv_string(), shift.to_csv_string());
    ctx.file("phi.csv", a);
    ctx.file("source_shift.csv", b);
}

fn gauge_linear(ctx: &mut Ctx) -> Result<()> {
    let phi = gauge_generator(&ctx.grid, |_, _| 1.0);
    let pair = build_linear_counterexample(&ctx.set.sigma, &ctx.set.source, &phi)?;
    let basis = BoundaryBasis::default_for(&ctx.grid);
    let opts = ctx.dn_options();
    let disc = quasilin::gauge::dn_pair_discrepancy(&pair.base, &pair.transformed, &basis, &opts)?;
    let floor = Floors::new(&ctx.grid, ctx.cfg.tol, ctx.cfg.eps).order0;
    let shift = &pair.transformed.source - &pair.base.source;
    ctx.metric("dn_discrepancy", disc);
    ctx.metric("floor_order0", floor);
    ctx.metric("source_shift", shift.max_abs());
    ctx.out
        .report
        .at_most("counterexample_equality", disc, AGREEMENT_FACTOR * floor);
    ctx.out
        .report
        .at_least("source_distinct", shift.max_abs(), 0.1);
    gauge_files(ctx, &phi, &shift);
    Ok(())
}

fn gauge_break(ctx: &mut Ctx) -> Result<()> {
    let phi = gauge_generator(&ctx.grid, |_, _| 1.0);
    let basis = BoundaryBasis::default_for(&ctx.grid);
    let opts = ctx.dn_options();
    let bg = ctx.background()?;
    let structural = check_conditions(&ctx.set, &bg.u0).structural;
    let rep = gauge_break_experiment(&ctx.set, &phi, &basis, &opts)?;
    for o in 0..3 {
        ctx.metric(
            format!("nonlinear_margin_order{o}"),
            rep.nonlinear.margins[o],
        );
        ctx.metric(
            format!("control_margin_order{o}"),
            rep.linear_control.margins[o],
        );
        ctx.metric(format!("floor_order{o}"), rep.floors.for_order(o));
    }
    ctx.metric("break_ratio", rep.break_ratio());
    ctx.metric("source_shift", rep.f_shift);
    ctx.metric("structural_margin", structural.value);
    if structural.pass {
        ctx.out
            .report
            .at_least("gauge_break", rep.break_ratio(), 10.0);
    } else {
        ctx.out.report.verdict(
            "gauge_break",
            Status::Indeterminate,
            format!(
                "ratio {:.6e}; sigma/q is constant, where the additive gauge survives the nonlinearity",
                rep.break_ratio()
            ),
        );
    }
    let shift = &rep.transformed.source - &ctx.set.source;
    gauge_files(ctx, &phi, &shift);
    Ok(())
}

fn sci(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.6e}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn tau_key(tau: f64) -> String {
    format!("tau{tau}")
}

fn cgo_probe(ctx: &mut Ctx) -> Result<()> {
    let bg = ctx.background()?;
    let mag = build_magnetic(&ctx.set, &bg.u0)?;
    let structural = check_conditions(&ctx.set, &bg.u0).structural;
    let h = ctx.grid.h();
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    let mut d_max: f64 = 0.0;
    let mut residual: f64 = 0.0;
    let mut predicted = C64::from(0.0);
    let mut skipped = Vec::new();
    let mut resolved = Vec::new();
    for &tau in &ctx.cfg.tau {
        if tau * h > MAX_TAU_H {
            skipped.push(tau);
            continue;
        }
        let f = make_frequency(PROBE_DIRECTION, tau)?;
        let sol = build_cgo(&ctx.set, &bg.u0, &mag, &f, ctx.cfg.tol)?;
        let key = tau_key(tau);
        ctx.metric(format!("{key}.cgo_residual"), sol.residual);
        ctx.metric(format!("{key}.remainder_sup"), sol.remainder_sup);
        residual = residual.max(sol.residual);
        if tau == 0.0 {
            rows.push(vec![
                tau,
                f64::NAN,
                f64::NAN,
                f64::NAN,
                f64::NAN,
                sol.remainder_sup,
            ]);
            continue;
        }
        let p = nonvanishing_probe(&ctx.set, &mag, &sol, PROBE_POINT)?;
        ctx.metric(format!("{key}.d_re"), p.value.re);
        ctx.metric(format!("{key}.d_im"), p.value.im);
        ctx.metric(format!("{key}.probe_error"), p.error());
        rows.push(vec![
            tau,
            p.value.re,
            p.value.im,
            p.predicted.re,
            p.predicted.im,
            sol.remainder_sup,
        ]);
        errors.push(p.error());
        resolved.push(tau);
        d_max = d_max.max(p.value.norm());
        predicted = p.predicted;
    }
    ctx.metric("predicted_re", predicted.re);
    ctx.metric("predicted_im", predicted.im);
    let r = &mut ctx.out.report;
    if !skipped.is_empty() {
        r.verdict(
            "resolution",
            Status::Indeterminate,
            format!("tau {skipped:?} skipped: tau * h above {MAX_TAU_H} at h = {h:.6e}"),
        );
    }
    r.at_most("cgo_residual", residual, ctx.cfg.tol);
    if errors.is_empty() {
        r.verdict("probe", Status::Indeterminate, "no resolved positive tau");
    } else if predicted.norm() > PROBE_DELTA {
        if errors.len() < 2 {
            r.verdict(
                "probe_convergence",
                Status::Indeterminate,
                "needs two resolved tau values",
            );
        } else {
            let decreasing = errors.windows(2).all(|w| w[1] < w[0]);
            let status = if decreasing {
                Status::Pass
            } else {
                Status::Fail
            };
            r.verdict(
                "probe_convergence",
                status,
                format!(
                    "|D - P| = [{}] at tau * h = [{}], threshold strictly decreasing",
                    sci(&errors),
                    resolved
                        .iter()
                        .map(|t| format!("{:.3}", t * h))
                        .collect::<Vec<_>>()
                        .join(", ")
                ),
            );
        }
    } else if !structural.pass {
        r.at_most("vanishing_limit", d_max, 1e-8);
    } else {
        r.verdict(
            "vanishing_limit",
            Status::Indeterminate,
            format!("|P| <= {PROBE_DELTA:e} at the probe point on a structurally valid background"),
        );
    }
    ctx.out
        .report
        .provenance
        .push(("probe_point".into(), format!("{PROBE_POINT:?}")));
    ctx.out
        .report
        .provenance
        .push(("probe_direction".into(), format!("{PROBE_DIRECTION:?}")));
    let csv = table_csv(
        &["tau", "re_d", "im_d", "re_p", "im_p", "remainder_sup"],
        &rows,
    );
    ctx.file("cgo_probe.csv", csv);
    Ok(())
}

fn recon(ctx: &mut Ctx) -> Result<()> {
    let newton = ctx.newton();
    let bg = ctx.background()?;
    let tol = ctx.cfg.tol;

    match verify_b_recovery(&ctx.set.q, tol) {
        Ok(b) => {
            ctx.metric("b_deviation", b.deviation);
            ctx.metric("b_control_deviation", b.control_deviation);
            ctx.out.report.at_most("b_recovery", b.deviation, 1e-8);
        }
        Err(Error::VanishingQ(k)) => {
            ctx.out.report.verdict(
                "b_recovery",
                Status::Indeterminate,
                format!("q vanishes at node {k}"),
            );
        }
        Err(e) => return Err(e),
    }

    let h = ctx.grid.h();
    let tau = ctx
        .cfg
        .tau
        .iter()
        .copied()
        .filter(|t| t * h <= MAX_TAU_H)
        .fold(0.0, f64::max);
    if tau > 0.0 {
        let rep = verify_a_recovery(&ctx.set, &bg.u0, &default_probe_points(), tau, tol)?;
        ctx.metric("a_tau", tau);
        ctx.metric("a_certified", rep.certified_count() as f64);
        ctx.metric("a_points", rep.points.len() as f64);
        ctx.metric("a_structural_margin", rep.structural_margin);
        let unsound = rep
            .points
            .iter()
            .filter(|p| p.certified && p.probe.predicted.norm() <= PROBE_DELTA)
            .count();
        let status = if unsound == 0 {
            Status::Pass
        } else {
            Status::Fail
        };
        ctx.out.report.verdict(
            "a_certificate_soundness",
            status,
            format!("{unsound} certified points with |P| <= {PROBE_DELTA:e}, threshold 0"),
        );
    } else {
        ctx.out.report.verdict(
            "a_certificate_soundness",
            Status::Indeterminate,
            "no resolved positive tau",
        );
    }

    let bump = with_sigma_bump(&ctx.set, BUMP_AMPLITUDE);
    let ub = solve_quasilinear(&bump, &bump.f0, Some(&bg.u0), &newton)?.u0;
    let sys = system_residual(&ctx.set, &bg.u0, &bump, &ub)?;
    ctx.metric("r1_relative", sys.r1_relative);
    ctx.metric("r2_relative", sys.r2_relative);
    ctx.metric("det_m_gap", sys.det_gap);
    ctx.out.report.at_most("det_m_identity", sys.det_gap, 1e-12);

    let basis = BoundaryBasis::default_for(&ctx.grid);
    let u = uniqueness_experiment(&ctx.set, &bump, &basis, &ctx.dn_options())?;
    for o in 0..3 {
        ctx.metric(format!("bump_margin_order{o}"), u.margins.margins[o]);
        ctx.metric(format!("floor_order{o}"), u.floors.for_order(o));
    }
    let (status, detail) = match &u.outcome {
        Outcome::Discriminated { order, mode } => (
            Status::Pass,
            format!("discriminated at order {order}, mode {mode}, threshold margin > {AGREEMENT_FACTOR} x floor"),
        ),
        Outcome::Indistinguishable => (
            Status::Fail,
            "indistinguishable: every margin at or below its floor".to_string(),
        ),
        Outcome::Inconclusive => (
            Status::Indeterminate,
            "margins between the floor and the agreement threshold".to_string(),
        ),
    };
    ctx.out
        .report
        .verdict("bump_discrimination", status, detail);

    let r = &mut ctx.out.report;
    r.provenance
        .push(("probe_delta".into(), format!("{PROBE_DELTA:e}")));
    r.provenance
        .push(("certificate_factor".into(), CERTIFICATE_FACTOR.to_string()));
    r.provenance
        .push(("bump_amplitude".into(), BUMP_AMPLITUDE.to_string()));
    let files = [
        ("r1.csv", sys.r1.to_csv_string()),
        ("r2.csv", sys.r2.to_csv_string()),
        ("det_m.csv", sys.det_m.to_csv_string()),
    ];
    for (name, content) in files {
        ctx.file(name, content);
    }
    Ok(())
}
