//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::time::Instant;

use quasilin::cgo::{
    build_cgo, calibrate_constant, make_frequency, nonvanishing_probe, reference_gaussian,
    smooth_window, stationary_phase_probe, Quadrature,
};
use quasilin::dnmap::{
    fd_linearize, solve_linearized, solve_second_with, BoundaryBasis, DnOptions, FdOrder, Floors,
    AGREEMENT_FACTOR,
};
use quasilin::forward::{manufactured_solution, solve, Preset};
use quasilin::gauge::{
    build_linear_counterexample, build_scaling_gauge, dn_pair_discrepancy, gauge_break_experiment,
    gauge_generator, second_order_pairs,
};
use quasilin::linops::{
    build_linearized, build_magnetic, verify_adjoint_pairing, verify_gauge_conjugation,
};
use quasilin::mesh::{build_grid, normal_derivative, Field, C64, ONE};
use quasilin::recon::{
    default_probe_points, system_residual, uniqueness_experiment, verify_a_recovery,
    verify_b_recovery, with_sigma_bump, Outcome,
};
use quasilin::Result;

const TOL: f64 = 1e-10;
const SEED: u64 = 7;
/// Relative level treated as exact agreement.
const MACHINE_FLOOR: f64 = 1e-12;

type Criterion = fn() -> Result<Verdict>;

struct Verdict {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn ratio_ok(r: f64) -> bool {
    (3.5..=4.5).contains(&r)
}

fn list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", items.join(", "))
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

fn manufactured_convergence() -> Result<Verdict> {
    let start = Instant::now();
    let mut errors = Vec::new();
    let mut newton_ok = true;
    let mut iters = Vec::new();
    for n in [33, 65, 129] {
        let g = build_grid(n)?;
        let (set, exact) = manufactured_solution(&g);
        let sol = solve(&set)?;
        newton_ok &= sol.final_residual <= TOL && sol.newton_iters <= 8;
        iters.push(sol.newton_iters);
        errors.push((&sol.u0 - &exact).max_abs());
    }
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    let elapsed = start.elapsed().as_secs_f64();
    let pass = ratios.iter().all(|&r| ratio_ok(r)) && newton_ok && elapsed <= 60.0;
    Ok(check(
        pass,
        format!(
            "errors {}, ratios {ratios:.3?} (need [3.5, 4.5]), newton iterations {iters:?}, {elapsed:.1} s",
            list(&errors)
        ),
    ))
}

fn linearization_consistency() -> Result<Verdict> {
    let g = build_grid(65)?;
    let (set, _) = manufactured_solution(&g);
    let bg = solve(&set)?;
    let pair = build_linearized(&set, &bg.u0)?;
    let basis = BoundaryBasis::fourier(&g, 4);
    let opts = DnOptions::default();
    let fd = fd_linearize(&set, &bg, &basis, &FdOrder::First, &opts)?;
    let mut first: f64 = 0.0;
    let mut v = Vec::new();
    for j in 0..basis.len() {
        let vj = solve_linearized(&pair.l, basis.mode(j))?;
        let direct = normal_derivative(&vj).non_corner();
        first = first.max(rel_gap(&fd.columns[j], &direct));
        v.push(vj);
    }
    let pairs = second_order_pairs(&basis);
    let fd2 = fd_linearize(&set, &bg, &basis, &FdOrder::Second(pairs.clone()), &opts)?;
    let fac = pair.l.stencil().factor()?;
    let mut second: f64 = 0.0;
    for (c, &(j, k)) in pairs.iter().enumerate() {
        let w = solve_second_with(&fac, &set.q, &v[j], &v[k])?;
        second = second.max(rel_gap(
            &fd2.columns[c],
            &normal_derivative(&w).non_corner(),
        ));
    }
    Ok(check(
        first <= 1e-3 && second <= 1e-2,
        format!(
            "first-order gap {first:.3e} (<= 1e-3 over {} modes), mixed second-order gap {second:.3e} (<= 1e-2 over {} pairs)",
            basis.len(),
            pairs.len()
        ),
    ))
}

fn adjoint_and_gauge() -> Result<Verdict> {
    let mut adj = Vec::new();
    let mut conj = Vec::new();
    let mut zero: f64 = 0.0;
    for n in [33, 65] {
        let g = build_grid(n)?;
        let (set, _) = manufactured_solution(&g);
        let u0 = solve(&set)?.u0;
        let pair = build_linearized(&set, &u0)?;
        adj.push(verify_adjoint_pairing(&pair, 20, SEED).max_gap);
        let mag = build_magnetic(&set, &u0)?;
        let phi = Field::from_real_fn(&g, |x, y| 0.5 * (x * y + (3.0 * x).sin() * y * y));
        let v = Field::from_fn(&g, |x, y| C64::new((x - y).cos(), x * y).exp());
        conj.push(verify_gauge_conjugation(&mag, &phi, &v)?);
        zero = zero.max(verify_gauge_conjugation(&mag, &Field::zeros(&g), &v)?);
    }
    let (ra, rc) = (adj[0] / adj[1], conj[0] / conj[1]);
    Ok(check(
        ratio_ok(ra) && ratio_ok(rc) && zero <= MACHINE_FLOOR,
        format!(
            "adjoint gaps {} ratio {ra:.3}, gauge conjugation {} ratio {rc:.3}, phi = 0 residual {zero:.1e}",
            list(&adj),
            list(&conj)
        ),
    ))
}

fn linear_counterexample() -> Result<Verdict> {
    let g = build_grid(33)?;
    let basis = BoundaryBasis::default_for(&g);
    let opts = DnOptions::default();
    let floors = Floors::new(&g, TOL, opts.eps);
    let phi = gauge_generator(&g, |_, _| 1.0);
    let source = Field::constant(&g, C64::from(-1.0));
    let pair = build_linear_counterexample(&Field::constant(&g, ONE), &source, &phi)?;
    let disc = dn_pair_discrepancy(&pair.base, &pair.transformed, &basis, &opts)?;
    let shift = (&pair.transformed.source - &source).max_abs();
    let brk = gauge_break_experiment(&Preset::Affine.build(&g), &phi, &basis, &opts)?;
    let ratio = brk.break_ratio();
    Ok(check(
        disc <= AGREEMENT_FACTOR * floors.order0 && shift >= 0.1 && ratio >= 10.0,
        format!(
            "linear DN discrepancy {disc:.3e} (<= {:.1e}), |F~ - F| {shift:.3e} (>= 0.1), nonlinear/control first-order margin {:.3e}/{:.3e} = {ratio:.3e} (>= 10)",
            AGREEMENT_FACTOR * floors.order0,
            brk.nonlinear.margins[1],
            brk.linear_control.margins[1]
        ),
    ))
}

fn scaling_gauge() -> Result<Verdict> {
    let g = build_grid(33)?;
    let basis = BoundaryBasis::default_for(&g);
    let opts = DnOptions::default();
    let floor = Floors::new(&g, TOL, opts.eps).order0;
    let c = build_scaling_gauge(&Preset::Constant.build(&g))?;
    let dc = dn_pair_discrepancy(&c.base, &c.transformed, &basis, &opts)?;
    let a = build_scaling_gauge(&Preset::Affine.build(&g))?;
    let da = dn_pair_discrepancy(&a.base, &a.transformed, &basis, &opts)?;
    Ok(check(
        dc <= AGREEMENT_FACTOR * floor && da >= 100.0 * floor && c.obstruction_expected && !a.obstruction_expected,
        format!(
            "constant pair {dc:.3e} (<= {:.1e}), affine pair {da:.3e} (>= {:.1e}, obstruction expected {})",
            AGREEMENT_FACTOR * floor,
            100.0 * floor,
            a.obstruction_expected
        ),
    ))
}

fn cgo_probe() -> Result<Verdict> {
    let g = build_grid(129)?;
    let x0 = (0.5, 0.5);
    let taus = [5.0, 10.0, 20.0];
    let affine = Preset::Affine.build(&g);
    let u0 = solve(&affine)?.u0;
    let mag = build_magnetic(&affine, &u0)?;
    let mut errs = Vec::new();
    let mut p = C64::from(0.0);
    let mut last = C64::from(0.0);
    for tau in taus {
        let f = make_frequency([1.0, 0.0], tau)?;
        let sol = build_cgo(&affine, &u0, &mag, &f, TOL)?;
        let probe = nonvanishing_probe(&affine, &mag, &sol, x0)?;
        errs.push(probe.error());
        p = probe.predicted;
        last = probe.value;
    }
    let exact = -1.0 / (2.5 * 2f64.sqrt());
    let p_match = (p.re - exact).abs() <= 5e-4 * exact.abs() && p.im.abs() <= 5e-4 * exact.abs();
    let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
    let final_rel = errs[2] / p.norm();

    let (flat, _) = manufactured_solution(&g);
    let uf = solve(&flat)?.u0;
    let magf = build_magnetic(&flat, &uf)?;
    let mut flat_d: f64 = 0.0;
    for tau in taus {
        let f = make_frequency([1.0, 0.0], tau)?;
        let sol = build_cgo(&flat, &uf, &magf, &f, TOL)?;
        flat_d = flat_d.max(nonvanishing_probe(&flat, &magf, &sol, x0)?.value.norm());
    }
    let flat_rel = flat_d / p.norm();
    Ok(check(
        decreasing && final_rel <= 0.1 && p_match && flat_rel <= 0.1,
        format!(
            "|D - P| {} over tau {taus:?}, final relative {final_rel:.3e}, D(20) = {:.5}, P = {:.5} vs {exact:.5}, constant-ratio max |D|/|P| {flat_rel:.3e}",
            list(&errs),
            last.re,
            p.re
        ),
    ))
}

fn b_and_a_recovery() -> Result<Verdict> {
    let g = build_grid(129)?;
    let mut b_dev: f64 = 0.0;
    for q in [
        Field::constant(&g, ONE),
        Field::from_real_fn(&g, |x, _| 1.0 + 0.5 * x),
        Field::from_real_fn(&g, |x, y| 2.0 + (x * y).sin()),
    ] {
        b_dev = b_dev.max(verify_b_recovery(&q, TOL)?.deviation);
    }
    let pts = default_probe_points();
    let affine = Preset::Affine.build(&g);
    let ua = solve(&affine)?.u0;
    let ra = verify_a_recovery(&affine, &ua, &pts, 20.0, TOL)?;
    let (flat, _) = manufactured_solution(&g);
    let uf = solve(&flat)?.u0;
    let rf = verify_a_recovery(&flat, &uf, &pts, 20.0, TOL)?;
    Ok(check(
        b_dev <= 1e-8 && ra.certified_count() == pts.len() && rf.certified_count() == 0,
        format!(
            "|B - 1| {b_dev:.3e} (<= 1e-8), certified {}/{} structural, {}/{} constant-ratio",
            ra.certified_count(),
            pts.len(),
            rf.certified_count(),
            pts.len()
        ),
    ))
}

fn coupled_system() -> Result<Verdict> {
    let g = build_grid(33)?;
    let a = Preset::Affine.build(&g);
    let ua = solve(&a)?.u0;
    let bump = with_sigma_bump(&a, 0.01);
    let ub = solve(&bump)?.u0;
    let (m, um) = manufactured_solution(&g);
    let det_gap = system_residual(&a, &ua, &a, &ua)?
        .det_gap
        .max(system_residual(&m, &um, &m, &um)?.det_gap);
    let equal = system_residual(&a, &ua, &a, &ua)?;
    let equal_level = equal.r1_relative.max(equal.r2_relative);
    let floor = equal_level.max(MACHINE_FLOOR);
    let pair = system_residual(&a, &ua, &bump, &ub)?;
    let pair_level = pair.r1_relative.min(pair.r2_relative);

    let basis = BoundaryBasis::default_for(&g);
    let opts = DnOptions::default();
    let ident = uniqueness_experiment(&a, &a, &basis, &opts)?;
    let bumped = uniqueness_experiment(&a, &bump, &basis, &opts)?;
    let phi = gauge_generator(&g, |_, _| 1.0);
    let lin = build_linear_counterexample(
        &Field::constant(&g, ONE),
        &Field::constant(&g, C64::from(-1.0)),
        &phi,
    )?;
    let linear = uniqueness_experiment(&lin.base, &lin.transformed, &basis, &opts)?;
    let table_ok = ident.outcome == Outcome::Indistinguishable
        && matches!(bumped.outcome, Outcome::Discriminated { .. })
        && linear.outcome == Outcome::Indistinguishable;
    Ok(check(
        det_gap <= 1e-12 && equal_level <= MACHINE_FLOOR && pair_level >= 100.0 * floor && table_ok,
        format!(
            "det M gap {det_gap:.1e}, equal-set residual {equal_level:.1e}, bump residual {pair_level:.3e} (>= {:.1e}), table: identical {:?}, bump {:?}, linear {:?}",
            100.0 * floor,
            ident.outcome,
            bumped.outcome,
            linear.outcome
        ),
    ))
}

fn stationary_phase() -> Result<Verdict> {
    let z0 = (0.5, 0.5);
    let coarse = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0];
    let gauss = reference_gaussian(z0);
    let rep = stationary_phase_probe(&gauss, z0, &coarse, Quadrature::STANDARD)?;
    let oracle = calibrate_constant(z0, 1.0 / 64.0)?;
    let ratio_gap = rep.last_ratio_gap();
    let oracle_gap = (rep.limit() - oracle).norm() / oracle.norm();

    let fine = [1.0 / 128.0, 1.0 / 256.0, 1.0 / 512.0, 1.0 / 1024.0];
    let g = reference_gaussian(z0);
    let hollow = move |x: f64, y: f64| {
        let r = (x - z0.0).hypot(y - z0.1);
        g(x, y) * (1.0 - smooth_window(r, 0.05, 0.2))
    };
    let zero = stationary_phase_probe(&hollow, z0, &fine, Quadrature::STANDARD)?;
    let gfine = stationary_phase_probe(
        &reference_gaussian(z0),
        z0,
        &fine[3..],
        Quadrature::STANDARD,
    )?;
    let zero_rel = zero.limit().norm() / gfine.limit().norm();
    Ok(check(
        ratio_gap <= 0.05 && oracle_gap <= 0.05 && zero_rel <= 1e-3,
        format!(
            "I/h' at 1/64 = {:.6}, successive ratio gap {ratio_gap:.3e}, oracle gap {oracle_gap:.1e} (<= 5%), vanishing input at h' = 1/1024 relative {zero_rel:.3e} (<= 1e-3)",
            rep.limit().re
        ),
    ))
}

fn main() {
    let criteria: [(&str, Criterion); 9] = [
        (
            "manufactured-solution convergence",
            manufactured_convergence,
        ),
        ("linearization consistency", linearization_consistency),
        ("adjoint and gauge identities", adjoint_and_gauge),
        (
            "linear counterexample and gauge breaking",
            linear_counterexample,
        ),
        ("scaling gauge", scaling_gauge),
        ("CGO probe", cgo_probe),
        ("B and A recovery", b_and_a_recovery),
        ("coupled system and uniqueness table", coupled_system),
        ("stationary phase probe", stationary_phase),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let verdict = run().unwrap_or_else(|e| check(false, format!("error: {e}")));
        let tag = if verdict.pass { "PASS" } else { "FAIL" };
        if !verdict.pass {
            failed += 1;
        }
        println!(
            "criterion {} {tag} {name} [{:.1} s]: {}",
            i + 1,
            start.elapsed().as_secs_f64(),
            verdict.detail
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
