//! Acceptance suite: one test per criterion, each printing a
//! `criterion-N PASS|FAIL value threshold` line. Criteria 3 and 4 share
//! one ε-sweep (mixed scenario, 16²×8 grid, ε ∈ {0.4, 0.2, 0.1, 0.05}).

use std::sync::OnceLock;
use std::time::Instant;

use poroplate::biot3d::{assemble_biot, coupling_spd_margin, run_biot};
use poroplate::config::RunConfig;
use poroplate::grid::{self, BcTag, Field, Grid2D, Grid3D};
use poroplate::limit2d::{run_limit, LimitTrajectory};
use poroplate::loads::{build_scenario, LoadSpec, Ramp, Scenario, ScenarioAmplitudes};
use poroplate::params::DimensionlessParams;
use poroplate::verify::{
    self, equilibrium_residuals, estimate_rate, limit_resultants, resultants_and_moments,
    sweep_epsilon, SweepReport,
};

fn params() -> DimensionlessParams {
    DimensionlessParams::default()
}

fn sweep_grid() -> Grid3D {
    Grid3D::new(Grid2D::new(16, 16).unwrap(), 8).unwrap()
}

fn mixed_loads() -> LoadSpec {
    build_scenario(Scenario::Mixed, ScenarioAmplitudes::default(), Ramp::new(0.25))
}

struct SharedSweep {
    report: SweepReport,
    wall_seconds: f64,
}

fn shared_sweep() -> &'static SharedSweep {
    static SWEEP: OnceLock<SharedSweep> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let t0 = Instant::now();
        let report = sweep_epsilon(
            &params(),
            sweep_grid(),
            &mixed_loads(),
            1.0,
            50,
            &[0.4, 0.2, 0.1, 0.05],
        )
        .expect("sweep runs");
        SharedSweep {
            report,
            wall_seconds: t0.elapsed().as_secs_f64(),
        }
    })
}

fn verdict(id: &str, pass: bool, value: f64, threshold: f64) {
    println!(
        "{id} {} {value:e} {threshold:e}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "{id}: value {value:e} vs threshold {threshold:e}");
}

#[test]
fn criterion_1_mms_membrane() {
    let t0 = Instant::now();
    let grids = [16usize, 32, 64];
    let mut errs = Vec::new();
    for &nx in &grids {
        errs.push(verify::mms::membrane_error(&params(), nx).unwrap());
    }
    let elapsed = t0.elapsed().as_secs_f64();
    let hs: Vec<f64> = grids.iter().map(|&n| 1.0 / n as f64).collect();
    let rates = estimate_rate(&errs, &hs).unwrap();
    let lo = rates.iter().filter_map(|r| *r).fold(f64::INFINITY, f64::min);
    let hi = rates.iter().filter_map(|r| *r).fold(f64::NEG_INFINITY, f64::max);
    verdict("criterion-1-membrane-order", (1.8..=2.5).contains(&lo) && hi <= 2.5, lo, 1.8);
    verdict("criterion-1-membrane-runtime", elapsed < 30.0, elapsed, 30.0);
}

#[test]
fn criterion_2_mms_bending_pressure() {
    let t0 = Instant::now();
    let grids = [16usize, 32, 64];
    let hs: Vec<f64> = grids.iter().map(|&n| 1.0 / n as f64).collect();
    let mut w3_err = Vec::new();
    let mut pi_err = Vec::new();
    for (q, &nx) in grids.iter().enumerate() {
        let nsteps = 8 * 4usize.pow(q as u32); // dt ∝ h²
        let (ew, ep) = verify::mms::bending_errors(&params(), nx, nx / 2, 1.0, nsteps).unwrap();
        w3_err.push(ew);
        pi_err.push(ep);
    }
    let w3_rates = estimate_rate(&w3_err, &hs).unwrap();
    let pi_rates = estimate_rate(&pi_err, &hs).unwrap();
    let spatial_lo = w3_rates
        .iter()
        .chain(pi_rates.iter())
        .filter_map(|r| *r)
        .fold(f64::INFINITY, f64::min);

    let temporal =
        verify::mms::bending_temporal_errors(&params(), 64, 32, 1.0, &[8, 16, 32], 8).unwrap();
    let dts = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0];
    let temporal_rates = estimate_rate(&temporal, &dts).unwrap();
    let temporal_lo = temporal_rates.iter().filter_map(|r| *r).fold(f64::INFINITY, f64::min);
    let elapsed = t0.elapsed().as_secs_f64();

    verdict("criterion-2-bending-spatial-order", spatial_lo >= 1.8, spatial_lo, 1.8);
    verdict("criterion-2-bending-temporal-order", temporal_lo >= 0.8, temporal_lo, 0.8);
    verdict("criterion-2-bending-runtime", elapsed < 120.0, elapsed, 120.0);
}

#[test]
fn criterion_3_eps_convergence() {
    let sweep = shared_sweep();
    let mut worst_increase = f64::NEG_INFINITY;
    let mut worst_ratio = 0.0f64;
    for (name, vals) in sweep.report.rows() {
        for w in vals.windows(2) {
            worst_increase = worst_increase.max(w[1] / w[0] - 1.0);
        }
        let ratio = vals[vals.len() - 1] / vals[0];
        worst_ratio = worst_ratio.max(ratio);
        assert!(vals.iter().all(|v| v.is_finite()), "{name} finite");
    }
    verdict("criterion-3-monotone", worst_increase < 0.0, worst_increase, 0.0);
    verdict("criterion-3-halving", worst_ratio <= 0.5, worst_ratio, 0.5);
    verdict(
        "criterion-3-runtime",
        sweep.wall_seconds < 900.0,
        sweep.wall_seconds,
        900.0,
    );
}

#[test]
fn criterion_4_apriori_scaling() {
    let sweep = shared_sweep();
    let base = &sweep.report.entries[0].apriori.values;
    let mut worst = 0.0f64;
    for entry in &sweep.report.entries {
        for (q, v) in entry.apriori.values.iter().enumerate() {
            worst = worst.max(v / base[q]);
        }
    }
    verdict("criterion-4-apriori-factor", worst <= 3.0, worst, 3.0);
}

#[test]
fn criterion_5_energy_identities() {
    let g3 = sweep_grid();
    let loads = mixed_loads();
    let limit = run_limit(&params(), g3, &loads, 1.0, 50, None).unwrap();
    let mut closure = 0.0f64;
    let mut numdiss = 0.0f64;
    let mut coupling = 0.0f64;
    for r in &limit.reports {
        let scale = r.energy_scale.max(1e-300);
        closure = closure.max(r.closure_residual / scale);
        numdiss = numdiss.max(-r.numerical_dissipation / scale);
        coupling = coupling.max((r.coupling_bending + r.coupling_pressure).abs() / scale);
    }
    verdict("criterion-5-limit-closure", closure <= 1e-10, closure, 1e-10);
    verdict("criterion-5-limit-numdiss", numdiss <= 1e-14, numdiss, 1e-14);
    verdict("criterion-5-coupling-cancellation", coupling <= 1e-12, coupling, 1e-12);

    let biot = run_biot(&params(), g3, 0.2, &loads, 1.0, 50).unwrap();
    let mut closure3 = 0.0f64;
    for r in &biot.reports {
        closure3 = closure3.max(r.closure_residual / r.energy_scale.max(1e-300));
    }
    verdict("criterion-5-biot-closure", closure3 <= 1e-10, closure3, 1e-10);
}

#[test]
fn criterion_6_zero_data_uniqueness() {
    let g3 = sweep_grid();
    let zero = LoadSpec::zero();
    let limit = run_limit(&params(), g3, &zero, 1.0, 20, None).unwrap();
    let worst_limit = limit.states.iter().map(|s| s.max_abs()).fold(0.0f64, f64::max);
    let biot = run_biot(&params(), g3, 0.2, &zero, 1.0, 20).unwrap();
    let worst_biot = biot.states.iter().map(|s| s.max_abs()).fold(0.0f64, f64::max);
    let worst = worst_limit.max(worst_biot);
    verdict("criterion-6-zero-data", worst <= 1e-12, worst, 1e-12);
}

#[test]
fn criterion_7_mean_pressure_invariant() {
    let g3 = sweep_grid();
    let limit = run_limit(&params(), g3, &mixed_loads(), 1.0, 50, None).unwrap();
    let worst = limit
        .states
        .iter()
        .map(|s| s.pi_w_mean_defect())
        .fold(0.0f64, f64::max);
    verdict("criterion-7-pi-w-mean", worst <= 1e-12, worst, 1e-12);
}

#[test]
fn criterion_8_spd_margin() {
    let sys = assemble_biot(sweep_grid(), &params(), 0.2).unwrap();
    let margin = coupling_spd_margin(&sys).unwrap();
    verdict("criterion-8-spd-margin", margin >= -1e-8, margin, -1e-8);
}

#[test]
fn criterion_9_appendix_consistency() {
    // (a) closed forms equal quadrature on a Kirchhoff-Love field with
    // y3-affine pressure (polynomial midsurface data, all stencils exact)
    let g3 = sweep_grid();
    let g2 = g3.base;
    let g1f = Field::from_fn2(g2, 1, BcTag::LateralDirichlet, |y1, y2, _| {
        0.3 * y1 * y1 - 0.1 * y1 * y2 + 0.7 * y2
    });
    let g2f = Field::from_fn2(g2, 1, BcTag::LateralDirichlet, |y1, y2, _| {
        0.2 * y2 * y2 + 0.4 * y1 * y2 - 0.5 * y1
    });
    let g3f = Field::from_fn2(g2, 1, BcTag::Clamped, |y1, y2, _| {
        y1 * y2 + 0.5 * y1 * y1 - 0.25 * y2 * y2
    });
    let w = grid::lift_kl(&g1f, &g2f, &g3f, g3).unwrap();
    let p = Field::from_fn3(g3, 1, BcTag::Free, |y1, y2, y3, _| {
        (0.3 + 0.8 * y1 - 0.5 * y2) * y3 + 0.2 + 0.1 * y1 * y2
    });
    let res = resultants_and_moments(&w, &p, &params()).unwrap();
    verdict(
        "criterion-9-resultant-closed-form",
        res.max_discrepancy <= 1e-12,
        res.max_discrepancy,
        1e-12,
    );

    // (b) moment-equilibrium residual of the converged limit solution drops
    // by at least 3x per 2D mesh halving
    let loads = mixed_loads();
    let mut moments = Vec::new();
    for nx in [16usize, 32, 64] {
        let g = Grid3D::new(Grid2D::new(nx, nx).unwrap(), 8).unwrap();
        let traj = run_limit(&params(), g, &loads, 1.0, 50, None).unwrap();
        let last = traj.states.last().unwrap();
        let r = limit_resultants(last, &params()).unwrap();
        let eq = equilibrium_residuals(&r, &loads, last.t).unwrap();
        moments.push(eq.moment);
    }
    let worst_drop = (moments[0] / moments[1]).min(moments[1] / moments[2]);
    verdict("criterion-9-moment-halving", worst_drop >= 3.0, worst_drop, 3.0);
}

#[test]
fn default_scenario_at_scale() {
    // energy invariants hold on the production-sized limit run too
    // (64² midsurface, nz = 16, 50 steps) within the stated time budget
    let t0 = Instant::now();
    let g3 = Grid3D::new(Grid2D::new(64, 64).unwrap(), 16).unwrap();
    let loads = build_scenario(Scenario::Bend, ScenarioAmplitudes::default(), Ramp::new(0.25));
    let traj: LimitTrajectory = run_limit(&params(), g3, &loads, 1.0, 50, None).unwrap();
    let elapsed = t0.elapsed().as_secs_f64();
    for r in &traj.reports {
        let scale = r.energy_scale.max(1e-30);
        assert!(r.closure_residual <= 1e-10 * scale);
        assert!(r.numerical_dissipation >= -1e-14 * scale);
    }
    // membrane block vanishes identically under a pure vertical load
    let last = traj.states.last().unwrap();
    assert!(last.w01.max_abs() <= 1e-12);
    assert!(elapsed < 60.0, "64² limit run took {elapsed:.1} s");
}

#[test]
fn criterion_10_determinism() {
    // two complete sweep commands with identical configuration must produce
    // bitwise-identical artifacts
    let base = std::env::temp_dir().join(format!("poroplate-accept-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&base);
    let mut worst_mismatch = 0usize;
    let mut dirs = Vec::new();
    for run in 0..2 {
        let mut cfg = RunConfig::default();
        cfg.nsteps = 50;
        cfg.output_dir = base.join(format!("run{run}"));
        dirs.push(cfg.output_dir.clone());
        poroplate::cli::cmd_sweep(&cfg).unwrap();
    }
    let mut files = Vec::new();
    let mut stack = vec![dirs[0].clone()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push(p.strip_prefix(&dirs[0]).unwrap().to_path_buf());
            }
        }
    }
    assert!(files.len() >= 7, "sweep produced {} files", files.len());
    for rel in &files {
        let a = std::fs::read(dirs[0].join(rel)).unwrap();
        let b = std::fs::read(dirs[1].join(rel)).unwrap();
        if a != b {
            worst_mismatch += 1;
            eprintln!("mismatch in {}", rel.display());
        }
    }
    let _ = std::fs::remove_dir_all(&base);
    verdict(
        "criterion-10-determinism",
        worst_mismatch == 0,
        worst_mismatch as f64,
        0.0,
    );
}
