//! Command implementations behind the `poroplate` binary.
//!
//! Every command writes CSV artifacts (optionally legacy VTK) under the
//! output directory, each file prefixed with `#`-comment lines echoing the
//! resolved configuration, and appends machine-readable verdict lines
//! `criterion-id PASS|FAIL value threshold` to `verdicts.txt`. Reruns with
//! an identical configuration produce bitwise-identical files.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::biot3d::{assemble_biot, coupling_spd_margin, run_biot, BiotTrajectory};
use crate::config::RunConfig;
use crate::grid::{self, BcTag, Field, Grid2D, Grid3D};
use crate::limit2d::{run_limit, LimitTrajectory};
use crate::verify::{
    self, equilibrium_residuals, estimate_rate, limit_resultants, APRIORI_NAMES,
};
use crate::{Error, Result};

/// One acceptance verdict, serialized as `id PASS|FAIL value threshold`.
#[derive(Debug, Clone)]
pub struct Verdict {
    pub id: String,
    pub pass: bool,
    pub value: f64,
    pub threshold: f64,
}

impl Verdict {
    pub fn new(id: impl Into<String>, pass: bool, value: f64, threshold: f64) -> Self {
        Verdict {
            id: id.into(),
            pass,
            value,
            threshold,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {} {:e} {:e}",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.value,
            self.threshold
        )
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn write_table(path: &Path, header: &[String], columns: &str, rows: &[String]) -> Result<()> {
    let mut out = String::new();
    for line in header {
        writeln!(out, "# {line}").expect("string write");
    }
    writeln!(out, "{columns}").expect("string write");
    for row in rows {
        writeln!(out, "{row}").expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn append_verdicts(dir: &Path, verdicts: &[Verdict]) -> Result<()> {
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(dir.join("verdicts.txt"))?;
    for v in verdicts {
        writeln!(f, "{}", v.line())?;
    }
    Ok(())
}

fn midsurface_bundle(state: &crate::limit2d::LimitState) -> Result<Field> {
    let g2 = state.w03.grid2()?;
    let mut bundle = Field::zeros2(g2, 4, BcTag::Free);
    for node in 0..g2.n_nodes() {
        bundle.set(node, 0, state.w01.get(node, 0));
        bundle.set(node, 1, state.w02.get(node, 0));
        bundle.set(node, 2, state.pi_m.get(node, 0));
        bundle.set(node, 3, state.w03.get(node, 0));
    }
    Ok(bundle)
}

fn limit_state_csv(
    dir: &Path,
    traj: &LimitTrajectory,
    header: &[String],
    write_vtk: bool,
    every: usize,
) -> Result<()> {
    // one midsurface CSV per output time
    for (step, state) in traj.states.iter().enumerate() {
        if step == 0 || (step % every != 0 && step != traj.states.len() - 1) {
            continue;
        }
        let mut h = header.to_vec();
        h.push(format!("snapshot.t = {}", state.t));
        grid::write_csv(
            &midsurface_bundle(state)?,
            &dir.join(format!("limit_t{step:04}.csv")),
            &h,
        )?;
    }
    let last = traj.states.last().expect("nonempty trajectory");
    grid::write_csv(&midsurface_bundle(last)?, &dir.join("limit_final_midsurface.csv"), header)?;
    grid::write_csv(&last.pi_w, &dir.join("limit_final_pi_w.csv"), header)?;
    if write_vtk {
        grid::write_vtk(&last.pi_w, &dir.join("limit_final_pi_w.vtk"), "pi_w")?;
        grid::write_vtk(&last.w03, &dir.join("limit_final_w03.vtk"), "w03")?;
    }

    let rows: Vec<String> = traj
        .reports
        .iter()
        .map(|r| {
            format!(
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                r.t,
                r.plate_energy,
                r.pressure_energy,
                r.vertical_dissipation,
                r.numerical_dissipation,
                r.external_work,
                r.closure_residual,
                r.coupling_bending,
                r.coupling_pressure
            )
        })
        .collect();
    write_table(
        &dir.join("limit_energy.csv"),
        header,
        "t,plate_energy,pressure_energy,vertical_dissipation,numerical_dissipation,external_work,closure_residual,coupling_bending,coupling_pressure",
        &rows,
    )?;
    Ok(())
}

fn biot_state_csv(dir: &Path, traj: &BiotTrajectory, header: &[String], write_vtk: bool) -> Result<()> {
    let last = traj.states.last().expect("nonempty trajectory");
    grid::write_csv(&last.w, &dir.join("biot_final_w.csv"), header)?;
    grid::write_csv(&last.pi, &dir.join("biot_final_pi.csv"), header)?;
    if write_vtk {
        grid::write_vtk(&last.w, &dir.join("biot_final_w.vtk"), "w")?;
        grid::write_vtk(&last.pi, &dir.join("biot_final_pi.vtk"), "pi")?;
    }
    let rows: Vec<String> = traj
        .reports
        .iter()
        .map(|r| {
            format!(
                "{},{:e},{:e},{:e},{:e},{:e},{:e}",
                r.t,
                r.elastic_energy,
                r.pressure_energy,
                r.dissipation,
                r.numerical_dissipation,
                r.external_work,
                r.closure_residual
            )
        })
        .collect();
    write_table(
        &dir.join("biot_energy.csv"),
        header,
        "t,elastic_energy,pressure_energy,dissipation,numerical_dissipation,external_work,closure_residual",
        &rows,
    )?;
    Ok(())
}

/// `solve-limit`: limit trajectory plus energy audit.
pub fn cmd_solve_limit(cfg: &RunConfig) -> Result<Vec<Verdict>> {
    ensure_dir(&cfg.output_dir)?;
    let g3 = Grid3D::new(Grid2D::new(cfg.nx, cfg.nx)?, cfg.nz)?;
    let loads = cfg.loads();
    let traj = crate::limit2d::run_limit_with_scheme(
        &cfg.params,
        g3,
        &loads,
        cfg.t_end,
        cfg.nsteps,
        None,
        cfg.scheme,
    )?;
    let header = cfg.echo();
    limit_state_csv(&cfg.output_dir, &traj, &header, cfg.write_vtk, cfg.output_every)?;

    let mut verdicts = Vec::new();
    let mut worst_closure = 0.0f64;
    let mut worst_numdiss = 0.0f64;
    let mut worst_coupling = 0.0f64;
    for r in &traj.reports {
        let scale = r.energy_scale.max(1e-300);
        worst_closure = worst_closure.max(r.closure_residual / scale);
        worst_numdiss = worst_numdiss.max(-r.numerical_dissipation / scale);
        worst_coupling = worst_coupling.max((r.coupling_bending + r.coupling_pressure).abs() / scale);
    }
    verdicts.push(Verdict::new("limit-energy-closure", worst_closure <= 1e-10, worst_closure, 1e-10));
    verdicts.push(Verdict::new("limit-numdiss-nonneg", worst_numdiss <= 1e-14, worst_numdiss, 1e-14));
    verdicts.push(Verdict::new("limit-coupling-cancel", worst_coupling <= 1e-12, worst_coupling, 1e-12));
    let mean = traj
        .states
        .iter()
        .map(|s| s.pi_w_mean_defect())
        .fold(0.0f64, f64::max);
    verdicts.push(Verdict::new("pi-w-mean", mean <= 1e-12, mean, 1e-12));
    append_verdicts(&cfg.output_dir, &verdicts)?;
    Ok(verdicts)
}

/// `solve-3d`: one scaled 3D run at the config ε.
pub fn cmd_solve_3d(cfg: &RunConfig, eps: Option<f64>) -> Result<Vec<Verdict>> {
    ensure_dir(&cfg.output_dir)?;
    let eps = eps.unwrap_or(cfg.params.eps);
    let g3 = Grid3D::new(Grid2D::new(cfg.nx, cfg.nx)?, cfg.nz)?;
    let loads = cfg.loads();
    if cfg.export_matrices {
        let sys = assemble_biot(g3, &cfg.params, eps)?;
        sys.a.write_matrix_market(&cfg.output_dir.join("matrix_a.mtx"), "elasticity block A")?;
        sys.k.write_matrix_market(&cfg.output_dir.join("matrix_k.mtx"), "pressure stiffness K")?;
        sys.mass_p
            .write_matrix_market(&cfg.output_dir.join("matrix_mass_p.mtx"), "pressure mass")?;
    }
    let traj = run_biot(&cfg.params, g3, eps, &loads, cfg.t_end, cfg.nsteps)?;
    let mut header = cfg.echo();
    header.push(format!("run.eps = {eps}"));
    biot_state_csv(&cfg.output_dir, &traj, &header, cfg.write_vtk)?;

    let mut worst_closure = 0.0f64;
    for r in &traj.reports {
        worst_closure = worst_closure.max(r.closure_residual / r.energy_scale.max(1e-300));
    }
    let verdicts = vec![Verdict::new(
        "biot-energy-closure",
        worst_closure <= 1e-10,
        worst_closure,
        1e-10,
    )];
    append_verdicts(&cfg.output_dir, &verdicts)?;
    Ok(verdicts)
}

/// `sweep-epsilon`: 3D runs per ε against one limit run; rate tables,
/// a-priori ratios, SPD margin and the convergence verdicts.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<Vec<Verdict>> {
    ensure_dir(&cfg.output_dir)?;
    let g3 = Grid3D::new(Grid2D::new(cfg.nx, cfg.nx)?, cfg.nz)?;
    let loads = cfg.loads();
    let header = cfg.echo();

    // one limit run shared by every sweep member; per-ε 3D runs feed both
    // the trajectory artifacts and the convergence norms
    let limit = run_limit(&cfg.params, g3, &loads, cfg.t_end, cfg.nsteps, None)?;
    limit_state_csv(&cfg.output_dir, &limit, &header, cfg.write_vtk, cfg.output_every)?;
    let mut entries = Vec::with_capacity(cfg.eps_list.len());
    for &eps in &cfg.eps_list {
        let sub = cfg.output_dir.join(format!("eps_{eps}"));
        ensure_dir(&sub)?;
        let traj = run_biot(&cfg.params, g3, eps, &loads, cfg.t_end, cfg.nsteps)?;
        let mut h = header.clone();
        h.push(format!("run.eps = {eps}"));
        biot_state_csv(&sub, &traj, &h, cfg.write_vtk)?;
        entries.push(verify::SweepEntry {
            eps,
            norms: verify::corrected_error_norms(&traj, &limit, &cfg.params, eps)?,
            stress: verify::stress_error_norms(&traj, &limit, &cfg.params, eps)?,
            apriori: verify::apriori_quantities(&traj, eps)?,
        });
    }
    let report = verify::SweepReport { entries };
    let epsilons = report.epsilons();

    // rates table
    let mut rows = Vec::new();
    for (name, vals) in report.rows() {
        let rates = estimate_rate(&vals, &epsilons)?;
        for (q, v) in vals.iter().enumerate() {
            let rate = if q == 0 {
                String::new()
            } else {
                match rates[q - 1] {
                    Some(r) => format!("{r:e}"),
                    None => "undefined".into(),
                }
            };
            rows.push(format!("{},{},{:e},{}", epsilons[q], name, v, rate));
        }
    }
    write_table(&cfg.output_dir.join("rates.csv"), &header, "eps,quantity,value,rate", &rows)?;

    // a priori table
    let mut rows = Vec::new();
    for (q, name) in APRIORI_NAMES.iter().enumerate() {
        for e in &report.entries {
            rows.push(format!("{},{},{:e}", e.eps, name, e.apriori.values[q]));
        }
    }
    write_table(&cfg.output_dir.join("apriori.csv"), &header, "eps,quantity,value", &rows)?;

    // verdicts: monotone decrease + halving, a priori bound, SPD margin
    let mut verdicts = Vec::new();
    let mut worst_ratio = 0.0f64;
    let mut worst_mono = f64::NEG_INFINITY; // largest adjacent increase factor - 1
    for (_name, vals) in report.rows() {
        for w in vals.windows(2) {
            worst_mono = worst_mono.max(w[1] / w[0] - 1.0);
        }
        worst_ratio = worst_ratio.max(vals[vals.len() - 1] / vals[0]);
    }
    verdicts.push(Verdict::new("eps-monotone", worst_mono < 0.0, worst_mono, 0.0));
    verdicts.push(Verdict::new("eps-halving", worst_ratio <= 0.5, worst_ratio, 0.5));
    let mut worst_apriori = 0.0f64;
    for e in &report.entries {
        for (q, v) in e.apriori.values.iter().enumerate() {
            worst_apriori = worst_apriori.max(v / report.entries[0].apriori.values[q]);
        }
    }
    verdicts.push(Verdict::new("apriori-bounded", worst_apriori <= 3.0, worst_apriori, 3.0));

    let sys = assemble_biot(g3, &cfg.params, *cfg.eps_list.first().unwrap_or(&0.2))?;
    let margin = coupling_spd_margin(&sys)?;
    verdicts.push(Verdict::new("spd-margin", margin >= -1e-8, margin, -1e-8));

    append_verdicts(&cfg.output_dir, &verdicts)?;
    Ok(verdicts)
}

/// `mms`: convergence-order tables for the limit solvers.
pub fn cmd_mms(cfg: &RunConfig) -> Result<Vec<Verdict>> {
    ensure_dir(&cfg.output_dir)?;
    let header = cfg.echo();
    let grids = &cfg.mms_grids;
    if grids.len() < 2 {
        return Err(Error::Param {
            name: "mms.grids",
            msg: "need at least two grids".into(),
        });
    }
    let hs: Vec<f64> = grids.iter().map(|&n| 1.0 / n as f64).collect();

    let t_mem = Instant::now();
    let mut mem_err = Vec::new();
    for &nx in grids {
        mem_err.push(verify::mms::membrane_error(&cfg.params, nx)?);
    }
    let mem_time = t_mem.elapsed().as_secs_f64();
    let mem_rates = estimate_rate(&mem_err, &hs)?;

    let t_bend = Instant::now();
    let mut w3_err = Vec::new();
    let mut pi_err = Vec::new();
    for (q, &nx) in grids.iter().enumerate() {
        let nz = (nx / 2).max(4);
        let scale = (grids[0] as f64 / nx as f64).powi(2);
        let nsteps = ((8.0 / scale).round() as usize).max(8);
        let (ew, ep) = verify::mms::bending_errors(&cfg.params, nx, nz, cfg.t_end, nsteps)?;
        let _ = q;
        w3_err.push(ew);
        pi_err.push(ep);
    }
    let w3_rates = estimate_rate(&w3_err, &hs)?;
    let pi_rates = estimate_rate(&pi_err, &hs)?;

    // temporal study on the finest grid
    let fine = *grids.last().unwrap();
    let temporal_err = verify::mms::bending_temporal_errors(
        &cfg.params,
        fine,
        (fine / 2).max(4),
        cfg.t_end,
        &cfg.mms_temporal_steps,
        8,
    )?;
    let dts: Vec<f64> = cfg
        .mms_temporal_steps
        .iter()
        .map(|&n| cfg.t_end / n as f64)
        .collect();
    let temporal_rates = estimate_rate(&temporal_err, &dts)?;
    let bend_time = t_bend.elapsed().as_secs_f64();

    let mut rows = Vec::new();
    let fmt_rate = |r: &Option<f64>| match r {
        Some(v) => format!("{v:e}"),
        None => "undefined".into(),
    };
    for (q, &nx) in grids.iter().enumerate() {
        let rate = if q == 0 { String::new() } else { fmt_rate(&mem_rates[q - 1]) };
        rows.push(format!("membrane_l2,{nx},{:e},{}", mem_err[q], rate));
    }
    for (q, &nx) in grids.iter().enumerate() {
        let rate = if q == 0 { String::new() } else { fmt_rate(&w3_rates[q - 1]) };
        rows.push(format!("bending_w3_l2,{nx},{:e},{}", w3_err[q], rate));
    }
    for (q, &nx) in grids.iter().enumerate() {
        let rate = if q == 0 { String::new() } else { fmt_rate(&pi_rates[q - 1]) };
        rows.push(format!("bending_pi_l2,{nx},{:e},{}", pi_err[q], rate));
    }
    for (q, &ns) in cfg.mms_temporal_steps.iter().enumerate() {
        let rate = if q == 0 { String::new() } else { fmt_rate(&temporal_rates[q - 1]) };
        rows.push(format!("bending_temporal,{ns},{:e},{}", temporal_err[q], rate));
    }
    write_table(
        &cfg.output_dir.join("mms_orders.csv"),
        &header,
        "quantity,resolution,error,rate",
        &rows,
    )?;

    let mem_lo = mem_rates.iter().filter_map(|r| *r).fold(f64::INFINITY, f64::min);
    let mem_hi = mem_rates.iter().filter_map(|r| *r).fold(f64::NEG_INFINITY, f64::max);
    let spatial_lo = w3_rates
        .iter()
        .chain(pi_rates.iter())
        .filter_map(|r| *r)
        .fold(f64::INFINITY, f64::min);
    let temporal_lo = temporal_rates.iter().filter_map(|r| *r).fold(f64::INFINITY, f64::min);
    let verdicts = vec![
        Verdict::new("mms-membrane-order", (1.8..=2.5).contains(&mem_lo) && mem_hi <= 2.5, mem_lo, 1.8),
        Verdict::new("mms-membrane-runtime", mem_time < 30.0, mem_time, 30.0),
        Verdict::new("mms-bending-spatial-order", spatial_lo >= 1.8, spatial_lo, 1.8),
        Verdict::new("mms-bending-temporal-order", temporal_lo >= 0.8, temporal_lo, 0.8),
        Verdict::new("mms-bending-runtime", bend_time < 120.0, bend_time, 120.0),
    ];
    append_verdicts(&cfg.output_dir, &verdicts)?;
    Ok(verdicts)
}

/// `resultants`: appendix resultants/moments of the converged limit solution
/// plus equilibrium residuals under mesh halving.
pub fn cmd_resultants(cfg: &RunConfig) -> Result<Vec<Verdict>> {
    ensure_dir(&cfg.output_dir)?;
    let header = cfg.echo();
    let loads = cfg.loads();

    let mut moments = Vec::new();
    let mut rows = Vec::new();
    for &nx in &[cfg.nx, cfg.nx * 2] {
        let g3 = Grid3D::new(Grid2D::new(nx, nx)?, cfg.nz)?;
        let traj = run_limit(&cfg.params, g3, &loads, cfg.t_end, cfg.nsteps, None)?;
        let last = traj.states.last().unwrap();
        let res = limit_resultants(last, &cfg.params)?;
        let eq = equilibrium_residuals(&res, &loads, last.t)?;
        rows.push(format!(
            "{nx},{:e},{:e},{:e},{:e}",
            eq.force1, eq.force2, eq.moment, res.max_discrepancy
        ));
        moments.push(eq.moment);
        if nx == cfg.nx {
            let mut bundle = Field::zeros2(res.n1.grid2()?, 6, BcTag::Free);
            for node in 0..bundle.data.len() / 6 {
                bundle.set(node, 0, res.n1.get(node, 0));
                bundle.set(node, 1, res.n2.get(node, 0));
                bundle.set(node, 2, res.n12.get(node, 0));
                bundle.set(node, 3, res.m1.get(node, 0));
                bundle.set(node, 4, res.m2.get(node, 0));
                bundle.set(node, 5, res.m12.get(node, 0));
            }
            grid::write_csv(&bundle, &cfg.output_dir.join("resultants.csv"), &header)?;
        }
    }
    write_table(
        &cfg.output_dir.join("equilibrium.csv"),
        &header,
        "nx,force1,force2,moment,cf_discrepancy",
        &rows,
    )?;

    let ratio = moments[0] / moments[1];
    let verdicts = vec![Verdict::new("moment-residual-halving", ratio >= 3.0, ratio, 3.0)];
    append_verdicts(&cfg.output_dir, &verdicts)?;
    Ok(verdicts)
}

/// `report`: aggregate verdict files below the output root.
pub fn cmd_report(cfg: &RunConfig) -> Result<(String, bool)> {
    let mut lines = Vec::new();
    let mut all_pass = true;
    let mut stack = vec![cfg.output_dir.clone()];
    let mut files = Vec::new();
    while let Some(dir) = stack.pop() {
        let Ok(entries) = std::fs::read_dir(&dir) else { continue };
        let mut children: Vec<PathBuf> = entries.flatten().map(|e| e.path()).collect();
        children.sort();
        for child in children {
            if child.is_dir() {
                stack.push(child);
            } else if child.file_name().is_some_and(|n| n == "verdicts.txt") {
                files.push(child);
            }
        }
    }
    files.sort();
    for file in files {
        let text = std::fs::read_to_string(&file)?;
        for line in text.lines() {
            if line.contains("FAIL") {
                all_pass = false;
            }
            lines.push(format!("{}: {line}", file.display()));
        }
    }
    let summary = format!(
        "{}\noverall: {}\n",
        lines.join("\n"),
        if all_pass { "PASS" } else { "FAIL" }
    );
    std::fs::write(cfg.output_dir.join("report.txt"), &summary)?;
    Ok((summary, all_pass))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg(dir: &Path) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.nsteps = 3;
        cfg.eps_list = vec![0.4, 0.2, 0.1];
        cfg.output_dir = dir.to_path_buf();
        cfg
    }

    #[test]
    fn sweep_writes_expected_files() {
        // three sweep members produce three trajectory directories plus the
        // rates table and the verdict file
        let dir = std::env::temp_dir().join(format!("poroplate-clitest-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        let cfg = tiny_cfg(&dir);
        cmd_sweep(&cfg).unwrap();
        assert!(dir.join("rates.csv").is_file());
        assert!(dir.join("verdicts.txt").is_file());
        let ndirs = std::fs::read_dir(&dir)
            .unwrap()
            .flatten()
            .filter(|e| e.path().is_dir())
            .count();
        assert_eq!(ndirs, 3, "one trajectory directory per epsilon");
        for eps in ["0.4", "0.2", "0.1"] {
            assert!(dir.join(format!("eps_{eps}")).is_dir(), "trajectory dir for eps {eps}");
        }
        let (summary, _) = cmd_report(&cfg).unwrap();
        assert!(summary.contains("overall"));
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn verdict_line_format() {
        let v = Verdict::new("x", true, 0.25, 0.5);
        assert_eq!(v.line(), "x PASS 2.5e-1 5e-1");
    }
}
