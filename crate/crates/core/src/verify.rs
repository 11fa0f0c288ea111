//! Verification machinery: manufactured solutions, empirical convergence
//! rates, corrector fields, convergence norms, stress resultants and
//! equilibrium residuals.
//!
//! The ε-sweep compares the 3D trajectory against the limit trajectory on
//! the same grids after correcting the naive limit by
//!
//! ```text
//!   ξ_j = w_j(ε) - w⁰_j + y3 ∂_j w⁰₃     (j = 1, 2)
//!   ξ_3 = w_3(ε) - w⁰₃ - ε² ℰ,          ℰ = Ψ_ε ∫_0^{y3} E*cor da
//!   κ   = π(ε) - π_m - π_w
//! ```
//!
//! where `E*cor` is the limit of the scaled vertical compression and `Ψ_ε`
//! a quintic smoothstep of distance/ε that vanishes on ∂ω. Every norm is a
//! trapezoid (plane) × Simpson (thickness) discrete L², and the reported
//! value is the maximum over time steps.

use crate::biot3d::BiotTrajectory;
use crate::grid::{self, BcTag, DiffOp, Field, Grid2D, Grid3D};
use crate::limit2d::{Interior2D, LambdaOp, LimitState, LimitTrajectory};
use crate::loads::LoadSpec;
use crate::params::DimensionlessParams;
use crate::{Error, Result};

/// Empirical rates r_i = log(e_i/e_{i+1}) / log(ε_i/ε_{i+1}).
///
/// Entries are `None` where a rate is undefined (non-positive errors).
pub fn estimate_rate(errors: &[f64], epsilons: &[f64]) -> Result<Vec<Option<f64>>> {
    if errors.len() != epsilons.len() || errors.len() < 2 {
        return Err(Error::Shape(format!(
            "need matching sequences of length >= 2, got {} errors and {} epsilons",
            errors.len(),
            epsilons.len()
        )));
    }
    for w in epsilons.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::Shape("epsilons must be strictly decreasing".into()));
        }
    }
    let mut rates = Vec::with_capacity(errors.len() - 1);
    for i in 0..errors.len() - 1 {
        if errors[i] > 0.0 && errors[i + 1] > 0.0 {
            rates.push(Some((errors[i] / errors[i + 1]).ln() / (epsilons[i] / epsilons[i + 1]).ln()));
        } else {
            rates.push(None);
        }
    }
    Ok(rates)
}

// ---------------------------------------------------------------------------
// correctors
// ---------------------------------------------------------------------------

/// Corrector fields derived from one limit-model state.
#[derive(Debug, Clone)]
pub struct CorrectorFields {
    /// Midsurface compression corrector (2D).
    pub e_cor: Field,
    /// Limit of the scaled vertical compression (3D).
    pub e_star: Field,
    /// Boundary cutoff Ψ_ε (2D).
    pub psi: Field,
    /// ℰ = Ψ_ε ∫_0^{y3} E*cor da (3D).
    pub ecal: Field,
    pub t: f64,
}

/// Quintic smoothstep of distance/ε: 0 on ∂ω, 1 at distance ≥ ε.
pub fn cutoff_psi(grid: Grid2D, eps: f64) -> Field {
    Field::from_fn2(grid, 1, BcTag::Free, |y1, y2, _| {
        let d = y1.min(1.0 - y1).min(y2).min(1.0 - y2);
        let s = (d / eps).clamp(0.0, 1.0);
        s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    })
}

/// Build the correctors of one limit state.
pub fn build_correctors(
    state: &LimitState,
    params: &DimensionlessParams,
    eps: f64,
    grid3: Grid3D,
) -> Result<CorrectorFields> {
    let g2 = grid3.base;
    let nu = params.nu;
    let alpha = params.alpha;
    let ca = alpha * (1.0 - 2.0 * nu) / (2.0 * (1.0 - nu));
    let cb = nu / (1.0 - nu);

    // div of the midsurface displacement and clamped Laplacian of w03
    let mut wpair = Field::zeros2(g2, 2, BcTag::LateralDirichlet);
    for node in 0..g2.n_nodes() {
        wpair.set(node, 0, state.w01.get(node, 0));
        wpair.set(node, 1, state.w02.get(node, 0));
    }
    let div_w0 = grid::apply_diff(&wpair, DiffOp::Div2)?;
    let lam = LambdaOp::new(g2);
    let map = Interior2D::new(g2);
    let lap_w03 = lam.apply(&map.gather(&state.w03));

    let mut e_cor = Field::zeros2(g2, 1, BcTag::Free);
    for node in 0..g2.n_nodes() {
        e_cor.set(
            node,
            0,
            ca * state.pi_m.get(node, 0) - cb * div_w0.get(node, 0),
        );
    }

    let mut e_star = Field::zeros3(grid3, 1, BcTag::Free);
    for i in 0..=g2.nx {
        for j in 0..=g2.ny {
            let n2 = g2.idx(i, j);
            for k in 0..=grid3.nz {
                let y3 = grid3.y3(k);
                let v = e_cor.get(n2, 0)
                    + cb * y3 * lap_w03[n2]
                    + ca * state.pi_w.get(grid3.idx(i, j, k), 0);
                e_star.set(grid3.idx(i, j, k), 0, v);
            }
        }
    }

    let psi = cutoff_psi(g2, eps);
    let integral = grid::cumulative_from_midplane(&e_star)?;
    let mut ecal = integral;
    for i in 0..=g2.nx {
        for j in 0..=g2.ny {
            let p = psi.get(g2.idx(i, j), 0);
            for k in 0..=grid3.nz {
                let n3 = grid3.idx(i, j, k);
                ecal.set(n3, 0, ecal.get(n3, 0) * p);
            }
        }
    }

    Ok(CorrectorFields {
        e_cor,
        e_star,
        psi,
        ecal,
        t: state.t,
    })
}

/// Worst pairwise defect between the three expressions for the limit
/// compression, all built from the same limit fields:
///
/// 1. the stored `E*cor = E_cor + ν y3/(1-ν) Δw⁰₃ + α(1-2ν)/(2(1-ν)) π_w`,
/// 2. the weak-limit form `(α(1-2ν)π⁰ - 2ν div₂ w̃*)/(2(1-ν))` with
///    `w̃*` the Kirchhoff-Love lift,
/// 3. the displacement-and-pressure form
///    `α(1-2ν)/(2(1-ν)) (π_w + π_m) - ν/(1-ν)(div₂ w̃⁰ - y3 Δ w⁰₃)`
///    (the physical-domain corrector evaluated on the scaled slab).
pub fn corrector_identity_defect(
    state: &LimitState,
    corr: &CorrectorFields,
    params: &DimensionlessParams,
) -> Result<f64> {
    let grid3 = state.pi_w.grid3()?;
    let g2 = grid3.base;
    let nu = params.nu;
    let alpha = params.alpha;
    let ca = alpha * (1.0 - 2.0 * nu) / (2.0 * (1.0 - nu));
    let cb = nu / (1.0 - nu);
    // shared discrete ingredients (identical realizations in all routes)
    let mut wpair = Field::zeros2(g2, 2, BcTag::LateralDirichlet);
    for node in 0..g2.n_nodes() {
        wpair.set(node, 0, state.w01.get(node, 0));
        wpair.set(node, 1, state.w02.get(node, 0));
    }
    let div_w0 = grid::apply_diff(&wpair, DiffOp::Div2)?;
    let lam = LambdaOp::new(g2);
    let map = Interior2D::new(g2);
    let lap_w03 = lam.apply(&map.gather(&state.w03));
    let mut worst = 0.0f64;
    for i in 0..=g2.nx {
        for j in 0..=g2.ny {
            let n2 = g2.idx(i, j);
            for k in 0..=grid3.nz {
                let n3 = grid3.idx(i, j, k);
                let y3 = grid3.y3(k);
                let stored = corr.e_star.get(n3, 0);
                let pi0 = state.pi_m.get(n2, 0) + state.pi_w.get(n3, 0);
                let div_star = div_w0.get(n2, 0) - y3 * lap_w03[n2];
                let weak = (alpha * (1.0 - 2.0 * nu) * pi0 - 2.0 * nu * div_star)
                    / (2.0 * (1.0 - nu));
                let slab = ca * pi0 - cb * div_star;
                worst = worst
                    .max((weak - stored).abs())
                    .max((slab - stored).abs())
                    .max((weak - slab).abs());
            }
        }
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// convergence norms
// ---------------------------------------------------------------------------

pub const NORM_NAMES: [&str; 10] = [
    "e11_xi",
    "e12_xi",
    "e22_xi",
    "xi_l2",
    "e13_xi_over_eps",
    "e23_xi_over_eps",
    "dz_xi3_over_eps2",
    "kappa",
    "dz_kappa",
    "eps_grad_kappa",
];

pub const STRESS_NAMES: [&str; 7] = [
    "d_plus_2estar",
    "sigma11_defect",
    "sigma12_defect",
    "sigma22_defect",
    "sigma13_over_eps",
    "sigma23_over_eps",
    "sigma33_over_eps",
];

pub const APRIORI_NAMES: [&str; 5] = [
    "e13_w_over_eps",
    "e23_w_over_eps",
    "e33_w_over_eps2",
    "dz_pi",
    "eps_grad_pi",
];

/// Per-ε maxima over time of the corrected-difference norms.
#[derive(Debug, Clone)]
pub struct NormReport {
    pub eps: f64,
    /// Values in the order of [`NORM_NAMES`].
    pub values: Vec<f64>,
}

/// Per-ε maxima over time of the stress discrepancies.
#[derive(Debug, Clone)]
pub struct StressReport {
    pub eps: f64,
    /// Values in the order of [`STRESS_NAMES`].
    pub values: Vec<f64>,
}

/// Per-ε maxima over time of the a-priori-estimate quantities.
#[derive(Debug, Clone)]
pub struct AprioriReport {
    pub eps: f64,
    /// Values in the order of [`APRIORI_NAMES`].
    pub values: Vec<f64>,
}

fn check_time_grids(biot: &BiotTrajectory, limit: &LimitTrajectory) -> Result<()> {
    if biot.states.len() != limit.states.len() || (biot.dt - limit.dt).abs() > 1e-14 {
        return Err(Error::Shape(format!(
            "trajectories must share the time grid: {} vs {} states, dt {} vs {}",
            biot.states.len(),
            limit.states.len(),
            biot.dt,
            limit.dt
        )));
    }
    Ok(())
}

/// Corrected unknowns (ξ(ε), κ(ε)) of one time level.
pub fn corrected_unknowns(
    biot: &crate::biot3d::BiotState,
    limit: &LimitState,
    corr: &CorrectorFields,
    eps: f64,
) -> Result<(Field, Field)> {
    let grid3 = biot.w.grid3()?;
    let g2 = grid3.base;
    let lifted = grid::lift_kl(&limit.w01, &limit.w02, &limit.w03, grid3)?;
    let mut xi = Field::zeros3(grid3, 3, BcTag::LateralDirichlet);
    let mut kappa = Field::zeros3(grid3, 1, BcTag::Free);
    for i in 0..=g2.nx {
        for j in 0..=g2.ny {
            let n2 = g2.idx(i, j);
            for k in 0..=grid3.nz {
                let n3 = grid3.idx(i, j, k);
                xi.set(n3, 0, biot.w.get(n3, 0) - lifted.get(n3, 0));
                xi.set(n3, 1, biot.w.get(n3, 1) - lifted.get(n3, 1));
                xi.set(
                    n3,
                    2,
                    biot.w.get(n3, 2) - lifted.get(n3, 2) - eps * eps * corr.ecal.get(n3, 0),
                );
                let pi0 = limit.pi_m.get(n2, 0) + limit.pi_w.get(n3, 0);
                kappa.set(n3, 0, biot.pi.get(n3, 0) - pi0);
            }
        }
    }
    Ok((xi, kappa))
}

/// Evaluate every corrected-difference norm, maximized over time steps.
pub fn corrected_error_norms(
    biot: &BiotTrajectory,
    limit: &LimitTrajectory,
    params: &DimensionlessParams,
    eps: f64,
) -> Result<NormReport> {
    check_time_grids(biot, limit)?;
    let grid3 = biot.states[0].w.grid3()?;
    let mut values = vec![0.0f64; NORM_NAMES.len()];
    for (bs, ls) in biot.states.iter().zip(&limit.states).skip(1) {
        let corr = build_correctors(ls, params, eps, grid3)?;
        let (xi, kappa) = corrected_unknowns(bs, ls, &corr, eps)?;
        let e11 = grid::apply_diff(&xi, DiffOp::Strain(0, 0))?;
        let e12 = grid::apply_diff(&xi, DiffOp::Strain(0, 1))?;
        let e22 = grid::apply_diff(&xi, DiffOp::Strain(1, 1))?;
        let e13 = grid::apply_diff(&xi, DiffOp::Strain(0, 2))?;
        let e23 = grid::apply_diff(&xi, DiffOp::Strain(1, 2))?;
        let dz3 = grid::deriv(&xi, 2, 2)?;
        let dzk = grid::deriv(&kappa, 0, 2)?;
        let gk1 = grid::deriv(&kappa, 0, 0)?;
        let gk2 = grid::deriv(&kappa, 0, 1)?;
        let grad_k = (grid::l2_norm(&gk1).powi(2) + grid::l2_norm(&gk2).powi(2)).sqrt();
        let step_vals = [
            grid::l2_norm(&e11),
            grid::l2_norm(&e12),
            grid::l2_norm(&e22),
            grid::l2_norm(&xi),
            grid::l2_norm(&e13) / eps,
            grid::l2_norm(&e23) / eps,
            grid::l2_norm(&dz3) / (eps * eps),
            grid::l2_norm(&kappa),
            grid::l2_norm(&dzk),
            eps * grad_k,
        ];
        for (v, s) in values.iter_mut().zip(step_vals) {
            *v = v.max(s);
        }
    }
    Ok(NormReport { eps, values })
}

/// Fourth-order vertical derivative of a scalar component. The stress
/// entries multiply ∂₃w₃ by ε⁻², which amplifies the second-order stencil
/// truncation into an ε-independent floor on coarse vertical grids; the
/// five-point rule keeps that floor below the ε-dependent signal.
fn vertical_deriv4(f: &Field, comp: usize) -> Result<Field> {
    let g3 = f.grid3()?;
    let nz = g3.nz;
    if nz < 4 {
        return grid::deriv(f, comp, 2);
    }
    let hz = g3.hz();
    let mut out = Field::zeros3(g3, 1, BcTag::Free);
    for i in 0..=g3.base.nx {
        for j in 0..=g3.base.ny {
            let v = |k: usize| f.get(g3.idx(i, j, k), comp);
            for k in 0..=nz {
                let d = if k == 0 {
                    -25.0 * v(0) + 48.0 * v(1) - 36.0 * v(2) + 16.0 * v(3) - 3.0 * v(4)
                } else if k == 1 {
                    -3.0 * v(0) - 10.0 * v(1) + 18.0 * v(2) - 6.0 * v(3) + v(4)
                } else if k == nz - 1 {
                    3.0 * v(nz) + 10.0 * v(nz - 1) - 18.0 * v(nz - 2) + 6.0 * v(nz - 3)
                        - v(nz - 4)
                } else if k == nz {
                    25.0 * v(nz) - 48.0 * v(nz - 1) + 36.0 * v(nz - 2) - 16.0 * v(nz - 3)
                        + 3.0 * v(nz - 4)
                } else {
                    v(k - 2) - 8.0 * v(k - 1) + 8.0 * v(k + 1) - v(k + 2)
                };
                out.set(g3.idx(i, j, k), 0, d / (12.0 * hz));
            }
        }
    }
    Ok(out)
}

/// Rescaled-stress field entries of one 3D state: D(ε) and σ(ε)/ε rows.
fn rescaled_stress_parts(
    bs: &crate::biot3d::BiotState,
    params: &DimensionlessParams,
    eps: f64,
) -> Result<(Field, [Field; 6])> {
    let lambda = params.lambda;
    let alpha = params.alpha;
    let d1w1 = grid::deriv(&bs.w, 0, 0)?;
    let d2w2 = grid::deriv(&bs.w, 1, 1)?;
    let e12 = grid::apply_diff(&bs.w, DiffOp::Strain(0, 1))?;
    let e13 = grid::apply_diff(&bs.w, DiffOp::Strain(0, 2))?;
    let e23 = grid::apply_diff(&bs.w, DiffOp::Strain(1, 2))?;
    let dzw3 = vertical_deriv4(&bs.w, 2)?;
    let n = bs.pi.data.len();
    let mut d_eps = bs.pi.clone();
    for q in 0..n {
        d_eps.data[q] = lambda * (d1w1.data[q] + d2w2.data[q]) - alpha * bs.pi.data[q]
            + lambda * dzw3.data[q] / (eps * eps);
    }
    Ok((d_eps, [d1w1, d2w2, e12, e13, e23, dzw3]))
}

/// Evaluate every rescaled-stress discrepancy, maximized over time.
pub fn stress_error_norms(
    biot: &BiotTrajectory,
    limit: &LimitTrajectory,
    params: &DimensionlessParams,
    eps: f64,
) -> Result<StressReport> {
    check_time_grids(biot, limit)?;
    let grid3 = biot.states[0].w.grid3()?;
    let g2 = grid3.base;
    let mut values = vec![0.0f64; STRESS_NAMES.len()];
    for (bs, ls) in biot.states.iter().zip(&limit.states).skip(1) {
        let corr = build_correctors(ls, params, eps, grid3)?;
        let (d_eps, parts) = rescaled_stress_parts(bs, params, eps)?;
        let [d1w1, d2w2, e12w, e13w, e23w, dzw3] = parts;
        // limit-side midsurface quantities
        let e11_0 = grid::deriv(&ls.w01, 0, 0)?;
        let e22_0 = grid::deriv(&ls.w02, 0, 1)?;
        let d2w01 = grid::deriv(&ls.w01, 0, 1)?;
        let d1w02 = grid::deriv(&ls.w02, 0, 0)?;
        let w03_11 = grid::second_deriv(&ls.w03, 0, 0)?;
        let w03_22 = grid::second_deriv(&ls.w03, 0, 1)?;
        let d1w03 = grid::deriv(&ls.w03, 0, 0)?;
        let w03_12 = grid::deriv(&d1w03, 0, 1)?;

        let mut defect = [
            Field::zeros3(grid3, 1, BcTag::Free),
            Field::zeros3(grid3, 1, BcTag::Free),
            Field::zeros3(grid3, 1, BcTag::Free),
            Field::zeros3(grid3, 1, BcTag::Free),
        ];
        for i in 0..=g2.nx {
            for j in 0..=g2.ny {
                let n2 = g2.idx(i, j);
                for k in 0..=grid3.nz {
                    let n3 = grid3.idx(i, j, k);
                    let y3 = grid3.y3(k);
                    let estar = corr.e_star.get(n3, 0);
                    let d = d_eps.get(n3, 0);
                    defect[0].set(n3, 0, d + 2.0 * estar);
                    let s11 = 2.0 * d1w1.get(n3, 0) + d;
                    defect[1].set(
                        n3,
                        0,
                        s11 - 2.0 * e11_0.get(n2, 0) + 2.0 * y3 * w03_11.get(n2, 0) + 2.0 * estar,
                    );
                    let s12 = 2.0 * e12w.get(n3, 0);
                    let e12_0 = 0.5 * (d2w01.get(n2, 0) + d1w02.get(n2, 0));
                    defect[2].set(n3, 0, s12 - 2.0 * e12_0 + 2.0 * y3 * w03_12.get(n2, 0));
                    let s22 = 2.0 * d2w2.get(n3, 0) + d;
                    defect[3].set(
                        n3,
                        0,
                        s22 - 2.0 * e22_0.get(n2, 0) + 2.0 * y3 * w03_22.get(n2, 0) + 2.0 * estar,
                    );
                }
            }
        }
        let mut s33 = d_eps.clone();
        for q in 0..s33.data.len() {
            s33.data[q] += 2.0 * dzw3.data[q] / (eps * eps);
        }
        let step_vals = [
            grid::l2_norm(&defect[0]),
            grid::l2_norm(&defect[1]),
            grid::l2_norm(&defect[2]),
            grid::l2_norm(&defect[3]),
            grid::l2_norm(&e13w) / eps,
            grid::l2_norm(&e23w) / eps,
            grid::l2_norm(&s33),
        ];
        for (v, s) in values.iter_mut().zip(step_vals) {
            *v = v.max(s);
        }
    }
    Ok(StressReport { eps, values })
}

/// A priori scaling quantities of a 3D trajectory.
pub fn apriori_quantities(biot: &BiotTrajectory, eps: f64) -> Result<AprioriReport> {
    let mut values = vec![0.0f64; APRIORI_NAMES.len()];
    for bs in biot.states.iter().skip(1) {
        let e13 = grid::apply_diff(&bs.w, DiffOp::Strain(0, 2))?;
        let e23 = grid::apply_diff(&bs.w, DiffOp::Strain(1, 2))?;
        let e33 = grid::deriv(&bs.w, 2, 2)?;
        let dzp = grid::deriv(&bs.pi, 0, 2)?;
        let g1 = grid::deriv(&bs.pi, 0, 0)?;
        let g2 = grid::deriv(&bs.pi, 0, 1)?;
        let grad = (grid::l2_norm(&g1).powi(2) + grid::l2_norm(&g2).powi(2)).sqrt();
        let step_vals = [
            grid::l2_norm(&e13) / eps,
            grid::l2_norm(&e23) / eps,
            grid::l2_norm(&e33) / (eps * eps),
            grid::l2_norm(&dzp),
            eps * grad,
        ];
        for (v, s) in values.iter_mut().zip(step_vals) {
            *v = v.max(s);
        }
    }
    Ok(AprioriReport { eps, values })
}

// ---------------------------------------------------------------------------
// ε-sweep
// ---------------------------------------------------------------------------

/// Reports of one sweep member.
#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub eps: f64,
    pub norms: NormReport,
    pub stress: StressReport,
    pub apriori: AprioriReport,
}

/// Complete sweep result (entries ordered by decreasing ε).
#[derive(Debug)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
}

impl SweepReport {
    /// (name, values-per-ε) rows over both convergence reports.
    pub fn rows(&self) -> Vec<(&'static str, Vec<f64>)> {
        let mut rows = Vec::new();
        for (q, name) in NORM_NAMES.iter().enumerate() {
            rows.push((*name, self.entries.iter().map(|e| e.norms.values[q]).collect()));
        }
        for (q, name) in STRESS_NAMES.iter().enumerate() {
            rows.push((*name, self.entries.iter().map(|e| e.stress.values[q]).collect()));
        }
        rows
    }

    pub fn epsilons(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.eps).collect()
    }
}

/// Run the 3D problem for each ε against one shared limit trajectory and
/// collect every report.
pub fn sweep_epsilon(
    params: &DimensionlessParams,
    grid3: Grid3D,
    loads: &LoadSpec,
    t_end: f64,
    nsteps: usize,
    eps_list: &[f64],
) -> Result<SweepReport> {
    for w in eps_list.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::Shape("epsilon list must be strictly decreasing".into()));
        }
    }
    let limit = crate::limit2d::run_limit(params, grid3, loads, t_end, nsteps, None)?;
    let mut entries = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let biot = crate::biot3d::run_biot(params, grid3, eps, loads, t_end, nsteps)?;
        let norms = corrected_error_norms(&biot, &limit, params, eps)?;
        let stress = stress_error_norms(&biot, &limit, params, eps)?;
        let apriori = apriori_quantities(&biot, eps)?;
        entries.push(SweepEntry {
            eps,
            norms,
            stress,
            apriori,
        });
    }
    Ok(SweepReport { entries })
}

// ---------------------------------------------------------------------------
// resultants, moments, equilibrium
// ---------------------------------------------------------------------------

/// Thickness-integrated resultants and moments of a 3D (displacement,
/// pressure) pair on the scaled slab (thickness convention ℓ = 2, G = 1),
/// evaluated both by Simpson quadrature of the plane-stress-reduced stress
/// and by the closed-form midsurface expressions.
#[derive(Debug, Clone)]
pub struct ResultantField {
    pub n1: Field,
    pub n2: Field,
    pub n12: Field,
    pub m1: Field,
    pub m2: Field,
    pub m12: Field,
    /// Pore-pressure resultant N = -∫ p dy3.
    pub n_pore: Field,
    /// Pore-pressure moment M = -∫ y3 p dy3.
    pub m_pore: Field,
    pub q1: Field,
    pub q2: Field,
    /// Closed-form counterparts (same ordering).
    pub cf_n1: Field,
    pub cf_n2: Field,
    pub cf_n12: Field,
    pub cf_m1: Field,
    pub cf_m2: Field,
    pub cf_m12: Field,
    /// Largest |quadrature - closed form| over the six resultant/moment fields.
    pub max_discrepancy: f64,
}

/// Compute resultants and moments from 3D fields.
pub fn resultants_and_moments(
    w: &Field,
    p: &Field,
    params: &DimensionlessParams,
) -> Result<ResultantField> {
    let grid3 = w.grid3()?;
    if p.grid3()? != grid3 {
        return Err(Error::Shape("displacement and pressure on different grids".into()));
    }
    let nu = params.nu;
    let alpha = params.alpha;
    let cp = alpha * (1.0 - 2.0 * nu) / (1.0 - nu);
    let cs = 2.0 / (1.0 - nu);

    // plane-stress-reduced stresses from the 3D strains
    let e11 = grid::deriv(w, 0, 0)?;
    let e22 = grid::deriv(w, 1, 1)?;
    let e12 = grid::apply_diff(w, DiffOp::Strain(0, 1))?;
    let e13 = grid::apply_diff(w, DiffOp::Strain(0, 2))?;
    let e23 = grid::apply_diff(w, DiffOp::Strain(1, 2))?;
    let n = p.data.len();
    let mut s11 = Field::zeros3(grid3, 1, BcTag::Free);
    let mut s22 = Field::zeros3(grid3, 1, BcTag::Free);
    let mut s12 = Field::zeros3(grid3, 1, BcTag::Free);
    let mut s13 = Field::zeros3(grid3, 1, BcTag::Free);
    let mut s23 = Field::zeros3(grid3, 1, BcTag::Free);
    let mut neg_p = Field::zeros3(grid3, 1, BcTag::Free);
    for q in 0..n {
        s11.data[q] = cs * (e11.data[q] + nu * e22.data[q]) - cp * p.data[q];
        s22.data[q] = cs * (e22.data[q] + nu * e11.data[q]) - cp * p.data[q];
        s12.data[q] = 2.0 * e12.data[q];
        s13.data[q] = 2.0 * e13.data[q];
        s23.data[q] = 2.0 * e23.data[q];
        neg_p.data[q] = -p.data[q];
    }

    let n1 = grid::moment_integrals(&s11, 0)?;
    let n2 = grid::moment_integrals(&s22, 0)?;
    let n12 = grid::moment_integrals(&s12, 0)?;
    let m1 = grid::moment_integrals(&s11, 1)?;
    let m2 = grid::moment_integrals(&s22, 1)?;
    let m12 = grid::moment_integrals(&s12, 1)?;
    let q1 = grid::moment_integrals(&s13, 0)?;
    let q2 = grid::moment_integrals(&s23, 0)?;
    let n_pore = grid::moment_integrals(&neg_p, 0)?;
    let m_pore = grid::moment_integrals(&neg_p, 1)?;

    // closed forms from midsurface restrictions (ℓ = 2, G = 1)
    let g2 = grid3.base;
    let mid = grid::restrict_to_midplane(w)?;
    let u1 = mid.component(0);
    let u2 = mid.component(1);
    let w3 = mid.component(2);
    let d1u1 = grid::deriv(&u1, 0, 0)?;
    let d2u2 = grid::deriv(&u2, 0, 1)?;
    let d2u1 = grid::deriv(&u1, 0, 1)?;
    let d1u2 = grid::deriv(&u2, 0, 0)?;
    let w11 = grid::second_deriv(&w3, 0, 0)?;
    let w22 = grid::second_deriv(&w3, 0, 1)?;
    let d1w3 = grid::deriv(&w3, 0, 0)?;
    let w12 = grid::deriv(&d1w3, 0, 1)?;

    let ell = 2.0f64;
    let bend = ell * ell * ell / 6.0; // Gℓ³/6 with G = 1
    let mut cf_n1 = Field::zeros2(g2, 1, BcTag::Free);
    let mut cf_n2 = Field::zeros2(g2, 1, BcTag::Free);
    let mut cf_n12 = Field::zeros2(g2, 1, BcTag::Free);
    let mut cf_m1 = Field::zeros2(g2, 1, BcTag::Free);
    let mut cf_m2 = Field::zeros2(g2, 1, BcTag::Free);
    let mut cf_m12 = Field::zeros2(g2, 1, BcTag::Free);
    for q in 0..g2.n_nodes() {
        cf_n1.data[q] = (2.0 * ell / (1.0 - nu)) * (d1u1.data[q] + nu * d2u2.data[q])
            + cp * n_pore.data[q];
        cf_n2.data[q] = (2.0 * ell / (1.0 - nu)) * (d2u2.data[q] + nu * d1u1.data[q])
            + cp * n_pore.data[q];
        cf_n12.data[q] = ell * (d2u1.data[q] + d1u2.data[q]);
        cf_m1.data[q] =
            -(bend / (1.0 - nu)) * (w11.data[q] + nu * w22.data[q]) + cp * m_pore.data[q];
        cf_m2.data[q] =
            -(bend / (1.0 - nu)) * (w22.data[q] + nu * w11.data[q]) + cp * m_pore.data[q];
        cf_m12.data[q] = -bend * w12.data[q];
    }

    let mut max_discrepancy = 0.0f64;
    for (a, b) in [
        (&n1, &cf_n1),
        (&n2, &cf_n2),
        (&n12, &cf_n12),
        (&m1, &cf_m1),
        (&m2, &cf_m2),
        (&m12, &cf_m12),
    ] {
        for q in 0..g2.n_nodes() {
            max_discrepancy = max_discrepancy.max((a.data[q] - b.data[q]).abs());
        }
    }

    Ok(ResultantField {
        n1,
        n2,
        n12,
        m1,
        m2,
        m12,
        n_pore,
        m_pore,
        q1,
        q2,
        cf_n1,
        cf_n2,
        cf_n12,
        cf_m1,
        cf_m2,
        cf_m12,
        max_discrepancy,
    })
}

/// Resultants of a limit-model state: the Kirchhoff-Love lift of the
/// midsurface displacements paired with the full limit pressure
/// `π⁰ = π_m + π_w` on the slab.
pub fn limit_resultants(state: &LimitState, params: &DimensionlessParams) -> Result<ResultantField> {
    let grid3 = state.pi_w.grid3()?;
    let g2 = grid3.base;
    let w = grid::lift_kl(&state.w01, &state.w02, &state.w03, grid3)?;
    let mut pi = Field::zeros3(grid3, 1, BcTag::Free);
    for i in 0..=g2.nx {
        for j in 0..=g2.ny {
            let pm = state.pi_m.get(g2.idx(i, j), 0);
            for k in 0..=grid3.nz {
                let n3 = grid3.idx(i, j, k);
                pi.set(n3, 0, pm + state.pi_w.get(n3, 0));
            }
        }
    }
    resultants_and_moments(&w, &pi, params)
}

/// L² norms (interior nodes) of the three equilibrium residuals:
/// the two in-plane force balances and the moment balance.
#[derive(Debug, Clone, Copy)]
pub struct EquilibriumResiduals {
    pub force1: f64,
    pub force2: f64,
    pub moment: f64,
}

/// Margin excluded from the equilibrium-residual norms. The clamped-plate
/// solution carries reduced discrete regularity in a boundary strip (the
/// ghost closure is only O(1)-consistent there), which fourth differences
/// amplify; a margin fixed in physical units keeps the measured residual a
/// pure interior-consistency quantity across refinements.
pub const EQUILIBRIUM_MARGIN: f64 = 0.15;

/// Discrete equilibrium residuals of a resultant field against loads at
/// time t. Interior nodes only (boundary distance ≥ [`EQUILIBRIUM_MARGIN`]);
/// one-sided stencils never enter.
pub fn equilibrium_residuals(
    res: &ResultantField,
    loads: &LoadSpec,
    t: f64,
) -> Result<EquilibriumResiduals> {
    let g2 = res.n1.grid2()?;
    let h = g2.h();
    let d1 = |f: &Field, i: usize, j: usize| {
        (f.get(g2.idx(i + 1, j), 0) - f.get(g2.idx(i - 1, j), 0)) / (2.0 * h)
    };
    let d2 = |f: &Field, i: usize, j: usize| {
        (f.get(g2.idx(i, j + 1), 0) - f.get(g2.idx(i, j - 1), 0)) / (2.0 * h)
    };
    let d11 = |f: &Field, i: usize, j: usize| {
        (f.get(g2.idx(i + 1, j), 0) - 2.0 * f.get(g2.idx(i, j), 0) + f.get(g2.idx(i - 1, j), 0))
            / (h * h)
    };
    let d22 = |f: &Field, i: usize, j: usize| {
        (f.get(g2.idx(i, j + 1), 0) - 2.0 * f.get(g2.idx(i, j), 0) + f.get(g2.idx(i, j - 1), 0))
            / (h * h)
    };
    let d12 = |f: &Field, i: usize, j: usize| {
        (f.get(g2.idx(i + 1, j + 1), 0) - f.get(g2.idx(i + 1, j - 1), 0)
            - f.get(g2.idx(i - 1, j + 1), 0)
            + f.get(g2.idx(i - 1, j - 1), 0))
            / (4.0 * h * h)
    };
    let ell = 2.0;
    let (mut r1, mut r2, mut rm) = (0.0f64, 0.0f64, 0.0f64);
    for i in 2..g2.nx - 1 {
        for j in 2..g2.ny - 1 {
            if g2.boundary_distance(i, j) < EQUILIBRIUM_MARGIN {
                continue;
            }
            let (y1, y2) = (g2.coord(i), g2.coord(j));
            let f1 = loads.traction_face_sum(0, y1, y2, t);
            let f2 = loads.traction_face_sum(1, y1, y2, t);
            let p3 = loads.traction_face_sum(2, y1, y2, t);
            let v1 = d1(&res.n1, i, j) + d2(&res.n12, i, j) + f1;
            let v2 = d1(&res.n12, i, j) + d2(&res.n2, i, j) + f2;
            // external moments m_i = (ℓ/2)(P_i⁺ + P_i⁻); their divergence is
            // formed from samples of the load closures
            let dm1 = (loads.traction_face_sum(0, y1 + h, y2, t)
                - loads.traction_face_sum(0, y1 - h, y2, t))
                / (2.0 * h)
                * (ell / 2.0);
            let dm2 = (loads.traction_face_sum(1, y1, y2 + h, t)
                - loads.traction_face_sum(1, y1, y2 - h, t))
                / (2.0 * h)
                * (ell / 2.0);
            let vm = d11(&res.m1, i, j)
                + 2.0 * d12(&res.m12, i, j)
                + d22(&res.m2, i, j)
                + dm1
                + dm2
                + p3;
            let w = h * h;
            r1 += w * v1 * v1;
            r2 += w * v2 * v2;
            rm += w * vm * vm;
        }
    }
    Ok(EquilibriumResiduals {
        force1: r1.sqrt(),
        force2: r2.sqrt(),
        moment: rm.sqrt(),
    })
}

/// Manufactured solutions for the limit-model solvers.
pub mod mms {
    use super::*;
    use crate::limit2d::{BendingPressureSystem, ExtraSources, LimitState, MembraneSystem};
    use crate::loads::{LoadSpec, Ramp};
    use crate::params::DimensionlessParams;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn sinpi(x: f64) -> f64 {
        (PI * x).sin()
    }

    // ---- membrane: w* = (sin²(πy1) sin(2πy2), -sin(2πy1) sin²(πy2)) ------

    pub fn membrane_exact(y1: f64, y2: f64, comp: usize) -> f64 {
        let s1 = sinpi(y1);
        let s2 = sinpi(y2);
        if comp == 0 {
            s1 * s1 * (2.0 * PI * y2).sin()
        } else {
            -(2.0 * PI * y1).sin() * s2 * s2
        }
    }

    /// -Δ w* (the grad-div part vanishes: w* is divergence-free).
    pub fn membrane_source(y1: f64, y2: f64, comp: usize) -> f64 {
        let pp = PI * PI;
        if comp == 0 {
            let s2 = (2.0 * PI * y2).sin();
            -2.0 * pp * (2.0 * PI * y1).cos() * s2 + 4.0 * pp * sinpi(y1).powi(2) * s2
        } else {
            let s1 = (2.0 * PI * y1).sin();
            2.0 * pp * s1 * (2.0 * PI * y2).cos() - 4.0 * pp * s1 * sinpi(y2).powi(2)
        }
    }

    /// Solve the membrane block against the manufactured source and return
    /// the L² error of the in-plane displacement.
    pub fn membrane_error(params: &DimensionlessParams, nx: usize) -> Result<f64> {
        let g2 = Grid2D::new(nx, nx)?;
        let sys = MembraneSystem::new(g2, params)?;
        let zero = LoadSpec::zero();
        let (w01, w02, _pi_m) = sys.solve(&zero, 1.0, Some(&membrane_source))?;
        let exact1 = Field::from_fn2(g2, 1, BcTag::Free, |y1, y2, _| membrane_exact(y1, y2, 0));
        let exact2 = Field::from_fn2(g2, 1, BcTag::Free, |y1, y2, _| membrane_exact(y1, y2, 1));
        let e1 = w01.sub(&exact1)?;
        let e2 = w02.sub(&exact2)?;
        Ok((grid::l2_norm(&e1).powi(2) + grid::l2_norm(&e2).powi(2)).sqrt())
    }

    // ---- bending–pressure ------------------------------------------------

    /// w3* = 16 [y1(1-y1) y2(1-y2)]² r(t)  (clamped on ∂ω)
    /// π_w* = (y3³/3 - y3/3) q(y1,y2) r(t) with q = sin(πy1) sin(πy2):
    /// zero vertical mean, equal end slopes, q vanishing on ∂ω.
    pub struct BendingMms {
        pub ramp: Ramp,
        pub params: DimensionlessParams,
    }

    fn xq(s: f64) -> f64 {
        let t = s * (1.0 - s);
        t * t
    }

    fn xq_dd(s: f64) -> f64 {
        2.0 - 12.0 * s + 12.0 * s * s
    }

    fn zprof(y3: f64) -> f64 {
        y3 * y3 * y3 / 3.0 - y3 / 3.0
    }

    impl BendingMms {
        pub fn w3(&self, y1: f64, y2: f64, t: f64) -> f64 {
            16.0 * xq(y1) * xq(y2) * self.ramp.eval(t)
        }

        pub fn pi_w(&self, y1: f64, y2: f64, y3: f64, t: f64) -> f64 {
            zprof(y3) * sinpi(y1) * sinpi(y2) * self.ramp.eval(t)
        }

        fn lap_w3_shape(y1: f64, y2: f64) -> f64 {
            16.0 * (xq_dd(y1) * xq(y2) + xq(y1) * xq_dd(y2))
        }

        fn bih_w3_shape(y1: f64, y2: f64) -> f64 {
            16.0 * (24.0 * xq(y2) + 2.0 * xq_dd(y1) * xq_dd(y2) + 24.0 * xq(y1))
        }

        /// Manufactured normal flux: U¹ = -∂_{y3} π*|_{y3=±1}.
        pub fn u1(&self, y1: f64, y2: f64, t: f64) -> f64 {
            -(2.0 / 3.0) * sinpi(y1) * sinpi(y2) * self.ramp.eval(t)
        }

        /// Bending source F = a_b Δ²w* + c_c Δ ∫ y3 π* dy3 (no traction load).
        pub fn bending_source(&self, y1: f64, y2: f64, t: f64) -> f64 {
            let a_b = self.params.bending_coeff();
            let c_c = self.params.coupling_coeff();
            // ∫ y3 π* dy3 = -(4/45) q r;  Δ q = -2π² q
            let q = sinpi(y1) * sinpi(y2);
            a_b * Self::bih_w3_shape(y1, y2) * self.ramp.eval(t)
                + c_c * (4.0 / 45.0) * 2.0 * PI * PI * q * self.ramp.eval(t)
        }

        /// Pressure source S = c_p ∂t π* - ∂²_{y3} π* - c_c y3 Δ ∂t w3*.
        pub fn pressure_source(&self, y1: f64, y2: f64, y3: f64, t: f64) -> f64 {
            let c_p = self.params.pressure_capacity();
            let c_c = self.params.coupling_coeff();
            let q = sinpi(y1) * sinpi(y2);
            c_p * zprof(y3) * q * self.ramp.deriv(t) - 2.0 * y3 * q * self.ramp.eval(t)
                - c_c * y3 * Self::lap_w3_shape(y1, y2) * self.ramp.deriv(t)
        }

        /// Loads carrying only the manufactured U¹.
        pub fn loads(&self) -> LoadSpec {
            let mut spec = LoadSpec::zero();
            spec.ramp = self.ramp;
            let ramp = self.ramp;
            spec.flux_u1 = Arc::new(move |y1, y2, t| {
                -(2.0 / 3.0) * sinpi(y1) * sinpi(y2) * ramp.eval(t)
            });
            spec
        }
    }

    /// Final state of the bending–pressure MMS run.
    pub fn bending_final_state(
        params: &DimensionlessParams,
        nx: usize,
        nz: usize,
        t_end: f64,
        nsteps: usize,
    ) -> Result<LimitState> {
        let g3 = Grid3D::new(Grid2D::new(nx, nx)?, nz)?;
        let dt = t_end / nsteps as f64;
        let mms = BendingMms {
            ramp: Ramp::new(0.25 * t_end),
            params: *params,
        };
        let system = BendingPressureSystem::new(g3, params, dt)?;
        let loads = mms.loads();
        let bending = |y1: f64, y2: f64, t: f64| mms.bending_source(y1, y2, t);
        let pressure = |y1: f64, y2: f64, y3: f64, t: f64| mms.pressure_source(y1, y2, y3, t);
        let sources = ExtraSources {
            bending: &bending,
            pressure: &pressure,
        };
        let mut state = LimitState::zero(g3);
        for step in 1..=nsteps {
            let (next, _) = system
                .step(&state, &loads, Some(&sources))
                .map_err(|e| e.at_step(step, step as f64 * dt))?;
            state = next;
        }
        Ok(state)
    }

    /// Temporal-order study at a fixed grid: final-time differences against
    /// a small-dt reference computed on the same grid, which isolates the
    /// time-discretization error from the fixed spatial floor.
    pub fn bending_temporal_errors(
        params: &DimensionlessParams,
        nx: usize,
        nz: usize,
        t_end: f64,
        steps_list: &[usize],
        ref_factor: usize,
    ) -> Result<Vec<f64>> {
        let max_steps = steps_list.iter().copied().max().unwrap_or(8);
        let reference = bending_final_state(params, nx, nz, t_end, max_steps * ref_factor)?;
        let mut errors = Vec::with_capacity(steps_list.len());
        for &ns in steps_list {
            let state = bending_final_state(params, nx, nz, t_end, ns)?;
            let ew = grid::l2_norm(&state.w03.sub(&reference.w03)?);
            let ep = grid::l2_norm(&state.pi_w.sub(&reference.pi_w)?);
            errors.push((ew * ew + ep * ep).sqrt());
        }
        Ok(errors)
    }

    /// Step the bending–pressure system to `t_end` against the manufactured
    /// sources; returns the final-time L² errors (w3, π_w).
    pub fn bending_errors(
        params: &DimensionlessParams,
        nx: usize,
        nz: usize,
        t_end: f64,
        nsteps: usize,
    ) -> Result<(f64, f64)> {
        let g3 = Grid3D::new(Grid2D::new(nx, nx)?, nz)?;
        let mms = BendingMms {
            ramp: Ramp::new(0.25 * t_end),
            params: *params,
        };
        let state = bending_final_state(params, nx, nz, t_end, nsteps)?;
        let t = t_end;
        let w_exact = Field::from_fn2(g3.base, 1, BcTag::Free, |y1, y2, _| mms.w3(y1, y2, t));
        let p_exact = Field::from_fn3(g3, 1, BcTag::Free, |y1, y2, y3, _| mms.pi_w(y1, y2, y3, t));
        let ew = grid::l2_norm(&state.w03.sub(&w_exact)?);
        let ep = grid::l2_norm(&state.pi_w.sub(&p_exact)?);
        Ok((ew, ep))
    }
}
