//! The dimension-reduced poroelastic plate model.
//!
//! Two blocks, solved on the midsurface grid (plus the slab grid for the
//! pressure fluctuation):
//!
//! * **Membrane.** A stationary 2D Navier system for the in-plane
//!   displacements, driven by the face-summed tangential tractions. The
//!   mean pressure is a pointwise linear function of the in-plane
//!   dilatation, so it is eliminated algebraically and the system stays
//!   SPD:
//!
//!   ```text
//!     -Δ w̃ - β ∇ div w̃ = (P̃|⁺ + P̃|⁻)/2,      π_m = -c_m div w̃
//!   ```
//!
//! * **Bending–pressure.** The clamped bending equation coupled to a
//!   pressure fluctuation that diffuses only vertically:
//!
//!   ```text
//!     a_b Δ² w3 + c_c Δ ∫ y3 π_w dy3 = P3|⁺ + P3|⁻ + div (P̃|⁺ + P̃|⁻)
//!     c_p ∂t π_w - ∂²_{y3} π_w - c_c y3 Δ ∂t w3 = 0,   ∂_{y3} π_w|_{y3=±1} = -U¹
//!   ```
//!
//!   Backward Euler in time; one monolithic symmetric system per step, solved
//!   exactly by per-column elimination of the pressure (the vertical operator
//!   has no horizontal coupling) followed by a banded factorization of the
//!   bending Schur complement. Both factorizations are time-independent and
//!   computed once.
//!
//! The vertical direction uses quadratic (P2) Galerkin mass and stiffness on
//! node pairs. With that pairing the conserved linear functional of the
//! pressure equation is exactly the Simpson integral, so the vertical mean of
//! π_w stays at round-off for all times.

use crate::grid::{self, BcTag, DiffOp, Field, Grid2D, Grid3D};
use crate::linsolve::{solve_cg, DirectFactor, SparseMatrix};
use crate::loads::LoadSpec;
use crate::params::DimensionlessParams;
use crate::{Error, Result};

/// Discrete field bundle of the limit model at one time level.
#[derive(Debug, Clone)]
pub struct LimitState {
    pub w01: Field,
    pub w02: Field,
    pub pi_m: Field,
    pub w03: Field,
    pub pi_w: Field,
    pub t: f64,
}

impl LimitState {
    pub fn zero(grid3: Grid3D) -> Self {
        let g2 = grid3.base;
        LimitState {
            w01: Field::zeros2(g2, 1, BcTag::LateralDirichlet),
            w02: Field::zeros2(g2, 1, BcTag::LateralDirichlet),
            pi_m: Field::zeros2(g2, 1, BcTag::Free),
            w03: Field::zeros2(g2, 1, BcTag::Clamped),
            pi_w: Field::zeros3(grid3, 1, BcTag::Free),
            t: 0.0,
        }
    }

    /// Largest |value| over all five fields.
    pub fn max_abs(&self) -> f64 {
        self.w01
            .max_abs()
            .max(self.w02.max_abs())
            .max(self.pi_m.max_abs())
            .max(self.w03.max_abs())
            .max(self.pi_w.max_abs())
    }

    /// Worst column value of |(1/2)∫ π_w dy3| (Simpson).
    pub fn pi_w_mean_defect(&self) -> f64 {
        let mean = grid::moment_integrals(&self.pi_w, 0).expect("pi_w is a 3D scalar");
        0.5 * mean.max_abs()
    }
}

/// Per-step energy bookkeeping of the bending–pressure block.
#[derive(Debug, Clone, Copy)]
pub struct EnergyReport {
    pub t: f64,
    pub plate_energy: f64,
    pub pressure_energy: f64,
    pub vertical_dissipation: f64,
    pub numerical_dissipation: f64,
    pub external_work: f64,
    /// |ΔE + dissipation - work|, absolute.
    pub closure_residual: f64,
    /// Scale used for relative closure checks.
    pub energy_scale: f64,
    /// Bending-side coupling term ∫ y3 c_c π Δ ∂t w.
    pub coupling_bending: f64,
    /// Pressure-side coupling term, its exact negative.
    pub coupling_pressure: f64,
}

/// Extra volumetric sources (manufactured-solution studies).
pub struct ExtraSources<'a> {
    /// Added to the bending right-hand side, (y1, y2, t).
    pub bending: &'a dyn Fn(f64, f64, f64) -> f64,
    /// Added to the pressure equation, (y1, y2, y3, t).
    pub pressure: &'a dyn Fn(f64, f64, f64, f64) -> f64,
}

/// Time discretization of the pressure evolution. Backward Euler is the
/// default (the ramped data favor a dissipative scheme); Crank-Nicolson is
/// available as a configuration choice and carries no acceptance weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimeScheme {
    #[default]
    BackwardEuler,
    CrankNicolson,
}

impl TimeScheme {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "backward-euler" => Ok(TimeScheme::BackwardEuler),
            "crank-nicolson" => Ok(TimeScheme::CrankNicolson),
            other => Err(Error::Param {
                name: "time.scheme",
                msg: format!("unknown scheme `{other}` (expected backward-euler|crank-nicolson)"),
            }),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TimeScheme::BackwardEuler => "backward-euler",
            TimeScheme::CrankNicolson => "crank-nicolson",
        }
    }

    fn theta(&self) -> f64 {
        match self {
            TimeScheme::BackwardEuler => 1.0,
            TimeScheme::CrankNicolson => 0.5,
        }
    }
}

// ---------------------------------------------------------------------------
// interior-node indexing
// ---------------------------------------------------------------------------

/// Map between full 2D nodes and the interior-only dof vector.
#[derive(Debug, Clone, Copy)]
pub struct Interior2D {
    grid: Grid2D,
}

impl Interior2D {
    pub fn new(grid: Grid2D) -> Self {
        Interior2D { grid }
    }

    pub fn ndof(&self) -> usize {
        (self.grid.nx - 1) * (self.grid.ny - 1)
    }

    #[inline]
    pub fn dof(&self, i: usize, j: usize) -> usize {
        debug_assert!(i >= 1 && i < self.grid.nx && j >= 1 && j < self.grid.ny);
        (i - 1) * (self.grid.ny - 1) + (j - 1)
    }

    pub fn scatter(&self, dofs: &[f64], bc: BcTag) -> Field {
        let mut f = Field::zeros2(self.grid, 1, bc);
        for i in 1..self.grid.nx {
            for j in 1..self.grid.ny {
                f.set(self.grid.idx(i, j), 0, dofs[self.dof(i, j)]);
            }
        }
        f
    }

    pub fn gather(&self, f: &Field) -> Vec<f64> {
        let mut out = vec![0.0; self.ndof()];
        for i in 1..self.grid.nx {
            for j in 1..self.grid.ny {
                out[self.dof(i, j)] = f.get(self.grid.idx(i, j), 0);
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// membrane block
// ---------------------------------------------------------------------------

/// Stationary membrane system with the mean pressure eliminated.
pub struct MembraneSystem {
    pub grid: Grid2D,
    pub params: DimensionlessParams,
    map: Interior2D,
    matrix: SparseMatrix,
}

impl MembraneSystem {
    pub fn new(grid: Grid2D, params: &DimensionlessParams) -> Result<Self> {
        params.validate()?;
        let map = Interior2D::new(grid);
        let matrix = membrane_matrix(grid, params.membrane_graddiv_coeff());
        Ok(MembraneSystem {
            grid,
            params: *params,
            map,
            matrix,
        })
    }

    /// Solve for the given interior right-hand side (2 components per node,
    /// interleaved). Returns the interior dof vector.
    pub fn solve_rhs(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let (x, _iters) = solve_cg(&self.matrix, rhs, 1e-10, 200_000)?;
        Ok(x)
    }

    /// Solve the membrane block at time `t` for the scenario loads and an
    /// optional extra source; returns (w01, w02, pi_m).
    pub fn solve(
        &self,
        loads: &LoadSpec,
        t: f64,
        extra: Option<&dyn Fn(f64, f64, usize) -> f64>,
    ) -> Result<(Field, Field, Field)> {
        let g = self.grid;
        let mut rhs = vec![0.0; 2 * self.map.ndof()];
        for i in 1..g.nx {
            for j in 1..g.ny {
                let (y1, y2) = (g.coord(i), g.coord(j));
                let q = self.map.dof(i, j);
                for c in 0..2 {
                    let mut v = 0.5 * loads.traction_face_sum(c, y1, y2, t);
                    if let Some(f) = extra {
                        v += f(y1, y2, c);
                    }
                    rhs[2 * q + c] = v;
                }
            }
        }
        let x = self.solve_rhs(&rhs)?;
        let mut w01 = Field::zeros2(g, 1, BcTag::LateralDirichlet);
        let mut w02 = Field::zeros2(g, 1, BcTag::LateralDirichlet);
        for i in 1..g.nx {
            for j in 1..g.ny {
                let q = self.map.dof(i, j);
                w01.set(g.idx(i, j), 0, x[2 * q]);
                w02.set(g.idx(i, j), 0, x[2 * q + 1]);
            }
        }
        let pi_m = mean_pressure(&w01, &w02, &self.params)?;
        Ok((w01, w02, pi_m))
    }
}

/// Mean pressure from the in-plane dilatation: `π_m = -c_m div w̃`.
pub fn mean_pressure(w01: &Field, w02: &Field, params: &DimensionlessParams) -> Result<Field> {
    let g = w01.grid2()?;
    let mut pair = Field::zeros2(g, 2, BcTag::LateralDirichlet);
    for node in 0..g.n_nodes() {
        pair.set(node, 0, w01.get(node, 0));
        pair.set(node, 1, w02.get(node, 0));
    }
    let mut div = grid::apply_diff(&pair, DiffOp::Div2)?;
    div.scale(-params.mean_pressure_coeff());
    Ok(div)
}

/// Assemble `-Δ - β ∇div` on interior nodes (strong-form rows, symmetric SPD).
fn membrane_matrix(g: Grid2D, beta: f64) -> SparseMatrix {
    let map = Interior2D::new(g);
    let n = map.ndof();
    let h = g.h();
    let inv_h2 = 1.0 / (h * h);
    let inv_2h = 1.0 / (2.0 * h);
    let mut t: Vec<(usize, usize, f64)> = Vec::new();
    let interior = |i: usize, j: usize| i >= 1 && i < g.nx && j >= 1 && j < g.ny;

    for i in 1..g.nx {
        for j in 1..g.ny {
            let q = map.dof(i, j);
            for c in 0..2 {
                t.push((2 * q + c, 2 * q + c, 4.0 * inv_h2));
                for (di, dj) in [(1isize, 0isize), (-1, 0), (0, 1), (0, -1)] {
                    let (ni, nj) = ((i as isize + di) as usize, (j as isize + dj) as usize);
                    if interior(ni, nj) {
                        t.push((2 * q + c, 2 * map.dof(ni, nj) + c, -inv_h2));
                    }
                }
            }
            // div row at (i, j): ±w1(i±1,j)/2h ± w2(i,j±1)/2h
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(4);
            if interior(i + 1, j) {
                row.push((2 * map.dof(i + 1, j), inv_2h));
            }
            if i >= 2 {
                row.push((2 * map.dof(i - 1, j), -inv_2h));
            }
            if interior(i, j + 1) {
                row.push((2 * map.dof(i, j + 1) + 1, inv_2h));
            }
            if j >= 2 {
                row.push((2 * map.dof(i, j - 1) + 1, -inv_2h));
            }
            for &(a, va) in &row {
                for &(b, vb) in &row {
                    t.push((a, b, beta * va * vb));
                }
            }
        }
    }
    SparseMatrix::from_triplets(2 * n, &t, true)
}

// ---------------------------------------------------------------------------
// clamped-plate operators
// ---------------------------------------------------------------------------

/// 13-point clamped biharmonic on interior dofs, ghost nodes reflected.
pub fn biharmonic_matrix(g: Grid2D) -> SparseMatrix {
    let map = Interior2D::new(g);
    let n = map.ndof();
    let inv_h4 = 1.0 / g.h().powi(4);
    let stencil: [(isize, isize, f64); 13] = [
        (0, 0, 20.0),
        (1, 0, -8.0),
        (-1, 0, -8.0),
        (0, 1, -8.0),
        (0, -1, -8.0),
        (1, 1, 2.0),
        (1, -1, 2.0),
        (-1, 1, 2.0),
        (-1, -1, 2.0),
        (2, 0, 1.0),
        (-2, 0, 1.0),
        (0, 2, 1.0),
        (0, -2, 1.0),
    ];
    let mut t: Vec<(usize, usize, f64)> = Vec::new();
    let nxi = g.nx as isize;
    let nyi = g.ny as isize;
    for i in 1..g.nx {
        for j in 1..g.ny {
            let q = map.dof(i, j);
            for &(di, dj, c) in &stencil {
                let mut ni = i as isize + di;
                let mut nj = j as isize + dj;
                // reflect ghosts across the clamped boundary
                if ni < 0 {
                    ni = -ni;
                }
                if ni > nxi {
                    ni = 2 * nxi - ni;
                }
                if nj < 0 {
                    nj = -nj;
                }
                if nj > nyi {
                    nj = 2 * nyi - nj;
                }
                let (ni, nj) = (ni as usize, nj as usize);
                if ni >= 1 && ni < g.nx && nj >= 1 && nj < g.ny {
                    t.push((q, map.dof(ni, nj), c * inv_h4));
                }
            }
        }
    }
    SparseMatrix::from_triplets(n, &t, true)
}

/// Horizontal Laplacian of a clamped interior field, evaluated at *all*
/// nodes: the standard 5-point stencil inside ω and the one-sided
/// second-order normal closure `(8 w₁ - w₂)/(2h²)` on ∂ω (zero at corners,
/// where both tangential second derivatives vanish).
pub struct LambdaOp {
    grid: Grid2D,
    map: Interior2D,
    /// rows[node] = list of (interior dof, coefficient)
    rows: Vec<Vec<(usize, f64)>>,
}

impl LambdaOp {
    pub fn new(g: Grid2D) -> Self {
        let map = Interior2D::new(g);
        let inv_h2 = 1.0 / (g.h() * g.h());
        let interior = |i: usize, j: usize| i >= 1 && i < g.nx && j >= 1 && j < g.ny;
        let mut rows = vec![Vec::new(); g.n_nodes()];
        for i in 0..=g.nx {
            for j in 0..=g.ny {
                let node = g.idx(i, j);
                let row = &mut rows[node];
                let on_i = i == 0 || i == g.nx;
                let on_j = j == 0 || j == g.ny;
                if on_i && on_j {
                    continue; // corner: Laplacian vanishes on the clamped boundary
                } else if on_i {
                    let (i1, i2) = if i == 0 { (1, 2) } else { (g.nx - 1, g.nx - 2) };
                    row.push((map.dof(i1, j), 4.0 * inv_h2));
                    row.push((map.dof(i2, j), -0.5 * inv_h2));
                } else if on_j {
                    let (j1, j2) = if j == 0 { (1, 2) } else { (g.ny - 1, g.ny - 2) };
                    row.push((map.dof(i, j1), 4.0 * inv_h2));
                    row.push((map.dof(i, j2), -0.5 * inv_h2));
                } else {
                    row.push((map.dof(i, j), -4.0 * inv_h2));
                    for (di, dj) in [(1isize, 0isize), (-1, 0), (0, 1), (0, -1)] {
                        let (ni, nj) = ((i as isize + di) as usize, (j as isize + dj) as usize);
                        if interior(ni, nj) {
                            row.push((map.dof(ni, nj), inv_h2));
                        }
                    }
                }
            }
        }
        LambdaOp { grid: g, map, rows }
    }

    /// Λ w: interior dofs -> all-node Laplacian values.
    pub fn apply(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.n_nodes()];
        for (node, row) in self.rows.iter().enumerate() {
            let mut acc = 0.0;
            for &(dof, c) in row {
                acc += c * w[dof];
            }
            out[node] = acc;
        }
        out
    }

    /// Λᵀ m: all-node field -> interior dofs.
    pub fn adjoint(&self, m: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.map.ndof()];
        for (node, row) in self.rows.iter().enumerate() {
            let v = m[node];
            if v != 0.0 {
                for &(dof, c) in row {
                    out[dof] += c * v;
                }
            }
        }
        out
    }

    /// Triplets of Λᵀ diag(weights) Λ on interior dofs.
    fn weighted_gram(&self, weights: &[f64]) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::new();
        for (node, row) in self.rows.iter().enumerate() {
            let w = weights[node];
            if w == 0.0 {
                continue;
            }
            for &(a, va) in row {
                for &(b, vb) in row {
                    t.push((a, b, w * va * vb));
                }
            }
        }
        t
    }
}

// ---------------------------------------------------------------------------
// vertical (y3) quadratic Galerkin operators
// ---------------------------------------------------------------------------

/// P2 mass and stiffness on the vertical node line, plus the factorized
/// per-column pressure operator `S_P = c_p M3 + dt K3`.
pub struct Vertical {
    pub nz: usize,
    pub m3: SparseMatrix,
    pub k3: SparseMatrix,
    sp: DirectFactor,
    /// g = M3 · y3  (equals the Simpson-weighted node heights).
    pub g_mom: Vec<f64>,
    /// S_P⁻¹ g.
    pub spg: Vec<f64>,
    /// s = gᵀ S_P⁻¹ g.
    pub s_scalar: f64,
}

impl Vertical {
    pub fn new(grid3: Grid3D, c_p: f64, dt: f64) -> Result<Self> {
        Self::with_theta(grid3, c_p, dt, 1.0)
    }

    /// θ-scheme variant: factors `S_P = c_p M3 + θ dt K3`.
    pub fn with_theta(grid3: Grid3D, c_p: f64, dt: f64, theta: f64) -> Result<Self> {
        let nz = grid3.nz;
        let hz = grid3.hz();
        let hh = 2.0 * hz; // element length (one Simpson pair)
        let mut tm: Vec<(usize, usize, f64)> = Vec::new();
        let mut tk: Vec<(usize, usize, f64)> = Vec::new();
        let me = [[4.0, 2.0, -1.0], [2.0, 16.0, 2.0], [-1.0, 2.0, 4.0]];
        let ke = [[7.0, -8.0, 1.0], [-8.0, 16.0, -8.0], [1.0, -8.0, 7.0]];
        let mut e = 0;
        while e + 2 <= nz {
            for a in 0..3 {
                for b in 0..3 {
                    tm.push((e + a, e + b, me[a][b] * hh / 30.0));
                    tk.push((e + a, e + b, ke[a][b] / (3.0 * hh)));
                }
            }
            e += 2;
        }
        let m3 = SparseMatrix::from_triplets(nz + 1, &tm, true);
        let k3 = SparseMatrix::from_triplets(nz + 1, &tk, true);

        let mut tsp = Vec::new();
        for r in 0..=nz {
            for p in m3.indptr[r]..m3.indptr[r + 1] {
                tsp.push((r, m3.indices[p], c_p * m3.values[p]));
            }
            for p in k3.indptr[r]..k3.indptr[r + 1] {
                tsp.push((r, k3.indices[p], theta * dt * k3.values[p]));
            }
        }
        let sp_mat = SparseMatrix::from_triplets(nz + 1, &tsp, true);
        let sp = DirectFactor::new(&sp_mat)?;

        let y3: Vec<f64> = (0..=nz).map(|k| grid3.y3(k)).collect();
        let mut g_mom = vec![0.0; nz + 1];
        m3.matvec(&y3, &mut g_mom);
        let spg = sp.solve(&g_mom);
        let s_scalar = g_mom.iter().zip(&spg).map(|(a, b)| a * b).sum();
        Ok(Vertical {
            nz,
            m3,
            k3,
            sp,
            g_mom,
            spg,
            s_scalar,
        })
    }

    pub fn solve_sp(&self, rhs: &[f64]) -> Vec<f64> {
        self.sp.solve(rhs)
    }
}

// ---------------------------------------------------------------------------
// bending–pressure block
// ---------------------------------------------------------------------------

/// Monolithic backward-Euler stepper for (w3, π_w); the pressure is
/// eliminated column by column and the bending Schur complement is
/// factored once.
pub struct BendingPressureSystem {
    pub grid3: Grid3D,
    pub params: DimensionlessParams,
    pub dt: f64,
    pub scheme: TimeScheme,
    map: Interior2D,
    lambda: LambdaOp,
    vertical: Vertical,
    bih: SparseMatrix,
    schur_factor: DirectFactor,
    /// Trapezoid column weights τ(i,j) ∈ {1/4, 1/2, 1}.
    tau: Vec<f64>,
}

impl BendingPressureSystem {
    pub fn new(grid3: Grid3D, params: &DimensionlessParams, dt: f64) -> Result<Self> {
        Self::with_scheme(grid3, params, dt, TimeScheme::BackwardEuler)
    }

    pub fn with_scheme(
        grid3: Grid3D,
        params: &DimensionlessParams,
        dt: f64,
        scheme: TimeScheme,
    ) -> Result<Self> {
        params.validate()?;
        if !(dt > 0.0) {
            return Err(Error::Param {
                name: "dt",
                msg: format!("time step must be positive, got {dt}"),
            });
        }
        let g2 = grid3.base;
        let map = Interior2D::new(g2);
        let lambda = LambdaOp::new(g2);
        let vertical =
            Vertical::with_theta(grid3, params.pressure_capacity(), dt, scheme.theta())?;
        let bih = biharmonic_matrix(g2);

        let h2 = g2.h() * g2.h();
        let mut tau = vec![0.0; g2.n_nodes()];
        for i in 0..=g2.nx {
            for j in 0..=g2.ny {
                tau[g2.idx(i, j)] = g2.trap_weight(i, j) / h2;
            }
        }

        let a_b = params.bending_coeff();
        let c_c = params.coupling_coeff();
        let mut t: Vec<(usize, usize, f64)> = Vec::new();
        for r in 0..bih.n {
            for p in bih.indptr[r]..bih.indptr[r + 1] {
                t.push((r, bih.indices[p], a_b * bih.values[p]));
            }
        }
        let w_coeff = c_c * c_c * vertical.s_scalar;
        for (a, b, v) in lambda.weighted_gram(&tau) {
            t.push((a, b, w_coeff * v));
        }
        let schur = SparseMatrix::from_triplets(bih.n, &t, true);
        let schur_factor = DirectFactor::new(&schur)?;

        Ok(BendingPressureSystem {
            grid3,
            params: *params,
            dt,
            scheme,
            map,
            lambda,
            vertical,
            bih,
            schur_factor,
            tau,
        })
    }

    pub fn lambda(&self) -> &LambdaOp {
        &self.lambda
    }

    pub fn vertical(&self) -> &Vertical {
        &self.vertical
    }

    /// Bending load at time t: face-summed P3 plus the divergence of the
    /// face-summed tangential tractions, sampled at interior nodes.
    fn bending_load(&self, loads: &LoadSpec, sources: Option<&ExtraSources>, t: f64) -> Vec<f64> {
        let g = self.grid3.base;
        let ptan = Field::from_fn2(g, 2, BcTag::Free, |y1, y2, c| {
            loads.traction_face_sum(c, y1, y2, t)
        });
        let div_tan = grid::apply_diff(&ptan, DiffOp::Div2).expect("2-component field");
        let mut f = vec![0.0; self.map.ndof()];
        for i in 1..g.nx {
            for j in 1..g.ny {
                let (y1, y2) = (g.coord(i), g.coord(j));
                let mut v = loads.traction_face_sum(2, y1, y2, t) + div_tan.get(g.idx(i, j), 0);
                if let Some(src) = sources {
                    v += (src.bending)(y1, y2, t);
                }
                f[self.map.dof(i, j)] = v;
            }
        }
        f
    }

    /// Per-column pressure load `ℓ + M3 S` at time t: Neumann end loads
    /// from U¹ and the optional volumetric source.
    fn pressure_load(
        &self,
        loads: &LoadSpec,
        sources: Option<&ExtraSources>,
        t: f64,
        i: usize,
        j: usize,
    ) -> Vec<f64> {
        let g3 = self.grid3;
        let nz = g3.nz;
        let (y1, y2) = (g3.base.coord(i), g3.base.coord(j));
        let mut b = vec![0.0; nz + 1];
        let u1 = (loads.flux_u1)(y1, y2, t);
        b[nz] -= u1;
        b[0] += u1;
        if let Some(src) = sources {
            let svals: Vec<f64> = (0..=nz).map(|k| (src.pressure)(y1, y2, g3.y3(k), t)).collect();
            let mut ms = vec![0.0; nz + 1];
            self.vertical.m3.matvec(&svals, &mut ms);
            for k in 0..=nz {
                b[k] += ms[k];
            }
        }
        b
    }

    /// One backward-Euler step to time `state.t + dt`.
    pub fn step(
        &self,
        state: &LimitState,
        loads: &LoadSpec,
        sources: Option<&ExtraSources>,
    ) -> Result<(LimitState, EnergyReport)> {
        let g3 = self.grid3;
        let g2 = g3.base;
        let nz = g3.nz;
        let t_old = state.t;
        let t_new = state.t + self.dt;
        let c_p = self.params.pressure_capacity();
        let c_c = self.params.coupling_coeff();
        let theta = self.scheme.theta();

        let w_old = self.map.gather(&state.w03);
        let lam_w_old = self.lambda.apply(&w_old);

        // Per-column elimination: P^{n+1} = known + c_c (Λ ΔW) S_P⁻¹ g.
        let mut known = vec![0.0; g2.n_nodes() * (nz + 1)];
        let mut mom_known = vec![0.0; g2.n_nodes()];
        for i in 0..=g2.nx {
            for j in 0..=g2.ny {
                let node = g2.idx(i, j);
                let b_new = self.pressure_load(loads, sources, t_new, i, j);
                let mut rhs: Vec<f64> = b_new.iter().map(|v| theta * self.dt * v).collect();
                if theta < 1.0 {
                    let b_old = self.pressure_load(loads, sources, t_old, i, j);
                    for k in 0..=nz {
                        rhs[k] += (1.0 - theta) * self.dt * b_old[k];
                    }
                }
                let pcol: Vec<f64> =
                    (0..=nz).map(|k| state.pi_w.get(g3.idx(i, j, k), 0)).collect();
                let mut mp = vec![0.0; nz + 1];
                self.vertical.m3.matvec(&pcol, &mut mp);
                for k in 0..=nz {
                    rhs[k] += c_p * mp[k];
                }
                if theta < 1.0 {
                    let mut kp = vec![0.0; nz + 1];
                    self.vertical.k3.matvec(&pcol, &mut kp);
                    for k in 0..=nz {
                        rhs[k] -= (1.0 - theta) * self.dt * kp[k];
                    }
                }
                let kcol = self.vertical.solve_sp(&rhs);
                let mut mom = 0.0;
                for k in 0..=nz {
                    known[node * (nz + 1) + k] = kcol[k];
                    mom += self.vertical.g_mom[k] * kcol[k];
                }
                mom_known[node] = mom - c_c * self.vertical.s_scalar * lam_w_old[node];
            }
        }

        // Bending Schur solve.
        let f_load = self.bending_load(loads, sources, t_new);
        let mut tau_mom = vec![0.0; g2.n_nodes()];
        for n in 0..g2.n_nodes() {
            tau_mom[n] = self.tau[n] * mom_known[n];
        }
        let corr = self.lambda.adjoint(&tau_mom);
        let mut rhs_w = f_load;
        for q in 0..rhs_w.len() {
            rhs_w[q] -= c_c * corr[q];
        }
        let w_new = self.schur_factor.solve(&rhs_w);

        // Recover the pressure.
        let lam_w_new = self.lambda.apply(&w_new);
        let mut pi_new = Field::zeros3(g3, 1, BcTag::Free);
        for i in 0..=g2.nx {
            for j in 0..=g2.ny {
                let node = g2.idx(i, j);
                let dl = c_c * (lam_w_new[node] - lam_w_old[node]);
                for k in 0..=nz {
                    pi_new.set(
                        g3.idx(i, j, k),
                        0,
                        known[node * (nz + 1) + k] + dl * self.vertical.spg[k],
                    );
                }
            }
        }

        // Column-mean drift check (flags a discretization bug).
        let scale = pi_new.max_abs().max(1.0);
        let mut new_state = state.clone();
        new_state.w03 = self.map.scatter(&w_new, BcTag::Clamped);
        new_state.pi_w = pi_new;
        new_state.t = t_new;
        new_state.w03.assert_finite("w03")?;
        new_state.pi_w.assert_finite("pi_w")?;
        let defect = new_state.pi_w_mean_defect();
        if defect > 1e-12 * scale {
            return Err(Error::Grid(format!(
                "vertical mean of pi_w drifted to {defect:.3e} (scale {scale:.3e})"
            )));
        }

        // Energy audit of the step.
        let report = self.audit_step(state, &new_state, loads, sources)?;
        Ok((new_state, report))
    }

    /// Reconstruct the discrete energy balance of a completed step.
    ///
    /// For backward Euler the step equations are tested with the increment
    /// (bending) and the end-of-step pressure, which produces the
    /// nonnegative increment quadratic form as numerical dissipation. For
    /// Crank-Nicolson the tests use the midpoint averages and the balance
    /// closes with zero numerical dissipation. In both cases the two
    /// coupling terms are assembled independently and cancel to round-off.
    pub fn audit_step(
        &self,
        old: &LimitState,
        new: &LimitState,
        loads: &LoadSpec,
        sources: Option<&ExtraSources>,
    ) -> Result<EnergyReport> {
        let g3 = self.grid3;
        let g2 = g3.base;
        let nz = g3.nz;
        let c_p = self.params.pressure_capacity();
        let c_c = self.params.coupling_coeff();
        let a_b = self.params.bending_coeff();
        let h2 = g2.h() * g2.h();
        let t_old = old.t;
        let t_new = new.t;
        let cn = self.scheme == TimeScheme::CrankNicolson;

        let w_old = self.map.gather(&old.w03);
        let w_new = self.map.gather(&new.w03);
        let dw: Vec<f64> = w_new.iter().zip(&w_old).map(|(a, b)| a - b).collect();

        let quad_b = |u: &[f64], v: &[f64]| -> f64 {
            let mut bu = vec![0.0; u.len()];
            self.bih.matvec(u, &mut bu);
            h2 * a_b * bu.iter().zip(v).map(|(x, y)| x * y).sum::<f64>()
        };
        let plate_new = 0.5 * quad_b(&w_new, &w_new);
        let plate_old = 0.5 * quad_b(&w_old, &w_old);
        let numdiss_b = if cn { 0.0 } else { 0.5 * quad_b(&dw, &dw) };

        // column loops for the pressure quadratic forms
        let mut pres_new = 0.0;
        let mut pres_old = 0.0;
        let mut numdiss_p = 0.0;
        let mut vert_diss = 0.0;
        let mut work_p = 0.0;
        // pressure test function per column: P^{n+1} (BE) or the midpoint (CN)
        let mut mom_test = vec![0.0; g2.n_nodes()];
        for i in 0..=g2.nx {
            for j in 0..=g2.ny {
                let node = g2.idx(i, j);
                let tw = self.tau[node] * h2;
                let p_old: Vec<f64> =
                    (0..=nz).map(|k| old.pi_w.get(g3.idx(i, j, k), 0)).collect();
                let p_new: Vec<f64> =
                    (0..=nz).map(|k| new.pi_w.get(g3.idx(i, j, k), 0)).collect();
                let p_test: Vec<f64> = if cn {
                    p_new.iter().zip(&p_old).map(|(a, b)| 0.5 * (a + b)).collect()
                } else {
                    p_new.clone()
                };
                let dp: Vec<f64> = p_new.iter().zip(&p_old).map(|(a, b)| a - b).collect();
                let mut tmp = vec![0.0; nz + 1];
                self.vertical.m3.matvec(&p_new, &mut tmp);
                pres_new += 0.5 * c_p * tw * dot(&tmp, &p_new);
                self.vertical.m3.matvec(&p_test, &mut tmp);
                mom_test[node] = (0..=nz).map(|k| g3.y3(k) * tmp[k]).sum::<f64>();
                self.vertical.m3.matvec(&p_old, &mut tmp);
                pres_old += 0.5 * c_p * tw * dot(&tmp, &p_old);
                if !cn {
                    self.vertical.m3.matvec(&dp, &mut tmp);
                    numdiss_p += 0.5 * c_p * tw * dot(&tmp, &dp);
                }
                self.vertical.k3.matvec(&p_test, &mut tmp);
                vert_diss += self.dt * tw * dot(&tmp, &p_test);
                let b = if cn {
                    let bn = self.pressure_load(loads, sources, t_new, i, j);
                    let bo = self.pressure_load(loads, sources, t_old, i, j);
                    bn.iter().zip(&bo).map(|(a, c)| 0.5 * (a + c)).collect::<Vec<f64>>()
                } else {
                    self.pressure_load(loads, sources, t_new, i, j)
                };
                work_p += self.dt * tw * dot(&b, &p_test);
            }
        }

        let f_load = if cn {
            let fn_ = self.bending_load(loads, sources, t_new);
            let fo = self.bending_load(loads, sources, t_old);
            fn_.iter().zip(&fo).map(|(a, b)| 0.5 * (a + b)).collect::<Vec<f64>>()
        } else {
            self.bending_load(loads, sources, t_new)
        };
        let work_b = h2 * dot(&f_load, &dw);
        let external_work = work_b + work_p;

        // Coupling terms, formed independently on both sides of the identity.
        let lam_dw = self.lambda.apply(&dw);
        let mut tau_mom = vec![0.0; g2.n_nodes()];
        for n in 0..g2.n_nodes() {
            tau_mom[n] = self.tau[n] * mom_test[n];
        }
        let adj = self.lambda.adjoint(&tau_mom);
        let coupling_bending = c_c * h2 * dot(&adj, &dw);
        let mut coupling_pressure = 0.0;
        for n in 0..g2.n_nodes() {
            coupling_pressure -= c_c * h2 * self.tau[n] * lam_dw[n] * mom_test[n];
        }

        let delta_e = (plate_new - plate_old) + (pres_new - pres_old);
        let numerical_dissipation = numdiss_b + numdiss_p;
        let closure_residual = (delta_e + numerical_dissipation + vert_diss - external_work).abs();
        let energy_scale = plate_new
            .abs()
            .max(pres_new.abs())
            .max(vert_diss.abs())
            .max(external_work.abs())
            .max(numerical_dissipation.abs());
        Ok(EnergyReport {
            t: t_new,
            plate_energy: plate_new,
            pressure_energy: pres_new,
            vertical_dissipation: vert_diss,
            numerical_dissipation,
            external_work,
            closure_residual,
            energy_scale,
            coupling_bending,
            coupling_pressure,
        })
    }

    /// Residuals of the monolithic equations for a solved step (testing aid).
    pub fn step_residual(
        &self,
        old: &LimitState,
        new: &LimitState,
        loads: &LoadSpec,
        sources: Option<&ExtraSources>,
    ) -> Result<f64> {
        let g3 = self.grid3;
        let g2 = g3.base;
        let nz = g3.nz;
        let c_p = self.params.pressure_capacity();
        let c_c = self.params.coupling_coeff();
        let a_b = self.params.bending_coeff();
        let theta = self.scheme.theta();
        let t_old = old.t;
        let t_new = new.t;

        let w_old = self.map.gather(&old.w03);
        let w_new = self.map.gather(&new.w03);
        let dw: Vec<f64> = w_new.iter().zip(&w_old).map(|(a, b)| a - b).collect();
        let lam_dw = self.lambda.apply(&dw);

        let mut worst = 0.0f64;
        // pressure rows
        for i in 0..=g2.nx {
            for j in 0..=g2.ny {
                let node = g2.idx(i, j);
                let p_old: Vec<f64> =
                    (0..=nz).map(|k| old.pi_w.get(g3.idx(i, j, k), 0)).collect();
                let p_new: Vec<f64> =
                    (0..=nz).map(|k| new.pi_w.get(g3.idx(i, j, k), 0)).collect();
                let p_theta: Vec<f64> = p_new
                    .iter()
                    .zip(&p_old)
                    .map(|(a, b)| theta * a + (1.0 - theta) * b)
                    .collect();
                let dp: Vec<f64> = p_new.iter().zip(&p_old).map(|(a, b)| a - b).collect();
                let mut mdp = vec![0.0; nz + 1];
                self.vertical.m3.matvec(&dp, &mut mdp);
                let mut kp = vec![0.0; nz + 1];
                self.vertical.k3.matvec(&p_theta, &mut kp);
                let bn = self.pressure_load(loads, sources, t_new, i, j);
                let bo = self.pressure_load(loads, sources, t_old, i, j);
                for k in 0..=nz {
                    let b = theta * bn[k] + (1.0 - theta) * bo[k];
                    let r = c_p * mdp[k] + self.dt * kp[k]
                        - c_c * self.vertical.g_mom[k] * lam_dw[node]
                        - self.dt * b;
                    worst = worst.max(r.abs());
                }
            }
        }
        // bending rows
        let mut bw = vec![0.0; w_new.len()];
        self.bih.matvec(&w_new, &mut bw);
        let mut mom = vec![0.0; g2.n_nodes()];
        for i in 0..=g2.nx {
            for j in 0..=g2.ny {
                let node = g2.idx(i, j);
                let pcol: Vec<f64> =
                    (0..=nz).map(|k| new.pi_w.get(g3.idx(i, j, k), 0)).collect();
                mom[node] = self.tau[node]
                    * self
                        .vertical
                        .g_mom
                        .iter()
                        .zip(&pcol)
                        .map(|(a, b)| a * b)
                        .sum::<f64>();
            }
        }
        let adj = self.lambda.adjoint(&mom);
        let f_load = self.bending_load(loads, sources, t_new);
        for q in 0..w_new.len() {
            let r = a_b * bw[q] + c_c * adj[q] - f_load[q];
            worst = worst.max(r.abs());
        }
        Ok(worst)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// ---------------------------------------------------------------------------
// trajectory driver
// ---------------------------------------------------------------------------

/// Full trajectory of the limit model with its energy audit.
#[derive(Debug)]
pub struct LimitTrajectory {
    pub states: Vec<LimitState>,
    pub reports: Vec<EnergyReport>,
    pub dt: f64,
}

/// Run the complete limit model: the membrane block is stationary and
/// re-solved at every output time; bending–pressure is stepped with
/// backward Euler at fixed dt.
pub fn run_limit(
    params: &DimensionlessParams,
    grid3: Grid3D,
    loads: &LoadSpec,
    t_end: f64,
    nsteps: usize,
    sources: Option<&ExtraSources>,
) -> Result<LimitTrajectory> {
    run_limit_with_scheme(params, grid3, loads, t_end, nsteps, sources, TimeScheme::BackwardEuler)
}

/// `run_limit` with an explicit time scheme for the pressure evolution.
pub fn run_limit_with_scheme(
    params: &DimensionlessParams,
    grid3: Grid3D,
    loads: &LoadSpec,
    t_end: f64,
    nsteps: usize,
    sources: Option<&ExtraSources>,
    scheme: TimeScheme,
) -> Result<LimitTrajectory> {
    let dt = t_end / nsteps as f64;
    let membrane = MembraneSystem::new(grid3.base, params)?;
    let bending = BendingPressureSystem::with_scheme(grid3, params, dt, scheme)?;

    let mut states = Vec::with_capacity(nsteps + 1);
    let mut reports = Vec::with_capacity(nsteps);
    states.push(LimitState::zero(grid3));
    for step in 1..=nsteps {
        let prev = states.last().unwrap();
        let t_new = step as f64 * dt;
        let (mut st, report) = bending
            .step(prev, loads, sources)
            .map_err(|e| e.at_step(step, t_new))?;
        let (w01, w02, pi_m) = membrane
            .solve(loads, t_new, None)
            .map_err(|e| e.at_step(step, t_new))?;
        st.w01 = w01;
        st.w02 = w02;
        st.pi_m = pi_m;
        st.t = t_new;
        reports.push(report);
        states.push(st);
    }
    Ok(LimitTrajectory { states, reports, dt })
}

/// Recompute the per-step energy reports of a trajectory.
pub fn energy_audit(
    params: &DimensionlessParams,
    traj: &LimitTrajectory,
    loads: &LoadSpec,
    sources: Option<&ExtraSources>,
) -> Result<Vec<EnergyReport>> {
    if traj.states.len() < 2 {
        return Err(Error::Shape("energy audit needs at least two states".into()));
    }
    let grid3 = traj.states[0].pi_w.grid3()?;
    let system = BendingPressureSystem::new(grid3, &params.clone(), traj.dt)?;
    let mut out = Vec::with_capacity(traj.states.len() - 1);
    for pair in traj.states.windows(2) {
        out.push(system.audit_step(&pair[0], &pair[1], loads, sources)?);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// convenience wrappers
// ---------------------------------------------------------------------------

/// Solve the stationary membrane block at time `t`.
pub fn solve_membrane(
    loads: &LoadSpec,
    t: f64,
    params: &DimensionlessParams,
    grid2: Grid2D,
) -> Result<(Field, Field, Field)> {
    MembraneSystem::new(grid2, params)?.solve(loads, t, None)
}

/// One backward-Euler step of the coupled bending–pressure system.
pub fn step_bending_pressure(
    state: &LimitState,
    loads: &LoadSpec,
    dt: f64,
    params: &DimensionlessParams,
) -> Result<(LimitState, EnergyReport)> {
    let grid3 = state.pi_w.grid3()?;
    BendingPressureSystem::new(grid3, params, dt)?.step(state, loads, None)
}
