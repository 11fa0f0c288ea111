//! The scaled quasi-static Biot problem on the fixed slab Ω = ω × (-1, 1).
//!
//! Trilinear hexahedral elements discretize the scaled weak forms: the
//! elasticity form carries the ε⁻² transverse-shear and cross terms and the
//! ε⁻⁴ vertical-compression term, the pressure form carries the ε²-weighted
//! horizontal stiffness and the unit vertical stiffness. At every quadrature
//! point the elastic integrand is the positive combination
//!
//! ```text
//!   2 Σ_{i,j≤2} e_ij² + λ' (div₂ w̃ + ε⁻² ∂₃w₃)² + 2 ε⁻⁴ (∂₃w₃)²
//!   + 4 ε⁻² (e₁₃² + e₂₃²)
//! ```
//!
//! so the assembled A is symmetric positive definite on the lateral-Dirichlet
//! subspace. Order-one forms use full 2×2×2 Gauss quadrature. The two
//! transverse-shear terms use directional rules with the in-plane sample on
//! the element midline (plus an h²-weighted share of the full rule): the full
//! rule penalizes the O(h) interpolation mismatch between ∂₃w_j and ∂_j w₃ of
//! bending fields with weight ε⁻², which visibly locks the plate on coarse
//! grids once ε ≲ h; the midline sample removes that mismatch at second
//! order.
//!
//! Time stepping is monolithic backward Euler on the symmetric block system
//!
//! ```text
//!   [ A        -α Mᵀ              ] [ w^{n+1} ]   [ F(t^{n+1})                      ]
//!   [ -α M     -(γ Mass_p + dt K) ] [ π^{n+1} ] = [ -dt G(t^{n+1}) - γ Mass_p πⁿ - α M wⁿ ]
//! ```
//!
//! factored once (banded LDLᵀ with node-interleaved dofs) and reused across
//! the run.

use crate::grid::{BcTag, Field, Grid3D};
use crate::linsolve::{lanczos_extreme, DirectFactor, RectMatrix, SparseMatrix};
use crate::loads::{Face, LoadSpec};
use crate::params::DimensionlessParams;
use crate::{Error, Result};

/// Discrete solution of the scaled 3D problem at one time level.
#[derive(Debug, Clone)]
pub struct BiotState {
    /// Scaled displacement (3 components, zero on the lateral boundary).
    pub w: Field,
    /// Scaled pressure.
    pub pi: Field,
    pub t: f64,
}

impl BiotState {
    pub fn zero(grid: Grid3D) -> Self {
        BiotState {
            w: Field::zeros3(grid, 3, BcTag::LateralDirichlet),
            pi: Field::zeros3(grid, 1, BcTag::Free),
            t: 0.0,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.w.max_abs().max(self.pi.max_abs())
    }
}

/// Per-step discrete energy balance (elastic + storage energies against
/// dissipation and external work).
#[derive(Debug, Clone, Copy)]
pub struct EnergyBalance {
    pub t: f64,
    pub elastic_energy: f64,
    pub pressure_energy: f64,
    pub dissipation: f64,
    pub numerical_dissipation: f64,
    pub external_work: f64,
    pub closure_residual: f64,
    pub energy_scale: f64,
}

/// Displacement dof numbering: lateral-boundary nodes carry no dofs.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub grid: Grid3D,
    /// disp dof of (node, comp) or NONE for eliminated Dirichlet dofs.
    disp: Vec<usize>,
    pub n_disp: usize,
    /// interleaved global index of each displacement dof
    disp_global: Vec<usize>,
    /// interleaved global index of each pressure dof (per node)
    pres_global: Vec<usize>,
    pub n_total: usize,
}

const NONE: usize = usize::MAX;

impl DofMap {
    fn new(grid: Grid3D) -> Self {
        let g2 = grid.base;
        let n_nodes = grid.n_nodes();
        let mut disp = vec![NONE; 3 * n_nodes];
        let mut disp_global = Vec::new();
        let mut pres_global = vec![0usize; n_nodes];
        let mut n_disp = 0usize;
        let mut total = 0usize;
        for i in 0..=g2.nx {
            for j in 0..=g2.ny {
                let lateral = g2.is_boundary(i, j);
                for k in 0..=grid.nz {
                    let node = grid.idx(i, j, k);
                    if !lateral {
                        for c in 0..3 {
                            disp[3 * node + c] = n_disp;
                            disp_global.push(total);
                            n_disp += 1;
                            total += 1;
                        }
                    }
                    pres_global[node] = total;
                    total += 1;
                }
            }
        }
        DofMap {
            grid,
            disp,
            n_disp,
            disp_global,
            pres_global,
            n_total: total,
        }
    }

    #[inline]
    pub fn disp_dof(&self, node: usize, comp: usize) -> Option<usize> {
        let d = self.disp[3 * node + comp];
        (d != NONE).then_some(d)
    }

    /// Gather a 3-component field into the compact displacement vector.
    pub fn gather_disp(&self, f: &Field) -> Vec<f64> {
        let mut out = vec![0.0; self.n_disp];
        for node in 0..self.grid.n_nodes() {
            for c in 0..3 {
                if let Some(d) = self.disp_dof(node, c) {
                    out[d] = f.get(node, c);
                }
            }
        }
        out
    }

    pub fn scatter_disp(&self, v: &[f64]) -> Field {
        let mut f = Field::zeros3(self.grid, 3, BcTag::LateralDirichlet);
        for node in 0..self.grid.n_nodes() {
            for c in 0..3 {
                if let Some(d) = self.disp_dof(node, c) {
                    f.set(node, c, v[d]);
                }
            }
        }
        f
    }
}

/// Assembled quadratic forms of the scaled problem.
pub struct AssembledSystem {
    pub grid: Grid3D,
    pub params: DimensionlessParams,
    pub eps: f64,
    pub dofs: DofMap,
    /// Elasticity block (disp × disp), SPD on the Dirichlet subspace.
    pub a: SparseMatrix,
    /// Pressure–dilatation coupling (pressure × disp): (M w)_q = ∫ ξ_q div̂ w.
    pub mcpl: RectMatrix,
    /// Pressure stiffness: ε² horizontal + unit vertical.
    pub k: SparseMatrix,
    /// Pressure mass (consistent trilinear).
    pub mass_p: SparseMatrix,
}

/// Share of the full-Gauss rule blended into the transverse-shear forms.
fn shear_stabilization(grid: Grid3D) -> f64 {
    let h = grid.base.h();
    h * h
}

const GAUSS: f64 = 0.577_350_269_189_625_8; // 1/sqrt(3)

/// Assemble every form of the scaled variational problem.
pub fn assemble_biot(grid: Grid3D, params: &DimensionlessParams, eps: f64) -> Result<AssembledSystem> {
    params.validate()?;
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::Param {
            name: "eps",
            msg: format!("thickness ratio must lie in (0, 1/2), got {eps}"),
        });
    }
    let dofs = DofMap::new(grid);
    let g2 = grid.base;
    let (h, hz) = (g2.h(), grid.hz());
    let det_j = (h / 2.0) * (h / 2.0) * (hz / 2.0);
    let lambda = params.lambda;
    let ieps2 = 1.0 / (eps * eps);
    let ieps4 = ieps2 * ieps2;
    let theta = shear_stabilization(grid);

    // reference-element machinery
    let corners: [(usize, usize, usize); 8] = [
        (0, 0, 0),
        (0, 0, 1),
        (0, 1, 0),
        (0, 1, 1),
        (1, 0, 0),
        (1, 0, 1),
        (1, 1, 0),
        (1, 1, 1),
    ];
    let shape = |a: usize, xi: [f64; 3]| -> (f64, [f64; 3]) {
        let s = [
            2.0 * corners[a].0 as f64 - 1.0,
            2.0 * corners[a].1 as f64 - 1.0,
            2.0 * corners[a].2 as f64 - 1.0,
        ];
        let f = [
            0.5 * (1.0 + s[0] * xi[0]),
            0.5 * (1.0 + s[1] * xi[1]),
            0.5 * (1.0 + s[2] * xi[2]),
        ];
        let n = f[0] * f[1] * f[2];
        // derivatives w.r.t. physical coordinates
        let d = [
            0.5 * s[0] * f[1] * f[2] * (2.0 / h),
            f[0] * 0.5 * s[1] * f[2] * (2.0 / h),
            f[0] * f[1] * 0.5 * s[2] * (2.0 / hz),
        ];
        (n, d)
    };

    // quadrature rules: (point, weight)
    let mut full = Vec::new();
    for &x in &[-GAUSS, GAUSS] {
        for &y in &[-GAUSS, GAUSS] {
            for &z in &[-GAUSS, GAUSS] {
                full.push(([x, y, z], 1.0));
            }
        }
    }
    let mut mid1 = Vec::new(); // e13: midline in xi1
    let mut mid2 = Vec::new(); // e23: midline in xi2
    for &y in &[-GAUSS, GAUSS] {
        for &z in &[-GAUSS, GAUSS] {
            mid1.push(([0.0, y, z], 2.0));
            mid2.push(([y, 0.0, z], 2.0));
        }
    }

    // per-quadrature-point strain rows over the 24 local displacement dofs
    struct StrainRows {
        e11: [f64; 24],
        e22: [f64; 24],
        e12: [f64; 24],
        e13: [f64; 24],
        e23: [f64; 24],
        dz3: [f64; 24],
        div2: [f64; 24],
        n: [f64; 8],
    }
    let rows_at = |xi: [f64; 3]| -> StrainRows {
        let mut r = StrainRows {
            e11: [0.0; 24],
            e22: [0.0; 24],
            e12: [0.0; 24],
            e13: [0.0; 24],
            e23: [0.0; 24],
            dz3: [0.0; 24],
            div2: [0.0; 24],
            n: [0.0; 8],
        };
        for a in 0..8 {
            let (n, d) = shape(a, xi);
            r.n[a] = n;
            let (u1, u2, u3) = (3 * a, 3 * a + 1, 3 * a + 2);
            r.e11[u1] = d[0];
            r.e22[u2] = d[1];
            r.e12[u1] = 0.5 * d[1];
            r.e12[u2] = 0.5 * d[0];
            r.e13[u1] = 0.5 * d[2];
            r.e13[u3] = 0.5 * d[0];
            r.e23[u2] = 0.5 * d[2];
            r.e23[u3] = 0.5 * d[1];
            r.dz3[u3] = d[2];
            r.div2[u1] = d[0];
            r.div2[u2] = d[1];
        }
        r
    };

    let rank1 = |ke: &mut [[f64; 24]; 24], row: &[f64; 24], col: &[f64; 24], c: f64| {
        for i in 0..24 {
            if row[i] != 0.0 {
                let ri = c * row[i];
                for j in 0..24 {
                    ke[i][j] += ri * col[j];
                }
            }
        }
    };

    // local element matrices (identical for every cell on the uniform grid)
    let mut ke = [[0.0f64; 24]; 24];
    let mut me_cpl = [[0.0f64; 24]; 8];
    let mut ke_p = [[0.0f64; 8]; 8];
    let mut mass_e = [[0.0f64; 8]; 8];

    for &(xi, wq) in &full {
        let r = rows_at(xi);
        let w = wq * det_j;
        rank1(&mut ke, &r.e11, &r.e11, 2.0 * w);
        rank1(&mut ke, &r.e22, &r.e22, 2.0 * w);
        rank1(&mut ke, &r.e12, &r.e12, 4.0 * w);
        rank1(&mut ke, &r.div2, &r.div2, lambda * w);
        rank1(&mut ke, &r.div2, &r.dz3, lambda * ieps2 * w);
        rank1(&mut ke, &r.dz3, &r.div2, lambda * ieps2 * w);
        rank1(&mut ke, &r.dz3, &r.dz3, (2.0 + lambda) * ieps4 * w);
        // stabilization share of the shear form
        rank1(&mut ke, &r.e13, &r.e13, 4.0 * ieps2 * theta * w);
        rank1(&mut ke, &r.e23, &r.e23, 4.0 * ieps2 * theta * w);
        // coupling and pressure forms
        for q in 0..8 {
            let nq = r.n[q] * w;
            for j in 0..24 {
                me_cpl[q][j] += nq * (r.div2[j] + ieps2 * r.dz3[j]);
            }
        }
        for a in 0..8 {
            let (na, da) = shape(a, xi);
            for b in 0..8 {
                let (nb, db) = shape(b, xi);
                ke_p[a][b] += w * (eps * eps * (da[0] * db[0] + da[1] * db[1]) + da[2] * db[2]);
                mass_e[a][b] += w * na * nb;
            }
        }
    }
    for &(xi, wq) in &mid1 {
        let r = rows_at(xi);
        rank1(&mut ke, &r.e13, &r.e13, 4.0 * ieps2 * (1.0 - theta) * wq * det_j);
    }
    for &(xi, wq) in &mid2 {
        let r = rows_at(xi);
        rank1(&mut ke, &r.e23, &r.e23, 4.0 * ieps2 * (1.0 - theta) * wq * det_j);
    }

    // scatter over cells
    let mut ta: Vec<(usize, usize, f64)> = Vec::new();
    let mut tm: Vec<(usize, usize, f64)> = Vec::new();
    let mut tk: Vec<(usize, usize, f64)> = Vec::new();
    let mut tmass: Vec<(usize, usize, f64)> = Vec::new();
    for ci in 0..g2.nx {
        for cj in 0..g2.ny {
            for ck in 0..grid.nz {
                let nodes: Vec<usize> = corners
                    .iter()
                    .map(|&(di, dj, dk)| grid.idx(ci + di, cj + dj, ck + dk))
                    .collect();
                for a in 0..8 {
                    for ca in 0..3 {
                        let Some(da) = dofs.disp_dof(nodes[a], ca) else { continue };
                        for b in 0..8 {
                            for cb in 0..3 {
                                let Some(db) = dofs.disp_dof(nodes[b], cb) else { continue };
                                let v = ke[3 * a + ca][3 * b + cb];
                                if v != 0.0 {
                                    ta.push((da, db, v));
                                }
                            }
                        }
                    }
                }
                for q in 0..8 {
                    for b in 0..8 {
                        for cb in 0..3 {
                            let Some(db) = dofs.disp_dof(nodes[b], cb) else { continue };
                            let v = me_cpl[q][3 * b + cb];
                            if v != 0.0 {
                                tm.push((nodes[q], db, v));
                            }
                        }
                        let vk = ke_p[q][b];
                        if vk != 0.0 {
                            tk.push((nodes[q], nodes[b], vk));
                        }
                        let vm = mass_e[q][b];
                        if vm != 0.0 {
                            tmass.push((nodes[q], nodes[b], vm));
                        }
                    }
                }
            }
        }
    }
    let n_nodes = grid.n_nodes();
    Ok(AssembledSystem {
        grid,
        params: *params,
        eps,
        a: SparseMatrix::from_triplets(dofs.n_disp, &ta, true),
        mcpl: RectMatrix::from_triplets(n_nodes, dofs.n_disp, &tm),
        k: SparseMatrix::from_triplets(n_nodes, &tk, true),
        mass_p: SparseMatrix::from_triplets(n_nodes, &tmass, true),
        dofs,
    })
}

impl AssembledSystem {
    /// Traction load vector F(t) over displacement dofs.
    pub fn load_disp(&self, loads: &LoadSpec, t: f64) -> Vec<f64> {
        let g2 = self.grid.base;
        let h = g2.h();
        let det_f = (h / 2.0) * (h / 2.0);
        let mut f = vec![0.0; self.dofs.n_disp];
        let corners2: [(usize, usize); 4] = [(0, 0), (0, 1), (1, 0), (1, 1)];
        for &(face, k_node) in &[(Face::Bottom, 0usize), (Face::Top, self.grid.nz)] {
            for ci in 0..g2.nx {
                for cj in 0..g2.ny {
                    for &gx in &[-GAUSS, GAUSS] {
                        for &gy in &[-GAUSS, GAUSS] {
                            let y1 = g2.coord(ci) + 0.5 * h * (1.0 + gx);
                            let y2 = g2.coord(cj) + 0.5 * h * (1.0 + gy);
                            let p = [
                                loads.traction_at(0, face, y1, y2, t),
                                loads.traction_at(1, face, y1, y2, t),
                                loads.traction_at(2, face, y1, y2, t),
                            ];
                            for &(di, dj) in &corners2 {
                                let nsh = 0.25
                                    * (1.0 + (2.0 * di as f64 - 1.0) * gx)
                                    * (1.0 + (2.0 * dj as f64 - 1.0) * gy);
                                let node = self.grid.idx(ci + di, cj + dj, k_node);
                                for c in 0..3 {
                                    if let Some(d) = self.dofs.disp_dof(node, c) {
                                        f[d] += det_f * nsh * p[c];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        f
    }

    /// Flux load vector G(t) over pressure dofs:
    /// `-∫_{Σ⁺} U¹ ζ + ∫_{Σ⁻} U¹ ζ - ε ∫_Γ V ζ`.
    pub fn load_pres(&self, loads: &LoadSpec, t: f64) -> Vec<f64> {
        let g2 = self.grid.base;
        let (h, hz) = (g2.h(), self.grid.hz());
        let det_f = (h / 2.0) * (h / 2.0);
        let mut g = vec![0.0; self.grid.n_nodes()];
        let corners2: [(usize, usize); 4] = [(0, 0), (0, 1), (1, 0), (1, 1)];
        for &(sign, k_node) in &[(1.0f64, 0usize), (-1.0, self.grid.nz)] {
            for ci in 0..g2.nx {
                for cj in 0..g2.ny {
                    for &gx in &[-GAUSS, GAUSS] {
                        for &gy in &[-GAUSS, GAUSS] {
                            let y1 = g2.coord(ci) + 0.5 * h * (1.0 + gx);
                            let y2 = g2.coord(cj) + 0.5 * h * (1.0 + gy);
                            let u1 = (loads.flux_u1)(y1, y2, t);
                            for &(di, dj) in &corners2 {
                                let nsh = 0.25
                                    * (1.0 + (2.0 * di as f64 - 1.0) * gx)
                                    * (1.0 + (2.0 * dj as f64 - 1.0) * gy);
                                let node = self.grid.idx(ci + di, cj + dj, k_node);
                                g[node] += sign * det_f * nsh * u1;
                            }
                        }
                    }
                }
            }
        }
        // lateral walls: ∂ω × (-1, 1), four edges of the unit square
        let det_l = (h / 2.0) * (hz / 2.0);
        // walls parametrized by (edge cell index, vertical cell); `node_of`
        // maps the 2D corner (tangent offset, vertical offset) to the node
        let mut wall = |fixed_i: Option<usize>, fixed_j: Option<usize>| {
            for cs in 0..g2.nx {
                for ck in 0..self.grid.nz {
                    for &gs in &[-GAUSS, GAUSS] {
                        for &gz in &[-GAUSS, GAUSS] {
                            let s = g2.coord(cs) + 0.5 * h * (1.0 + gs);
                            let (y1, y2) = match (fixed_i, fixed_j) {
                                (Some(i), None) => (g2.coord(i), s),
                                (None, Some(j)) => (s, g2.coord(j)),
                                _ => unreachable!(),
                            };
                            let v = (loads.flux_v)(y1, y2, t);
                            for (ds, dk) in corners2 {
                                let nsh = 0.25
                                    * (1.0 + (2.0 * ds as f64 - 1.0) * gs)
                                    * (1.0 + (2.0 * dk as f64 - 1.0) * gz);
                                let node = match (fixed_i, fixed_j) {
                                    (Some(i), None) => self.grid.idx(i, cs + ds, ck + dk),
                                    (None, Some(j)) => self.grid.idx(cs + ds, j, ck + dk),
                                    _ => unreachable!(),
                                };
                                g[node] -= self.eps * det_l * nsh * v;
                            }
                        }
                    }
                }
            }
        };
        wall(Some(0), None);
        wall(Some(g2.nx), None);
        wall(None, Some(0));
        wall(None, Some(g2.ny));
        g
    }

    /// Assemble and factor the symmetric block system for step size `dt`.
    pub fn stepper(&self, dt: f64) -> Result<BiotStepper<'_>> {
        if !(dt > 0.0) {
            return Err(Error::Param {
                name: "dt",
                msg: format!("time step must be positive, got {dt}"),
            });
        }
        let alpha = self.params.alpha;
        let gamma = self.params.gamma;
        let mut t: Vec<(usize, usize, f64)> = Vec::new();
        let dg = &self.dofs.disp_global;
        let pg = &self.dofs.pres_global;
        for r in 0..self.a.n {
            for p in self.a.indptr[r]..self.a.indptr[r + 1] {
                t.push((dg[r], dg[self.a.indices[p]], self.a.values[p]));
            }
        }
        for r in 0..self.mcpl.nrows {
            for p in self.mcpl.indptr[r]..self.mcpl.indptr[r + 1] {
                let c = self.mcpl.indices[p];
                let v = -alpha * self.mcpl.values[p];
                if v != 0.0 {
                    t.push((pg[r], dg[c], v));
                    t.push((dg[c], pg[r], v));
                }
            }
        }
        for r in 0..self.k.n {
            for p in self.k.indptr[r]..self.k.indptr[r + 1] {
                t.push((pg[r], pg[self.k.indices[p]], -dt * self.k.values[p]));
            }
        }
        for r in 0..self.mass_p.n {
            for p in self.mass_p.indptr[r]..self.mass_p.indptr[r + 1] {
                t.push((pg[r], pg[self.mass_p.indices[p]], -gamma * self.mass_p.values[p]));
            }
        }
        let block = SparseMatrix::from_triplets(self.dofs.n_total, &t, true);
        let factor = DirectFactor::new(&block)?;
        Ok(BiotStepper {
            sys: self,
            dt,
            block,
            factor,
        })
    }
}

/// Backward-Euler stepper with the factored block system.
pub struct BiotStepper<'a> {
    pub sys: &'a AssembledSystem,
    pub dt: f64,
    block: SparseMatrix,
    factor: DirectFactor,
}

impl BiotStepper<'_> {
    /// The assembled symmetric block matrix (testing/diagnostics).
    pub fn block(&self) -> &SparseMatrix {
        &self.block
    }

    /// Advance one step to `state.t + dt`.
    pub fn step(&self, state: &BiotState, loads: &LoadSpec) -> Result<(BiotState, EnergyBalance)> {
        let sys = self.sys;
        let dofs = &sys.dofs;
        let t_new = state.t + self.dt;
        let alpha = sys.params.alpha;
        let gamma = sys.params.gamma;

        let w_old = dofs.gather_disp(&state.w);
        let p_old = state.pi.data.clone();

        let f_t = sys.load_disp(loads, t_new);
        let g_t = sys.load_pres(loads, t_new);

        let n_nodes = sys.grid.n_nodes();
        let mut rhs = vec![0.0; dofs.n_total];
        for (d, v) in f_t.iter().enumerate() {
            rhs[dofs.disp_global[d]] = *v;
        }
        let mut mass_pold = vec![0.0; n_nodes];
        sys.mass_p.matvec(&p_old, &mut mass_pold);
        let mut mw_old = vec![0.0; n_nodes];
        sys.mcpl.matvec(&w_old, &mut mw_old);
        for node in 0..n_nodes {
            rhs[dofs.pres_global[node]] =
                -self.dt * g_t[node] - gamma * mass_pold[node] - alpha * mw_old[node];
        }

        let x = self.factor.solve_refined(&self.block, &rhs);

        // residual check flags a failed step
        let mut r = vec![0.0; dofs.n_total];
        self.block.matvec(&x, &mut r);
        let mut res = 0.0f64;
        let mut scale = 0.0f64;
        for q in 0..dofs.n_total {
            res += (r[q] - rhs[q]) * (r[q] - rhs[q]);
            scale += rhs[q] * rhs[q];
        }
        let res = res.sqrt();
        let scale = scale.sqrt().max(self.block.max_abs() * x.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        if res > 1e-9 * scale.max(1e-300) {
            return Err(Error::ResidualCheck {
                residual: res,
                tol: 1e-9 * scale,
                context: " (biot step)".into(),
            });
        }

        let mut w_new = vec![0.0; dofs.n_disp];
        for d in 0..dofs.n_disp {
            w_new[d] = x[dofs.disp_global[d]];
        }
        let mut p_new = vec![0.0; n_nodes];
        for node in 0..n_nodes {
            p_new[node] = x[dofs.pres_global[node]];
        }

        let balance = self.balance(&w_old, &p_old, &w_new, &p_new, &f_t, &g_t, t_new);

        let mut pi = Field::zeros3(sys.grid, 1, BcTag::Free);
        pi.data = p_new;
        let next = BiotState {
            w: dofs.scatter_disp(&w_new),
            pi,
            t: t_new,
        };
        next.w.assert_finite("biot displacement")?;
        next.pi.assert_finite("biot pressure")?;
        Ok((next, balance))
    }

    #[allow(clippy::too_many_arguments)]
    fn balance(
        &self,
        w_old: &[f64],
        p_old: &[f64],
        w_new: &[f64],
        p_new: &[f64],
        f_t: &[f64],
        g_t: &[f64],
        t_new: f64,
    ) -> EnergyBalance {
        let sys = self.sys;
        let gamma = sys.params.gamma;
        let quad = |m: &SparseMatrix, u: &[f64], v: &[f64]| -> f64 {
            let mut mu = vec![0.0; u.len()];
            m.matvec(u, &mut mu);
            mu.iter().zip(v).map(|(a, b)| a * b).sum()
        };
        let dw: Vec<f64> = w_new.iter().zip(w_old).map(|(a, b)| a - b).collect();
        let dp: Vec<f64> = p_new.iter().zip(p_old).map(|(a, b)| a - b).collect();
        let e_el_new = 0.5 * quad(&sys.a, w_new, w_new);
        let e_el_old = 0.5 * quad(&sys.a, w_old, w_old);
        let e_p_new = 0.5 * gamma * quad(&sys.mass_p, p_new, p_new);
        let e_p_old = 0.5 * gamma * quad(&sys.mass_p, p_old, p_old);
        let numdiss = 0.5 * quad(&sys.a, &dw, &dw) + 0.5 * gamma * quad(&sys.mass_p, &dp, &dp);
        let dissipation = self.dt * quad(&sys.k, p_new, p_new);
        let work_f: f64 = f_t.iter().zip(&dw).map(|(a, b)| a * b).sum();
        let work_g: f64 = g_t.iter().zip(p_new).map(|(a, b)| a * b).sum::<f64>() * self.dt;
        let external_work = work_f + work_g;
        let closure_residual = ((e_el_new - e_el_old) + (e_p_new - e_p_old) + numdiss + dissipation
            - external_work)
            .abs();
        let energy_scale = e_el_new
            .abs()
            .max(e_p_new.abs())
            .max(dissipation.abs())
            .max(numdiss.abs())
            .max(external_work.abs());
        EnergyBalance {
            t: t_new,
            elastic_energy: e_el_new,
            pressure_energy: e_p_new,
            dissipation,
            numerical_dissipation: numdiss,
            external_work,
            closure_residual,
            energy_scale,
        }
    }
}

/// Trajectory of the scaled 3D solve.
#[derive(Debug)]
pub struct BiotTrajectory {
    pub states: Vec<BiotState>,
    pub reports: Vec<EnergyBalance>,
    pub dt: f64,
    pub eps: f64,
}

/// Run the scaled problem from zero initial data at uniform dt.
pub fn run_biot(
    params: &DimensionlessParams,
    grid: Grid3D,
    eps: f64,
    loads: &LoadSpec,
    t_end: f64,
    nsteps: usize,
) -> Result<BiotTrajectory> {
    let sys = assemble_biot(grid, params, eps)?;
    let dt = t_end / nsteps as f64;
    let stepper = sys.stepper(dt)?;
    let mut states = Vec::with_capacity(nsteps + 1);
    let mut reports = Vec::with_capacity(nsteps);
    states.push(BiotState::zero(grid));
    for step in 1..=nsteps {
        let prev = states.last().unwrap();
        let (next, bal) = stepper
            .step(prev, loads)
            .map_err(|e| e.at_step(step, step as f64 * dt))?;
        states.push(next);
        reports.push(bal);
    }
    Ok(BiotTrajectory {
        states,
        reports,
        dt,
        eps,
    })
}

/// λ_min(γ Mass_p + α² Mᵀ A⁻¹ M) - γ λ_min(Mass_p), the solvability margin
/// of the reduced pressure evolution. Nonnegative up to estimation error.
pub fn coupling_spd_margin(sys: &AssembledSystem) -> Result<f64> {
    let gamma = sys.params.gamma;
    let alpha = sys.params.alpha;
    let n = sys.grid.n_nodes();
    let a_factor = DirectFactor::new(&sys.a)?;

    let mut apply_b = |x: &[f64], y: &mut [f64]| {
        sys.mass_p.matvec(x, y);
        for v in y.iter_mut() {
            *v *= gamma;
        }
        if alpha != 0.0 {
            let mut mtx = vec![0.0; sys.dofs.n_disp];
            sys.mcpl.matvec_t(x, &mut mtx);
            let ainv = a_factor.solve(&mtx);
            let mut back = vec![0.0; n];
            sys.mcpl.matvec(&ainv, &mut back);
            for (v, b) in y.iter_mut().zip(&back) {
                *v += alpha * alpha * b;
            }
        }
    };
    let lam_b = lanczos_extreme(&mut apply_b, n, true, 1e-8, 500)?;
    let mut apply_m = |x: &[f64], y: &mut [f64]| {
        sys.mass_p.matvec(x, y);
        for v in y.iter_mut() {
            *v *= gamma;
        }
    };
    let lam_m = lanczos_extreme(&mut apply_m, n, true, 1e-8, 500)?;
    Ok(lam_b - lam_m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid2D;
    use crate::loads::{build_scenario, Ramp, Scenario, ScenarioAmplitudes};
    use std::sync::Arc;

    fn small_grid() -> Grid3D {
        Grid3D::new(Grid2D::new(8, 8).unwrap(), 4).unwrap()
    }

    fn params() -> DimensionlessParams {
        DimensionlessParams::default()
    }

    #[test]
    fn dof_counts_match_node_counting() {
        // 4x4x4-cell grid: 5^3 nodes, lateral boundary removed from the
        // displacement: 3 * (3*3*5) dofs; pressure keeps all 125 nodes.
        let g = Grid3D::new(Grid2D { nx: 4, ny: 4 }, 4).unwrap();
        let sys = assemble_biot(g, &params(), 0.2).unwrap();
        assert_eq!(sys.dofs.n_disp, 135);
        assert_eq!(sys.grid.n_nodes(), 125);
        assert_eq!(sys.a.n, 135);
        assert_eq!(sys.mass_p.n, 125);
    }

    #[test]
    fn assembled_forms_are_symmetric() {
        let sys = assemble_biot(small_grid(), &params(), 0.2).unwrap();
        assert!(sys.a.symmetry_defect() <= 1e-14 * sys.a.max_abs());
        assert!(sys.k.symmetry_defect() <= 1e-14 * sys.k.max_abs());
        assert!(sys.mass_p.symmetry_defect() <= 1e-14 * sys.mass_p.max_abs());
        // A is SPD on the Dirichlet subspace
        assert!(DirectFactor::new(&sys.a).is_ok());
        // K is PSD with the constant in its kernel
        let ones = vec![1.0; sys.k.n];
        let mut k1 = vec![0.0; sys.k.n];
        sys.k.matvec(&ones, &mut k1);
        assert!(k1.iter().all(|v| v.abs() < 1e-12), "K annihilates constants");
    }

    #[test]
    fn block_system_is_symmetric_after_sign_normalization() {
        let sys = assemble_biot(small_grid(), &params(), 0.2).unwrap();
        let stepper = sys.stepper(0.05).unwrap();
        let b = stepper.block();
        assert!(
            b.symmetry_defect() <= 1e-14 * b.max_abs(),
            "saddle matrix symmetry defect {}",
            b.symmetry_defect()
        );
    }

    #[test]
    fn eps_scaling_of_horizontal_pressure_block() {
        let g = small_grid();
        let sys1 = assemble_biot(g, &params(), 0.1).unwrap();
        let sys2 = assemble_biot(g, &params(), 0.2).unwrap();
        // K = eps^2 K_h + K_v: doubling eps multiplies the horizontal block
        // by exactly 4, so K(2e) - K(e) = 3 e^2 K_h and K(2e) - 4 K(e) = -3 K_v.
        for r in 0..sys1.k.n {
            for p in sys1.k.indptr[r]..sys1.k.indptr[r + 1] {
                let c = sys1.k.indices[p];
                let v1 = sys1.k.values[p];
                let v2 = sys2.k.get(r, c);
                // recover blocks from the two assemblies and re-compose
                let kh = (v2 - v1) / (3.0 * 0.01);
                let kv = v1 - 0.01 * kh;
                let recompose = 0.04 * kh + kv;
                assert!(
                    (recompose - v2).abs() <= 1e-12 * v2.abs().max(1.0),
                    "eps^2 scaling violated at ({r},{c})"
                );
            }
        }
    }

    #[test]
    fn zero_loads_give_zero_trajectory() {
        let traj = run_biot(&params(), small_grid(), 0.2, &LoadSpec::zero(), 1.0, 5).unwrap();
        for st in &traj.states {
            assert!(st.max_abs() <= 1e-12);
        }
    }

    #[test]
    fn energy_balance_closes() {
        let loads = build_scenario(Scenario::Mixed, ScenarioAmplitudes::default(), Ramp::new(0.25));
        let traj = run_biot(&params(), small_grid(), 0.2, &loads, 1.0, 8).unwrap();
        assert!(traj.states.last().unwrap().max_abs() > 1e-6, "loads excite the state");
        for bal in &traj.reports {
            assert!(
                bal.closure_residual <= 1e-10 * bal.energy_scale.max(1e-30),
                "closure {} vs scale {}",
                bal.closure_residual,
                bal.energy_scale
            );
            assert!(bal.numerical_dissipation >= -1e-14 * bal.energy_scale);
            assert!(bal.dissipation >= 0.0);
        }
    }

    #[test]
    fn reflection_equivariance() {
        let g = small_grid();
        let ramp = Ramp::new(0.25);
        // asymmetric data: traction and flux only on the top face
        let mut loads = LoadSpec::zero();
        loads.ramp = ramp;
        loads.traction[0] = Arc::new(move |f, y1, y2, t| {
            if f == Face::Top {
                (std::f64::consts::PI * y1).sin() * y2 * ramp.eval(t)
            } else {
                0.3 * y1 * ramp.eval(t)
            }
        });
        loads.traction[2] = Arc::new(move |f, y1, y2, t| {
            if f == Face::Top {
                (std::f64::consts::PI * y1).sin() * (std::f64::consts::PI * y2).sin() * ramp.eval(t)
            } else {
                0.0
            }
        });
        loads.flux_u1 = Arc::new(move |y1, y2, t| y1 * (1.0 - y2) * ramp.eval(t));

        // mirrored data: swap faces for tangential tractions, swap and negate
        // the vertical traction, negate U1
        let l0 = loads.clone();
        let mut mirrored = LoadSpec::zero();
        mirrored.ramp = ramp;
        let lt = l0.clone();
        mirrored.traction[0] = Arc::new(move |f, y1, y2, t| {
            let opp = if f == Face::Top { Face::Bottom } else { Face::Top };
            lt.traction_at(0, opp, y1, y2, t)
        });
        let lt = l0.clone();
        mirrored.traction[2] = Arc::new(move |f, y1, y2, t| {
            let opp = if f == Face::Top { Face::Bottom } else { Face::Top };
            -lt.traction_at(2, opp, y1, y2, t)
        });
        let lt = l0.clone();
        mirrored.flux_u1 = Arc::new(move |y1, y2, t| -(lt.flux_u1)(y1, y2, t));

        let ta = run_biot(&params(), g, 0.2, &loads, 1.0, 4).unwrap();
        let tb = run_biot(&params(), g, 0.2, &mirrored, 1.0, 4).unwrap();
        let sa = ta.states.last().unwrap();
        let sb = tb.states.last().unwrap();
        let scale = sa.max_abs();
        assert!(scale > 1e-8);
        let mut worst = 0.0f64;
        for i in 0..=g.base.nx {
            for j in 0..=g.base.ny {
                for k in 0..=g.nz {
                    let n = g.idx(i, j, k);
                    let nm = g.idx(i, j, g.nz - k);
                    worst = worst.max((sb.w.get(nm, 0) - sa.w.get(n, 0)).abs());
                    worst = worst.max((sb.w.get(nm, 1) - sa.w.get(n, 1)).abs());
                    worst = worst.max((sb.w.get(nm, 2) + sa.w.get(n, 2)).abs());
                    worst = worst.max((sb.pi.get(nm, 0) - sa.pi.get(n, 0)).abs());
                }
            }
        }
        assert!(worst <= 1e-9 * scale, "mirror defect {worst} at scale {scale}");
    }

    #[test]
    fn spd_margin_examples() {
        let g = small_grid();
        // alpha = 0: margin vanishes
        let p0 = DimensionlessParams::new(0.2, 1.0, 0.0, 0.25).unwrap();
        let sys = assemble_biot(g, &p0, 0.2).unwrap();
        let m = coupling_spd_margin(&sys).unwrap();
        assert!(m.abs() <= 1e-8, "alpha = 0 margin {m}");

        // default parameters: never negative beyond round-off
        let sys = assemble_biot(g, &params(), 0.2).unwrap();
        let m = coupling_spd_margin(&sys).unwrap();
        assert!(m >= -1e-8, "margin {m}");

        // gamma scaling with alpha = 0: min eig of gamma * Mass_p is linear in gamma
        let p2 = DimensionlessParams::new(0.2, 2.0, 0.0, 0.25).unwrap();
        let s1 = assemble_biot(g, &p0, 0.2).unwrap();
        let s2 = assemble_biot(g, &p2, 0.2).unwrap();
        let e1 = crate::linsolve::min_eig_estimate(&s1.mass_p, 1e-8).unwrap();
        let e2 = crate::linsolve::min_eig_estimate(&s2.mass_p, 1e-8).unwrap();
        // the mass matrix itself is gamma-independent; the gamma factor is
        // applied in the margin operator, so compare the scaled values
        assert!((2.0 * e1 - 2.0 * e2).abs() <= 1e-10 * e1.abs());
        let m1 = coupling_spd_margin(&s1).unwrap();
        let m2 = coupling_spd_margin(&s2).unwrap();
        assert!(m1.abs() <= 1e-8 && m2.abs() <= 1e-8);
    }

    #[test]
    fn a_priori_ratio_stays_bounded() {
        // eps^2 max_t ||grad_h pi||^2 stays finite across a run (smoke check
        // of the a priori structure; the sweep-level check lives in verify)
        let loads = build_scenario(Scenario::Mixed, ScenarioAmplitudes::default(), Ramp::new(0.25));
        let traj = run_biot(&params(), small_grid(), 0.2, &loads, 1.0, 6).unwrap();
        for st in &traj.states {
            st.pi.assert_finite("pi").unwrap();
        }
        assert!(traj.reports.iter().all(|b| b.elastic_energy.is_finite()));
    }
}
