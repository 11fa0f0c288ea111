//! Tensor-product grids on ω = (0,1)² and Ω = ω × (-1,1), nodal fields,
//! finite-difference operators and vertical quadrature.
//!
//! All derivatives are second-order: centered in the interior, one-sided
//! three-point closures at domain boundaries. The clamped biharmonic uses
//! the 13-point stencil with ghost-node reflection (w = ∂w/∂n = 0).
//! Vertical integrals use composite Simpson weights, which are exact for
//! the cubic-in-y3 integrands produced by Kirchhoff-Love fields.

use std::io::Write as _;
use std::path::Path;

use crate::{Error, Result};

/// Uniform grid on the unit square, `nx = ny` cells, nodes include the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        if nx != ny {
            return Err(Error::Grid(format!("grid must be square: nx = {nx}, ny = {ny}")));
        }
        if nx < 8 {
            return Err(Error::Grid(format!("need nx >= 8 cells, got {nx}")));
        }
        Ok(Grid2D { nx, ny })
    }

    pub fn h(&self) -> f64 {
        1.0 / self.nx as f64
    }

    pub fn n_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.ny + 1) + j
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        i as f64 * self.h()
    }

    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.nx || j == self.ny
    }

    /// Trapezoid weight (1, 1/2 or 1/4 times h²) of node (i, j).
    pub fn trap_weight(&self, i: usize, j: usize) -> f64 {
        let wi = if i == 0 || i == self.nx { 0.5 } else { 1.0 };
        let wj = if j == 0 || j == self.ny { 0.5 } else { 1.0 };
        wi * wj * self.h() * self.h()
    }

    /// Distance of node (i, j) to ∂ω.
    pub fn boundary_distance(&self, i: usize, j: usize) -> f64 {
        let x = self.coord(i);
        let y = self.coord(j);
        x.min(1.0 - x).min(y).min(1.0 - y)
    }
}

/// Grid2D extended by `nz` (even) cells over y3 ∈ (-1, 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid3D {
    pub base: Grid2D,
    pub nz: usize,
}

impl Grid3D {
    pub fn new(base: Grid2D, nz: usize) -> Result<Self> {
        if nz % 2 != 0 || nz < 2 {
            return Err(Error::Grid(format!(
                "nz must be even and >= 2 (Simpson pairing, midplane node), got {nz}"
            )));
        }
        Ok(Grid3D { base, nz })
    }

    pub fn hz(&self) -> f64 {
        2.0 / self.nz as f64
    }

    pub fn n_nodes(&self) -> usize {
        self.base.n_nodes() * (self.nz + 1)
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        self.base.idx(i, j) * (self.nz + 1) + k
    }

    #[inline]
    pub fn y3(&self, k: usize) -> f64 {
        -1.0 + k as f64 * self.hz()
    }

    /// Composite Simpson weight of vertical node k.
    pub fn simpson_weight(&self, k: usize) -> f64 {
        let h = self.hz();
        if k == 0 || k == self.nz {
            h / 3.0
        } else if k % 2 == 1 {
            4.0 * h / 3.0
        } else {
            2.0 * h / 3.0
        }
    }
}

/// Boundary-condition tag carried by a field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcTag {
    /// Zero on ∂ω (× (-1,1) for 3D fields).
    LateralDirichlet,
    /// No boundary condition.
    Free,
    /// Zero value and zero normal derivative on ∂ω (H²₀).
    Clamped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridRef {
    Two(Grid2D),
    Three(Grid3D),
}

/// Nodal field with 1, 2 or 3 components.
#[derive(Debug, Clone)]
pub struct Field {
    pub grid: GridRef,
    pub ncomp: usize,
    pub bc: BcTag,
    pub data: Vec<f64>,
}

impl Field {
    pub fn zeros2(grid: Grid2D, ncomp: usize, bc: BcTag) -> Self {
        Field {
            grid: GridRef::Two(grid),
            ncomp,
            bc,
            data: vec![0.0; grid.n_nodes() * ncomp],
        }
    }

    pub fn zeros3(grid: Grid3D, ncomp: usize, bc: BcTag) -> Self {
        Field {
            grid: GridRef::Three(grid),
            ncomp,
            bc,
            data: vec![0.0; grid.n_nodes() * ncomp],
        }
    }

    /// Sample `f(y1, y2, comp)` at every node of a 2D grid.
    pub fn from_fn2(grid: Grid2D, ncomp: usize, bc: BcTag, f: impl Fn(f64, f64, usize) -> f64) -> Self {
        let mut out = Field::zeros2(grid, ncomp, bc);
        for i in 0..=grid.nx {
            for j in 0..=grid.ny {
                let node = grid.idx(i, j);
                for c in 0..ncomp {
                    out.data[node * ncomp + c] = f(grid.coord(i), grid.coord(j), c);
                }
            }
        }
        out
    }

    /// Sample `f(y1, y2, y3, comp)` at every node of a 3D grid.
    pub fn from_fn3(
        grid: Grid3D,
        ncomp: usize,
        bc: BcTag,
        f: impl Fn(f64, f64, f64, usize) -> f64,
    ) -> Self {
        let mut out = Field::zeros3(grid, ncomp, bc);
        for i in 0..=grid.base.nx {
            for j in 0..=grid.base.ny {
                for k in 0..=grid.nz {
                    let node = grid.idx(i, j, k);
                    for c in 0..ncomp {
                        out.data[node * ncomp + c] =
                            f(grid.base.coord(i), grid.base.coord(j), grid.y3(k), c);
                    }
                }
            }
        }
        out
    }

    pub fn grid2(&self) -> Result<Grid2D> {
        match self.grid {
            GridRef::Two(g) => Ok(g),
            GridRef::Three(_) => Err(Error::Shape("expected a 2D field".into())),
        }
    }

    pub fn grid3(&self) -> Result<Grid3D> {
        match self.grid {
            GridRef::Three(g) => Ok(g),
            GridRef::Two(_) => Err(Error::Shape("expected a 3D field".into())),
        }
    }

    #[inline]
    pub fn get(&self, node: usize, comp: usize) -> f64 {
        self.data[node * self.ncomp + comp]
    }

    #[inline]
    pub fn set(&mut self, node: usize, comp: usize, v: f64) {
        self.data[node * self.ncomp + comp] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn assert_finite(&self, what: &str) -> Result<()> {
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Grid(format!("field `{what}` contains non-finite values")));
        }
        Ok(())
    }

    /// self - other, componentwise.
    pub fn sub(&self, other: &Field) -> Result<Field> {
        if self.data.len() != other.data.len() || self.ncomp != other.ncomp {
            return Err(Error::Shape("field difference: size mismatch".into()));
        }
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(other.data.iter()) {
            *a -= b;
        }
        Ok(out)
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// Extract one component as a scalar field.
    pub fn component(&self, comp: usize) -> Field {
        let n = self.data.len() / self.ncomp;
        let mut data = Vec::with_capacity(n);
        for node in 0..n {
            data.push(self.get(node, comp));
        }
        Field {
            grid: self.grid,
            ncomp: 1,
            bc: self.bc,
            data,
        }
    }
}

/// Finite-difference operators on fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffOp {
    /// Horizontal gradient of a scalar field (2 output components).
    Grad2,
    /// Horizontal divergence of the first two components.
    Div2,
    /// Symmetric strain component e_ij = (∂_i f_j + ∂_j f_i)/2, 0-based axes.
    Strain(usize, usize),
    /// Vertical derivative ∂/∂y3 of every component (3D fields only).
    Dz,
    /// Clamped-plate biharmonic of a scalar 2D field.
    Biharmonic2,
}

/// Second-order derivative of one component along one axis (0 = y1, 1 = y2, 2 = y3).
/// Centered in the interior, one-sided three-point at the boundary.
fn derivative(f: &Field, comp: usize, axis: usize) -> Result<Vec<f64>> {
    if comp >= f.ncomp {
        return Err(Error::Shape(format!(
            "component {comp} out of range for a {}-component field",
            f.ncomp
        )));
    }
    let line = |n: usize, h: f64, get: &dyn Fn(usize) -> f64, put: &mut dyn FnMut(usize, f64)| {
        for q in 0..=n {
            let d = if q == 0 {
                (-3.0 * get(0) + 4.0 * get(1) - get(2)) / (2.0 * h)
            } else if q == n {
                (3.0 * get(n) - 4.0 * get(n - 1) + get(n - 2)) / (2.0 * h)
            } else {
                (get(q + 1) - get(q - 1)) / (2.0 * h)
            };
            put(q, d);
        }
    };

    match f.grid {
        GridRef::Two(g) => {
            if axis > 1 {
                return Err(Error::Shape("vertical derivative of a 2D field".into()));
            }
            let mut out = vec![0.0; g.n_nodes()];
            let h = g.h();
            if axis == 0 {
                for j in 0..=g.ny {
                    line(g.nx, h, &|i| f.get(g.idx(i, j), comp), &mut |i, d| {
                        out[g.idx(i, j)] = d
                    });
                }
            } else {
                for i in 0..=g.nx {
                    line(g.ny, h, &|j| f.get(g.idx(i, j), comp), &mut |j, d| {
                        out[g.idx(i, j)] = d
                    });
                }
            }
            Ok(out)
        }
        GridRef::Three(g) => {
            let mut out = vec![0.0; g.n_nodes()];
            let (nx, ny, nz) = (g.base.nx, g.base.ny, g.nz);
            match axis {
                0 => {
                    let h = g.base.h();
                    for j in 0..=ny {
                        for k in 0..=nz {
                            line(nx, h, &|i| f.get(g.idx(i, j, k), comp), &mut |i, d| {
                                out[g.idx(i, j, k)] = d
                            });
                        }
                    }
                }
                1 => {
                    let h = g.base.h();
                    for i in 0..=nx {
                        for k in 0..=nz {
                            line(ny, h, &|j| f.get(g.idx(i, j, k), comp), &mut |j, d| {
                                out[g.idx(i, j, k)] = d
                            });
                        }
                    }
                }
                2 => {
                    let h = g.hz();
                    for i in 0..=nx {
                        for j in 0..=ny {
                            line(nz, h, &|k| f.get(g.idx(i, j, k), comp), &mut |k, d| {
                                out[g.idx(i, j, k)] = d
                            });
                        }
                    }
                }
                _ => return Err(Error::Shape(format!("axis {axis} out of range"))),
            }
            Ok(out)
        }
    }
}

/// Public derivative helper (scalar output field).
pub fn deriv(f: &Field, comp: usize, axis: usize) -> Result<Field> {
    let data = derivative(f, comp, axis)?;
    Ok(Field {
        grid: f.grid,
        ncomp: 1,
        bc: BcTag::Free,
        data,
    })
}

/// Second derivative along one horizontal axis: 3-point centered inside,
/// 4-point one-sided (second order) at the domain edge.
pub fn second_deriv(f: &Field, comp: usize, axis: usize) -> Result<Field> {
    if comp >= f.ncomp || axis > 1 {
        return Err(Error::Shape("second_deriv: bad component or axis".into()));
    }
    let line2 = |n: usize, h: f64, get: &dyn Fn(usize) -> f64, put: &mut dyn FnMut(usize, f64)| {
        let h2 = h * h;
        for q in 0..=n {
            let d = if q == 0 {
                (2.0 * get(0) - 5.0 * get(1) + 4.0 * get(2) - get(3)) / h2
            } else if q == n {
                (2.0 * get(n) - 5.0 * get(n - 1) + 4.0 * get(n - 2) - get(n - 3)) / h2
            } else {
                (get(q + 1) - 2.0 * get(q) + get(q - 1)) / h2
            };
            put(q, d);
        }
    };
    let mut out = Field {
        grid: f.grid,
        ncomp: 1,
        bc: BcTag::Free,
        data: vec![0.0; f.data.len() / f.ncomp],
    };
    match f.grid {
        GridRef::Two(g) => {
            let h = g.h();
            if axis == 0 {
                for j in 0..=g.ny {
                    line2(g.nx, h, &|i| f.get(g.idx(i, j), comp), &mut |i, d| {
                        out.data[g.idx(i, j)] = d
                    });
                }
            } else {
                for i in 0..=g.nx {
                    line2(g.ny, h, &|j| f.get(g.idx(i, j), comp), &mut |j, d| {
                        out.data[g.idx(i, j)] = d
                    });
                }
            }
        }
        GridRef::Three(g) => {
            let h = g.base.h();
            let (nx, ny, nz) = (g.base.nx, g.base.ny, g.nz);
            if axis == 0 {
                for j in 0..=ny {
                    for k in 0..=nz {
                        line2(nx, h, &|i| f.get(g.idx(i, j, k), comp), &mut |i, d| {
                            out.data[g.idx(i, j, k)] = d
                        });
                    }
                }
            } else {
                for i in 0..=nx {
                    for k in 0..=nz {
                        line2(ny, h, &|j| f.get(g.idx(i, j, k), comp), &mut |j, d| {
                            out.data[g.idx(i, j, k)] = d
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Apply a finite-difference operator.
pub fn apply_diff(f: &Field, op: DiffOp) -> Result<Field> {
    let out = match op {
        DiffOp::Grad2 => {
            if f.ncomp != 1 {
                return Err(Error::Shape("grad2 expects a scalar field".into()));
            }
            let d1 = derivative(f, 0, 0)?;
            let d2 = derivative(f, 0, 1)?;
            let n = d1.len();
            let mut data = vec![0.0; 2 * n];
            for q in 0..n {
                data[2 * q] = d1[q];
                data[2 * q + 1] = d2[q];
            }
            Field {
                grid: f.grid,
                ncomp: 2,
                bc: BcTag::Free,
                data,
            }
        }
        DiffOp::Div2 => {
            if f.ncomp < 2 {
                return Err(Error::Shape("div2 expects at least two components".into()));
            }
            let d1 = derivative(f, 0, 0)?;
            let d2 = derivative(f, 1, 1)?;
            let data = d1.iter().zip(d2.iter()).map(|(a, b)| a + b).collect();
            Field {
                grid: f.grid,
                ncomp: 1,
                bc: BcTag::Free,
                data,
            }
        }
        DiffOp::Strain(i, j) => {
            if i >= f.ncomp || j >= f.ncomp {
                return Err(Error::Shape(format!(
                    "strain e_{}{} needs {} components, field has {}",
                    i + 1,
                    j + 1,
                    i.max(j) + 1,
                    f.ncomp
                )));
            }
            let a = derivative(f, j, i)?;
            let b = derivative(f, i, j)?;
            let data = a.iter().zip(b.iter()).map(|(x, y)| 0.5 * (x + y)).collect();
            Field {
                grid: f.grid,
                ncomp: 1,
                bc: BcTag::Free,
                data,
            }
        }
        DiffOp::Dz => {
            let g = f.grid3()?;
            let mut data = vec![0.0; g.n_nodes() * f.ncomp];
            for c in 0..f.ncomp {
                let d = derivative(f, c, 2)?;
                for (node, v) in d.iter().enumerate() {
                    data[node * f.ncomp + c] = *v;
                }
            }
            Field {
                grid: f.grid,
                ncomp: f.ncomp,
                bc: BcTag::Free,
                data,
            }
        }
        DiffOp::Biharmonic2 => {
            if f.ncomp != 1 || f.bc != BcTag::Clamped {
                return Err(Error::Shape("biharmonic2 expects a clamped scalar 2D field".into()));
            }
            biharmonic2(f)?
        }
    };
    out.assert_finite("diff output")?;
    Ok(out)
}

/// 13-point clamped biharmonic with ghost-node reflection. Output is zero
/// on boundary nodes.
fn biharmonic2(f: &Field) -> Result<Field> {
    let g = f.grid2()?;
    let (nx, ny) = (g.nx, g.ny);
    let h4 = g.h().powi(4);
    // value with reflection across the boundary (w(-1) = w(1), i.e. ∂w/∂n = 0)
    let val = |i: isize, j: isize| -> f64 {
        let ir = if i < 0 { -i } else if i as usize > nx { 2 * nx as isize - i } else { i };
        let jr = if j < 0 { -j } else if j as usize > ny { 2 * ny as isize - j } else { j };
        f.get(g.idx(ir as usize, jr as usize), 0)
    };
    let mut out = Field::zeros2(g, 1, BcTag::Free);
    for i in 1..nx {
        for j in 1..ny {
            let (is, js) = (i as isize, j as isize);
            let v = 20.0 * val(is, js)
                - 8.0 * (val(is + 1, js) + val(is - 1, js) + val(is, js + 1) + val(is, js - 1))
                + 2.0
                    * (val(is + 1, js + 1)
                        + val(is + 1, js - 1)
                        + val(is - 1, js + 1)
                        + val(is - 1, js - 1))
                + val(is + 2, js)
                + val(is - 2, js)
                + val(is, js + 2)
                + val(is, js - 2);
            out.set(g.idx(i, j), 0, v / h4);
        }
    }
    Ok(out)
}

/// Simpson quadrature over y3 of `y3^weight_power * f`, column by column.
pub fn moment_integrals(f: &Field, weight_power: u32) -> Result<Field> {
    if f.ncomp != 1 {
        return Err(Error::Shape("moment_integrals expects a scalar field".into()));
    }
    let g = f.grid3()?;
    let mut out = Field::zeros2(g.base, 1, BcTag::Free);
    for i in 0..=g.base.nx {
        for j in 0..=g.base.ny {
            let mut acc = 0.0;
            for k in 0..=g.nz {
                let w = g.simpson_weight(k) * g.y3(k).powi(weight_power as i32);
                acc += w * f.get(g.idx(i, j, k), 0);
            }
            out.set(g.base.idx(i, j), 0, acc);
        }
    }
    Ok(out)
}

/// Cumulative vertical integral `∫_0^{y3} f da` per column.
///
/// Even node offsets from the midplane use composite Simpson; odd offsets
/// finish with the three-point half-interval rule, so the result is exact
/// for f quadratic in y3.
pub fn cumulative_from_midplane(f: &Field) -> Result<Field> {
    if f.ncomp != 1 {
        return Err(Error::Shape("cumulative integral expects a scalar field".into()));
    }
    let g = f.grid3()?;
    let mid = g.nz / 2;
    let hz = g.hz();
    let mut out = Field::zeros3(g, 1, BcTag::Free);
    for i in 0..=g.base.nx {
        for j in 0..=g.base.ny {
            let v = |k: usize| f.get(g.idx(i, j, k), 0);
            // upward from the midplane
            let mut acc;
            for k in (mid + 1)..=g.nz {
                let steps = k - mid;
                if steps % 2 == 0 {
                    // complete the Simpson pair ending at k
                    acc = integral_pairs(&v, mid, k, hz);
                } else {
                    acc = if steps == 1 {
                        half_interval(v(mid), v(mid + 1), v(mid + 2), hz, true)
                    } else {
                        integral_pairs(&v, mid, k - 1, hz)
                            + half_interval(v(k - 2), v(k - 1), v(k), hz, false)
                    };
                }
                out.set(g.idx(i, j, k), 0, acc);
            }
            // downward from the midplane (negative orientation)
            for k in (0..mid).rev() {
                let steps = mid - k;
                if steps % 2 == 0 {
                    acc = -integral_pairs(&v, k, mid, hz);
                } else if steps == 1 {
                    acc = -half_interval(v(mid), v(mid - 1), v(mid - 2), hz, true);
                } else {
                    acc = -(integral_pairs(&v, k + 1, mid, hz)
                        + half_interval(v(k + 2), v(k + 1), v(k), hz, false));
                }
                out.set(g.idx(i, j, k), 0, acc);
            }
        }
    }
    Ok(out)
}

/// Composite Simpson over an even number of intervals [lo, hi].
fn integral_pairs(v: &dyn Fn(usize) -> f64, lo: usize, hi: usize, hz: f64) -> f64 {
    debug_assert!((hi - lo) % 2 == 0);
    let mut acc = 0.0;
    let mut k = lo;
    while k + 2 <= hi {
        acc += hz / 3.0 * (v(k) + 4.0 * v(k + 1) + v(k + 2));
        k += 2;
    }
    acc
}

/// Integral over the first interval of a node triple using the quadratic
/// through the three values. `leading` selects whether the interval is
/// [x0, x1] of (f0, f1, f2) or the trailing [x1, x2].
fn half_interval(f0: f64, f1: f64, f2: f64, hz: f64, leading: bool) -> f64 {
    if leading {
        hz / 12.0 * (5.0 * f0 + 8.0 * f1 - f2)
    } else {
        hz / 12.0 * (-f0 + 8.0 * f1 + 5.0 * f2)
    }
}

/// Restrict a 3D scalar field to the midplane y3 = 0.
pub fn restrict_to_midplane(f: &Field) -> Result<Field> {
    let g = f.grid3()?;
    let mid = g.nz / 2;
    let mut out = Field::zeros2(g.base, f.ncomp, f.bc);
    for i in 0..=g.base.nx {
        for j in 0..=g.base.ny {
            for c in 0..f.ncomp {
                out.set(g.base.idx(i, j), c, f.get(g.idx(i, j, mid), c));
            }
        }
    }
    Ok(out)
}

/// Kirchhoff-Love lift of midsurface fields (g1, g2, g3):
/// `v_j = g_j - y3 ∂g3/∂y_j` (j = 1, 2) and `v3 = g3`.
/// Derivatives of g3 are taken with the discrete stencils, so the lifted
/// field has exactly vanishing discrete shear strains.
pub fn lift_kl(g1: &Field, g2: &Field, g3: &Field, grid: Grid3D) -> Result<Field> {
    let gb = g3.grid2()?;
    if gb != grid.base || g1.grid2()? != gb || g2.grid2()? != gb {
        return Err(Error::Shape("lift_kl: midsurface fields on mismatched grids".into()));
    }
    if g3.bc != BcTag::Clamped {
        return Err(Error::Shape("lift_kl: g3 must carry the clamped tag".into()));
    }
    if g1.bc != BcTag::LateralDirichlet || g2.bc != BcTag::LateralDirichlet {
        return Err(Error::Shape("lift_kl: g1, g2 must carry the lateral-Dirichlet tag".into()));
    }
    let d1 = derivative(g3, 0, 0)?;
    let d2 = derivative(g3, 0, 1)?;
    let mut out = Field::zeros3(grid, 3, BcTag::LateralDirichlet);
    for i in 0..=gb.nx {
        for j in 0..=gb.ny {
            let n2 = gb.idx(i, j);
            for k in 0..=grid.nz {
                let y3 = grid.y3(k);
                let n3 = grid.idx(i, j, k);
                out.set(n3, 0, g1.get(n2, 0) - y3 * d1[n2]);
                out.set(n3, 1, g2.get(n2, 0) - y3 * d2[n2]);
                out.set(n3, 2, g3.get(n2, 0));
            }
        }
    }
    Ok(out)
}

/// Discrete L² norm: trapezoid weights in the plane, Simpson in y3.
pub fn l2_norm(f: &Field) -> f64 {
    match f.grid {
        GridRef::Two(g) => {
            let mut acc = 0.0;
            for i in 0..=g.nx {
                for j in 0..=g.ny {
                    let w = g.trap_weight(i, j);
                    for c in 0..f.ncomp {
                        let v = f.get(g.idx(i, j), c);
                        acc += w * v * v;
                    }
                }
            }
            acc.sqrt()
        }
        GridRef::Three(g) => {
            let mut acc = 0.0;
            for i in 0..=g.base.nx {
                for j in 0..=g.base.ny {
                    let wxy = g.base.trap_weight(i, j);
                    for k in 0..=g.nz {
                        let w = wxy * g.simpson_weight(k);
                        for c in 0..f.ncomp {
                            let v = f.get(g.idx(i, j, k), c);
                            acc += w * v * v;
                        }
                    }
                }
            }
            acc.sqrt()
        }
    }
}

/// Write a field as CSV: coordinates followed by one column per component.
/// `header` lines are echoed as `#`-prefixed comments.
pub fn write_csv(f: &Field, path: &Path, header: &[String]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for line in header {
        writeln!(w, "# {line}")?;
    }
    match f.grid {
        GridRef::Two(g) => {
            let comps: Vec<String> = (0..f.ncomp).map(|c| format!("v{c}")).collect();
            writeln!(w, "y1,y2,{}", comps.join(","))?;
            for i in 0..=g.nx {
                for j in 0..=g.ny {
                    let mut row = format!("{},{}", g.coord(i), g.coord(j));
                    for c in 0..f.ncomp {
                        row.push_str(&format!(",{:e}", f.get(g.idx(i, j), c)));
                    }
                    writeln!(w, "{row}")?;
                }
            }
        }
        GridRef::Three(g) => {
            let comps: Vec<String> = (0..f.ncomp).map(|c| format!("v{c}")).collect();
            writeln!(w, "y1,y2,y3,{}", comps.join(","))?;
            for i in 0..=g.base.nx {
                for j in 0..=g.base.ny {
                    for k in 0..=g.nz {
                        let mut row =
                            format!("{},{},{}", g.base.coord(i), g.base.coord(j), g.y3(k));
                        for c in 0..f.ncomp {
                            row.push_str(&format!(",{:e}", f.get(g.idx(i, j, k), c)));
                        }
                        writeln!(w, "{row}")?;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Write a field as a legacy ASCII VTK structured-points file.
pub fn write_vtk(f: &Field, path: &Path, title: &str) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{title}")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_POINTS")?;
    let (nx, ny, nz, h, hz, z0) = match f.grid {
        GridRef::Two(g) => (g.nx, g.ny, 0usize, g.h(), 1.0, 0.0),
        GridRef::Three(g) => (g.base.nx, g.base.ny, g.nz, g.base.h(), g.hz(), -1.0),
    };
    writeln!(w, "DIMENSIONS {} {} {}", nx + 1, ny + 1, nz + 1)?;
    writeln!(w, "ORIGIN 0 0 {z0}")?;
    writeln!(w, "SPACING {h} {h} {hz}")?;
    writeln!(w, "POINT_DATA {}", (nx + 1) * (ny + 1) * (nz + 1))?;
    for c in 0..f.ncomp {
        writeln!(w, "SCALARS v{c} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        // VTK expects x fastest
        for k in 0..=nz {
            for j in 0..=ny {
                for i in 0..=nx {
                    let node = match f.grid {
                        GridRef::Two(g) => g.idx(i, j),
                        GridRef::Three(g) => g.idx(i, j, k),
                    };
                    writeln!(w, "{:e}", f.get(node, c))?;
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g2() -> Grid2D {
        Grid2D::new(16, 16).unwrap()
    }

    fn g3() -> Grid3D {
        Grid3D::new(g2(), 8).unwrap()
    }

    #[test]
    fn grid_invariants() {
        assert!(Grid2D::new(16, 8).is_err(), "non-square grid rejected");
        assert!(Grid2D::new(4, 4).is_err(), "too coarse rejected");
        assert!(Grid3D::new(g2(), 7).is_err(), "odd nz rejected");
        assert_eq!(g3().y3(4), 0.0, "midplane node exists");
    }

    #[test]
    fn grad_of_constant_vanishes() {
        let f = Field::from_fn2(g2(), 1, BcTag::Free, |_, _, _| 3.5);
        let gr = apply_diff(&f, DiffOp::Grad2).unwrap();
        assert_eq!(gr.max_abs(), 0.0);
    }

    #[test]
    fn strain_exact_on_linear_field() {
        // vector field (y2, y1): e12 = 1 exactly
        let f = Field::from_fn2(g2(), 2, BcTag::Free, |y1, y2, c| if c == 0 { y2 } else { y1 });
        let e12 = apply_diff(&f, DiffOp::Strain(0, 1)).unwrap();
        for v in &e12.data {
            assert!((v - 1.0).abs() < 1e-13, "e12 = {v}");
        }
        let e11 = apply_diff(&f, DiffOp::Strain(0, 0)).unwrap();
        assert!(e11.max_abs() < 1e-13);
    }

    #[test]
    fn derivative_exact_on_quadratics() {
        let f = Field::from_fn2(g2(), 1, BcTag::Free, |y1, y2, _| {
            1.0 + 2.0 * y1 + 0.5 * y1 * y1 - y1 * y2
        });
        let d = deriv(&f, 0, 0).unwrap();
        let g = g2();
        for i in 0..=g.nx {
            for j in 0..=g.ny {
                let exact = 2.0 + g.coord(i) - g.coord(j);
                assert!((d.get(g.idx(i, j), 0) - exact).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn biharmonic_of_sine_product() {
        let g = Grid2D::new(64, 64).unwrap();
        let pi = std::f64::consts::PI;
        let f = Field::from_fn2(g, 1, BcTag::Clamped, |y1, y2, _| (pi * y1).sin() * (pi * y2).sin());
        let b = apply_diff(&f, DiffOp::Biharmonic2).unwrap();
        // interior relative error (away from the ghost-affected ring)
        let mut max_rel = 0.0f64;
        for i in 2..g.nx - 1 {
            for j in 2..g.ny - 1 {
                let exact = 4.0 * pi.powi(4) * f.get(g.idx(i, j), 0);
                let got = b.get(g.idx(i, j), 0);
                if exact.abs() > 1.0 {
                    max_rel = max_rel.max((got - exact).abs() / exact.abs());
                }
            }
        }
        assert!(max_rel < 1e-2, "interior biharmonic rel error {max_rel}");
    }

    #[test]
    fn moment_integrals_examples() {
        let g = g3();
        let one = Field::from_fn3(g, 1, BcTag::Free, |_, _, _, _| 1.0);
        let m0 = moment_integrals(&one, 0).unwrap();
        for v in &m0.data {
            assert!((v - 2.0).abs() < 1e-14);
        }
        let y3f = Field::from_fn3(g, 1, BcTag::Free, |_, _, y3, _| y3);
        let m1 = moment_integrals(&y3f, 1).unwrap();
        for v in &m1.data {
            assert!((v - 2.0 / 3.0).abs() < 1e-14, "weight-1 moment of y3 = {v}");
        }
        let m0odd = moment_integrals(&y3f, 0).unwrap();
        assert!(m0odd.max_abs() < 1e-15, "odd integrand");
        // cubic exactness, weight 0: ∫ y3^3 = 0
        let y33 = Field::from_fn3(g, 1, BcTag::Free, |_, _, y3, _| y3 * y3 * y3);
        assert!(moment_integrals(&y33, 0).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn moment_weight1_annihilates_vertical_constants() {
        let g = g3();
        let f = Field::from_fn3(g, 1, BcTag::Free, |y1, y2, _, _| (1.0 + y1) * (2.0 - y2));
        let m1 = moment_integrals(&f, 1).unwrap();
        assert!(m1.max_abs() < 1e-13);
    }

    #[test]
    fn cumulative_integral_matches_antiderivative() {
        let g = g3();
        // f = a + b y3 + c y3^2: exact antiderivative from 0
        let (a, b, c) = (0.7, -1.3, 2.1);
        let f = Field::from_fn3(g, 1, BcTag::Free, |_, _, y3, _| a + b * y3 + c * y3 * y3);
        let ii = cumulative_from_midplane(&f).unwrap();
        for k in 0..=g.nz {
            let y3 = g.y3(k);
            let exact = a * y3 + 0.5 * b * y3 * y3 + c * y3 * y3 * y3 / 3.0;
            let got = ii.get(g.idx(5, 7, k), 0);
            assert!((got - exact).abs() < 1e-13, "k={k}: {got} vs {exact}");
        }
        assert_eq!(ii.get(g.idx(3, 3, g.nz / 2), 0), 0.0, "zero at midplane");
    }

    #[test]
    fn lift_kl_properties() {
        let g = g3();
        let zero2 = Field::zeros2(g.base, 1, BcTag::LateralDirichlet);
        let mut g3c = Field::zeros2(g.base, 1, BcTag::Clamped);
        let lifted = lift_kl(&zero2, &zero2, &g3c, g).unwrap();
        assert_eq!(lifted.max_abs(), 0.0);

        // g3 = 0, arbitrary g1, g2: lift is y3-independent
        let g1 = Field::from_fn2(g.base, 1, BcTag::LateralDirichlet, |y1, y2, _| y1 * (1.0 - y2));
        let lifted = lift_kl(&g1, &g1, &g3c, g).unwrap();
        for i in 0..=g.base.nx {
            for j in 0..=g.base.ny {
                let v0 = lifted.get(g.idx(i, j, 0), 0);
                for k in 1..=g.nz {
                    assert_eq!(lifted.get(g.idx(i, j, k), 0), v0);
                }
            }
        }

        // quadratic g3: discrete shear strains vanish (exactly, by construction)
        for i in 0..=g.base.nx {
            for j in 0..=g.base.ny {
                let (y1, y2) = (g.base.coord(i), g.base.coord(j));
                g3c.set(g.base.idx(i, j), 0, y1 * y1 - 0.5 * y1 * y2 + y2);
            }
        }
        let lifted = lift_kl(&zero2, &zero2, &g3c, g).unwrap();
        for (i, jj) in [(0usize, 2usize), (1, 2)] {
            let e = apply_diff(&lifted, DiffOp::Strain(i, jj)).unwrap();
            assert!(e.max_abs() < 1e-12, "e_{}3 = {}", i + 1, e.max_abs());
        }
        let e33 = apply_diff(&lifted, DiffOp::Strain(2, 2)).unwrap();
        assert!(e33.max_abs() < 1e-13);
    }

    #[test]
    fn writers_produce_wellformed_files() {
        let dir = tempfile::tempdir().unwrap();
        let f2 = Field::from_fn2(g2(), 2, BcTag::Free, |y1, y2, c| y1 + c as f64 * y2);
        let csv = dir.path().join("f.csv");
        write_csv(&f2, &csv, &["k = v".into()]).unwrap();
        let text = std::fs::read_to_string(&csv).unwrap();
        assert!(text.starts_with("# k = v\ny1,y2,v0,v1\n"));
        assert_eq!(text.lines().count(), 2 + g2().n_nodes());

        let f3 = Field::from_fn3(g3(), 1, BcTag::Free, |_, _, y3, _| y3);
        let vtk = dir.path().join("f.vtk");
        write_vtk(&f3, &vtk, "field").unwrap();
        let text = std::fs::read_to_string(&vtk).unwrap();
        assert!(text.starts_with("# vtk DataFile Version 3.0\nfield\nASCII\nDATASET STRUCTURED_POINTS\n"));
        assert!(text.contains("DIMENSIONS 17 17 9"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        /// Summation-by-parts: centered first differences are skew-adjoint
        /// against the plain nodal inner product for interior-supported fields.
        #[test]
        fn summation_by_parts(seed in 0u64..1000) {
            let g = g2();
            let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            let mut rng = move || {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state as f64 / u64::MAX as f64) - 0.5
            };
            let mut f = Field::zeros2(g, 1, BcTag::Free);
            let mut v = Field::zeros2(g, 2, BcTag::Free);
            for i in 3..g.nx - 2 {
                for j in 3..g.ny - 2 {
                    f.set(g.idx(i, j), 0, rng());
                    v.set(g.idx(i, j), 0, rng());
                    v.set(g.idx(i, j), 1, rng());
                }
            }
            let grad = apply_diff(&f, DiffOp::Grad2).unwrap();
            let div = apply_diff(&v, DiffOp::Div2).unwrap();
            let h2 = g.h() * g.h();
            let mut acc = 0.0;
            for node in 0..g.n_nodes() {
                acc += h2 * (grad.get(node, 0) * v.get(node, 0) + grad.get(node, 1) * v.get(node, 1));
                acc += h2 * f.get(node, 0) * div.get(node, 0);
            }
            prop_assert!(acc.abs() <= 1e-12, "SBP residual {acc}");
        }
    }
}
