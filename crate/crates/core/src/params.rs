//! Material and scaling parameters.
//!
//! Physical inputs (SI units) are reduced to the five dimensionless
//! numbers the scaled problem actually sees:
//!
//! ```text
//!   ε = ℓ/(2L)            thickness ratio
//!   γ = γ_G · G           storage number
//!   λ = 2ν/(1-2ν)         Lamé ratio
//!   α, ν                  carried over
//!   T = η ℓ² / (4 k G)    transverse consolidation (Taber-Terzaghi) time
//! ```
//!
//! The drained Poisson ratio must stay away from the incompressible
//! limit: every coefficient in the plate system carries `1-2ν` or `1-ν`
//! in a denominator, so `ν` is rejected within `NU_BAND` of `1/2`.

use crate::{Error, Result};

/// Exclusion band around the incompressible limit `ν = 1/2`.
pub const NU_BAND: f64 = 1e-3;

/// Physical parameters in SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    /// Shear modulus G \[Pa\].
    pub shear_modulus: f64,
    /// Drained Poisson ratio ν \[-\].
    pub nu: f64,
    /// Inverse Biot modulus γ_G \[1/Pa\].
    pub gamma_g: f64,
    /// Effective stress coefficient α \[-\].
    pub alpha: f64,
    /// Permeability k \[m²\].
    pub permeability: f64,
    /// Fluid viscosity η \[Pa·s\].
    pub viscosity: f64,
    /// Midsurface length L \[m\].
    pub length: f64,
    /// Plate thickness ℓ \[m\].
    pub thickness: f64,
}

/// Dimensionless parameters of the scaled problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimensionlessParams {
    /// Thickness ratio ε = ℓ/(2L).
    pub eps: f64,
    /// Storage number γ = γ_G·G.
    pub gamma: f64,
    /// Lamé ratio λ = 2ν/(1-2ν).
    pub lambda: f64,
    /// Effective stress coefficient α.
    pub alpha: f64,
    /// Drained Poisson ratio ν.
    pub nu: f64,
    /// Taber-Terzaghi time T = ηℓ²/(4kG) \[s\].
    pub t_terzaghi: f64,
}

impl Default for DimensionlessParams {
    /// Default desk-scale parameter set (ν = 0.25, α = 0.9, γ = 1, ε = 0.1).
    fn default() -> Self {
        DimensionlessParams::new(0.1, 1.0, 0.9, 0.25).expect("default params are admissible")
    }
}

fn require(cond: bool, name: &'static str, msg: String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Param { name, msg })
    }
}

fn require_positive(value: f64, name: &'static str) -> Result<()> {
    require(
        value.is_finite() && value > 0.0,
        name,
        format!("must be positive and finite, got {value}"),
    )
}

impl PhysicalParams {
    /// Check the admissibility invariants of the physical parameter set.
    pub fn validate(&self) -> Result<()> {
        require_positive(self.shear_modulus, "G")?;
        require_positive(self.permeability, "k")?;
        require_positive(self.viscosity, "eta")?;
        require_positive(self.length, "L")?;
        require_positive(self.thickness, "ell")?;
        require(
            self.thickness < self.length,
            "ell",
            format!(
                "thickness {} must be smaller than midsurface length {}",
                self.thickness, self.length
            ),
        )?;
        require(
            self.nu > 0.0 && self.nu < 0.5 - NU_BAND,
            "nu",
            format!(
                "Poisson ratio must lie in (0, {}), got {} (singular Lame coefficient near 1/2)",
                0.5 - NU_BAND,
                self.nu
            ),
        )?;
        require(
            self.gamma_g >= 0.0 && self.gamma_g.is_finite(),
            "gammaG",
            format!("inverse Biot modulus must be nonnegative, got {}", self.gamma_g),
        )?;
        require(
            (0.0..=1.0).contains(&self.alpha),
            "alpha",
            format!("effective stress coefficient must lie in [0, 1], got {}", self.alpha),
        )?;
        Ok(())
    }

    /// Characteristic displacement `d` (bookkeeping; the load scale is
    /// normalized out of the dimensionless problem). Conventionally the
    /// thickness is used as the displacement scale of bending.
    pub fn characteristic_displacement(&self) -> f64 {
        self.thickness
    }

    /// Characteristic pressure P = d·G/L.
    pub fn characteristic_pressure(&self) -> f64 {
        self.characteristic_displacement() * self.shear_modulus / self.length
    }
}

/// Map physical parameters to the dimensionless set used by both solvers.
pub fn derive_dimensionless(p: &PhysicalParams) -> Result<DimensionlessParams> {
    p.validate()?;
    let d = DimensionlessParams {
        eps: p.thickness / (2.0 * p.length),
        gamma: p.gamma_g * p.shear_modulus,
        lambda: 2.0 * p.nu / (1.0 - 2.0 * p.nu),
        alpha: p.alpha,
        nu: p.nu,
        t_terzaghi: p.viscosity * p.thickness * p.thickness
            / (4.0 * p.permeability * p.shear_modulus),
    };
    d.validate()?;
    Ok(d)
}

impl DimensionlessParams {
    /// Build a dimensionless parameter set directly, validating the invariants.
    pub fn new(eps: f64, gamma: f64, alpha: f64, nu: f64) -> Result<Self> {
        let d = DimensionlessParams {
            eps,
            gamma,
            lambda: 2.0 * nu / (1.0 - 2.0 * nu),
            alpha,
            nu,
            t_terzaghi: 1.0,
        };
        d.validate()?;
        Ok(d)
    }

    /// Check every invariant, reporting the first violated one by name.
    pub fn validate(&self) -> Result<()> {
        require(
            self.eps > 0.0 && self.eps < 0.5,
            "eps",
            format!("thickness ratio must lie in (0, 1/2), got {} (not a thin plate)", self.eps),
        )?;
        require(
            self.gamma >= 0.0 && self.gamma.is_finite(),
            "gamma",
            format!("storage number must be nonnegative, got {}", self.gamma),
        )?;
        require(
            self.nu > 0.0 && self.nu < 0.5 - NU_BAND,
            "nu",
            format!(
                "Poisson ratio must lie in (0, {}), got {}",
                0.5 - NU_BAND,
                self.nu
            ),
        )?;
        require(
            self.lambda > 0.0 && self.lambda.is_finite(),
            "lambda",
            format!("Lame ratio must be positive, got {}", self.lambda),
        )?;
        let lam_defect = (self.lambda * (1.0 - 2.0 * self.nu) - 2.0 * self.nu).abs();
        require(
            lam_defect <= 1e-12 * (1.0 + self.lambda.abs()),
            "lambda",
            format!("lambda inconsistent with nu: |lambda(1-2nu) - 2nu| = {lam_defect:.3e}"),
        )?;
        require(
            (0.0..=1.0).contains(&self.alpha),
            "alpha",
            format!("effective stress coefficient must lie in [0, 1], got {}", self.alpha),
        )?;
        require(
            self.t_terzaghi > 0.0 && self.t_terzaghi.is_finite(),
            "T",
            format!("consolidation time must be positive, got {}", self.t_terzaghi),
        )?;
        Ok(())
    }

    /// `c_p = γ + α²(1-2ν)/(2(1-ν))`, the storage coefficient of the
    /// limit pressure equation.
    pub fn pressure_capacity(&self) -> f64 {
        self.gamma + self.alpha * self.alpha * (1.0 - 2.0 * self.nu) / (2.0 * (1.0 - self.nu))
    }

    /// `c_c = α(1-2ν)/(1-ν)`, the bending/pressure coupling coefficient.
    pub fn coupling_coeff(&self) -> f64 {
        self.alpha * (1.0 - 2.0 * self.nu) / (1.0 - self.nu)
    }

    /// `4/(3(1-ν))`, the bending stiffness of the scaled limit equation.
    pub fn bending_coeff(&self) -> f64 {
        4.0 / (3.0 * (1.0 - self.nu))
    }

    /// Grad-div coefficient of the membrane system once the mean
    /// pressure has been eliminated algebraically.
    pub fn membrane_graddiv_coeff(&self) -> f64 {
        let c = self.coupling_coeff();
        (1.0 + self.nu) / (1.0 - self.nu) + c * c / self.pressure_capacity()
    }

    /// Mean pressure per unit in-plane dilatation: `π_m = -c · div w̃⁰`.
    pub fn mean_pressure_coeff(&self) -> f64 {
        self.coupling_coeff() / self.pressure_capacity()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn physical(nu: f64) -> PhysicalParams {
        PhysicalParams {
            shear_modulus: 2.0,
            nu,
            gamma_g: 0.5,
            alpha: 0.9,
            permeability: 1.0,
            viscosity: 1.0,
            length: 1.0,
            thickness: 0.02,
        }
    }

    #[test]
    fn dimensionless_definitions() {
        let d = derive_dimensionless(&physical(0.25)).unwrap();
        assert_eq!(d.gamma, 1.0, "gamma = gammaG * G = 0.5 * 2");
        assert_eq!(d.lambda, 1.0, "lambda = 2*0.25 / (1 - 0.5)");
        assert_eq!(d.eps, 0.01, "eps = ell / (2 L)");

        let p = PhysicalParams {
            shear_modulus: 1.0,
            viscosity: 1.0,
            permeability: 1.0,
            thickness: 2.0,
            length: 3.0,
            ..physical(0.25)
        };
        let d = derive_dimensionless(&p).unwrap();
        assert_eq!(d.t_terzaghi, 1.0, "T = eta*ell^2/(4 k G)");
    }

    #[test]
    fn rejects_near_incompressible() {
        assert!(derive_dimensionless(&physical(0.4999)).is_err());
        assert!(derive_dimensionless(&physical(0.5)).is_err());
        assert!(derive_dimensionless(&physical(-0.1)).is_err());
        let mut p = physical(0.25);
        p.shear_modulus = -1.0;
        assert!(derive_dimensionless(&p).is_err());
    }

    #[test]
    fn rejects_thick_plate() {
        let d = DimensionlessParams {
            eps: 0.6,
            ..DimensionlessParams::default()
        };
        assert!(d.validate().is_err());
        assert!(DimensionlessParams::default().validate().is_ok());
    }

    #[test]
    fn default_parameter_set() {
        let d = DimensionlessParams::default();
        assert_eq!(d.nu, 0.25);
        assert_eq!(d.alpha, 0.9);
        assert_eq!(d.gamma, 1.0);
        assert_eq!(d.eps, 0.1);
    }

    proptest! {
        /// Every admissible physical draw maps to a valid dimensionless set,
        /// and the definitional identities hold to machine precision.
        #[test]
        fn derive_then_validate(
            g in 1e3f64..1e11,
            nu in 0.01f64..0.49,
            gamma_g in 0.0f64..1e-3,
            alpha in 0.0f64..1.0,
            k in 1e-18f64..1e-8,
            eta in 1e-4f64..1e1,
            length in 0.01f64..100.0,
            ratio in 1e-4f64..0.9,
        ) {
            let p = PhysicalParams {
                shear_modulus: g,
                nu,
                gamma_g,
                alpha,
                permeability: k,
                viscosity: eta,
                length,
                thickness: ratio * length,
            };
            prop_assume!(p.validate().is_ok());
            let d = derive_dimensionless(&p).unwrap();
            prop_assert!(d.validate().is_ok());
            // lambda (1 - 2 nu) = 2 nu
            prop_assert!((d.lambda * (1.0 - 2.0 * nu) - 2.0 * nu).abs() <= 1e-14 * (1.0 + d.lambda));
            // 4 k G T = eta ell^2
            let lhs = 4.0 * k * g * d.t_terzaghi;
            let rhs = eta * p.thickness * p.thickness;
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs());
        }
    }
}
