//! Boundary load data.
//!
//! All loads are stored as callables evaluated on demand, so a single
//! `LoadSpec` serves every grid of an ε-sweep. Data are ramped from zero
//! with a smooth envelope (value and slope vanish at t = 0), matching the
//! regularity the solvers assume.
//!
//! The shipped scenarios isolate the blocks of the limit model:
//!
//! * `bend`    — vertical face traction P₃ only, drives bending.
//! * `stretch` — tangential face tractions, equal on both faces and
//!   divergence-free in the plane, drives the membrane block only.
//! * `drain`   — normal flux U¹ through the faces, drives the pressure
//!   fluctuation and, through it, bending.
//! * `mixed`   — all of the above plus a small lateral flux V.

use std::fmt;
use std::sync::Arc;

use crate::{Error, Result};

/// Top (`y3 = +1`) or bottom (`y3 = -1`) face of the slab.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Face {
    Top,
    Bottom,
}

impl Face {
    pub fn y3(self) -> f64 {
        match self {
            Face::Top => 1.0,
            Face::Bottom => -1.0,
        }
    }
}

type SurfaceFn = Arc<dyn Fn(Face, f64, f64, f64) -> f64 + Send + Sync>;
type PlaneFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// Smooth temporal envelope: `sin²(π t / (2 t0))` for `t ≤ t0`, then 1.
/// Both the value and the slope vanish at t = 0.
#[derive(Debug, Clone, Copy)]
pub struct Ramp {
    pub t0: f64,
}

impl Ramp {
    pub fn new(t0: f64) -> Self {
        Ramp { t0 }
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else if t >= self.t0 {
            1.0
        } else {
            let s = (std::f64::consts::PI * t / (2.0 * self.t0)).sin();
            s * s
        }
    }

    pub fn deriv(&self, t: f64) -> f64 {
        if t <= 0.0 || t >= self.t0 {
            0.0
        } else {
            let w = std::f64::consts::PI / (2.0 * self.t0);
            2.0 * w * (w * t).sin() * (w * t).cos()
        }
    }
}

/// Traction, flux and initial data of one run.
///
/// All fields are order-one functions: the ε-powers of the physical
/// traction scaling are already absorbed into the scaled problem.
#[derive(Clone)]
pub struct LoadSpec {
    /// Tangential and normal surface tractions P₁, P₂, P₃ on `Σ⁺ ∪ Σ⁻`.
    pub traction: [SurfaceFn; 3],
    /// Normal flux U¹ at the top and bottom faces (same function on both).
    pub flux_u1: PlaneFn,
    /// Lateral inflow/outflow flux V on `∂ω × (-1, 1)`.
    pub flux_v: PlaneFn,
    /// Temporal envelope applied by the scenario closures.
    pub ramp: Ramp,
}

impl fmt::Debug for LoadSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LoadSpec").field("ramp_t0", &self.ramp.t0).finish()
    }
}

impl LoadSpec {
    /// All loads identically zero.
    pub fn zero() -> Self {
        let z: SurfaceFn = Arc::new(|_, _, _, _| 0.0);
        LoadSpec {
            traction: [z.clone(), z.clone(), z],
            flux_u1: Arc::new(|_, _, _| 0.0),
            flux_v: Arc::new(|_, _, _| 0.0),
            ramp: Ramp::new(0.25),
        }
    }

    pub fn traction_at(&self, comp: usize, face: Face, y1: f64, y2: f64, t: f64) -> f64 {
        (self.traction[comp])(face, y1, y2, t)
    }

    /// Face-sum `P_c|⁺ + P_c|⁻` of one traction component.
    pub fn traction_face_sum(&self, comp: usize, y1: f64, y2: f64, t: f64) -> f64 {
        self.traction_at(comp, Face::Top, y1, y2, t) + self.traction_at(comp, Face::Bottom, y1, y2, t)
    }
}

/// Named load scenarios. Amplitudes multiply fixed smooth spatial shapes
/// supported away from the lateral boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioAmplitudes {
    pub bend: f64,
    pub stretch: f64,
    pub drain: f64,
    pub lateral: f64,
}

impl Default for ScenarioAmplitudes {
    fn default() -> Self {
        ScenarioAmplitudes {
            bend: 1.0,
            stretch: 1.0,
            drain: 1.0,
            // the lateral flux is a weak perturbation: it is absent from the
            // limit model and enters the 3D problem only at order ε
            lateral: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Bend,
    Stretch,
    Drain,
    Mixed,
    Zero,
}

impl Scenario {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "bend" => Ok(Scenario::Bend),
            "stretch" => Ok(Scenario::Stretch),
            "drain" => Ok(Scenario::Drain),
            "mixed" => Ok(Scenario::Mixed),
            "zero" => Ok(Scenario::Zero),
            other => Err(Error::Param {
                name: "scenario",
                msg: format!("unknown scenario `{other}` (expected bend|stretch|drain|mixed|zero)"),
            }),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Bend => "bend",
            Scenario::Stretch => "stretch",
            Scenario::Drain => "drain",
            Scenario::Mixed => "mixed",
            Scenario::Zero => "zero",
        }
    }
}

fn sinpi(x: f64) -> f64 {
    (std::f64::consts::PI * x).sin()
}

// Tangential tractions come from the stream function sin²(πy1)sin²(πy2),
// so they are divergence-free and vanish on ∂ω together with the stream.
fn stream_d1(y1: f64, y2: f64) -> f64 {
    let s2 = sinpi(y2);
    std::f64::consts::PI * (2.0 * std::f64::consts::PI * y1).sin() * s2 * s2
}

fn stream_d2(y1: f64, y2: f64) -> f64 {
    let s1 = sinpi(y1);
    std::f64::consts::PI * (2.0 * std::f64::consts::PI * y2).sin() * s1 * s1
}

/// Build the `LoadSpec` of a named scenario.
///
/// The tangential tractions are taken equal on both faces and
/// divergence-free, so the membrane sees them while the moment load of
/// the bending equation vanishes identically; P₃ is split evenly over
/// the two faces; U¹ is a single function applied on both faces, which
/// keeps the vertical mean of the pressure fluctuation stationary.
pub fn build_scenario(scenario: Scenario, amp: ScenarioAmplitudes, ramp: Ramp) -> LoadSpec {
    let mut spec = LoadSpec::zero();
    spec.ramp = ramp;

    let with_bend = matches!(scenario, Scenario::Bend | Scenario::Mixed);
    let with_stretch = matches!(scenario, Scenario::Stretch | Scenario::Mixed);
    let with_drain = matches!(scenario, Scenario::Drain | Scenario::Mixed);
    let with_lateral = matches!(scenario, Scenario::Mixed);

    if with_stretch {
        let a = amp.stretch;
        spec.traction[0] = Arc::new(move |_, y1, y2, t| a * stream_d2(y1, y2) * ramp.eval(t));
        spec.traction[1] = Arc::new(move |_, y1, y2, t| -a * stream_d1(y1, y2) * ramp.eval(t));
    }
    if with_bend {
        let a = amp.bend;
        spec.traction[2] =
            Arc::new(move |_, y1, y2, t| 0.5 * a * sinpi(y1) * sinpi(y2) * ramp.eval(t));
    }
    if with_drain {
        let a = amp.drain;
        spec.flux_u1 = Arc::new(move |y1, y2, t| a * sinpi(y1) * sinpi(y2) * ramp.eval(t));
    }
    if with_lateral {
        let a = amp.lateral;
        // Parametrize ∂ω by arclength s ∈ [0, 4), counterclockwise from the
        // origin; sin(π s / 2) integrates to zero over the perimeter.
        spec.flux_v = Arc::new(move |y1, y2, t| {
            let s = if y2 <= 0.0 {
                y1
            } else if y1 >= 1.0 {
                1.0 + y2
            } else if y2 >= 1.0 {
                3.0 - y1
            } else {
                4.0 - y2
            };
            a * (0.5 * std::f64::consts::PI * s).sin() * ramp.eval(t)
        });
    }
    spec
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_vanishes_smoothly_at_zero() {
        let r = Ramp::new(0.25);
        assert_eq!(r.eval(0.0), 0.0);
        assert_eq!(r.deriv(0.0), 0.0);
        assert_eq!(r.eval(0.3), 1.0);
        // smooth join at t0
        assert!((r.eval(0.25) - 1.0).abs() < 1e-15);
        assert!(r.deriv(0.125) > 0.0);
    }

    #[test]
    fn stretch_traction_is_divergence_free() {
        let spec = build_scenario(Scenario::Stretch, ScenarioAmplitudes::default(), Ramp::new(0.25));
        let t = 1.0;
        let h = 1e-5;
        for &(y1, y2) in &[(0.3, 0.4), (0.7, 0.2), (0.5, 0.5)] {
            let d1 = (spec.traction_at(0, Face::Top, y1 + h, y2, t)
                - spec.traction_at(0, Face::Top, y1 - h, y2, t))
                / (2.0 * h);
            let d2 = (spec.traction_at(1, Face::Top, y1, y2 + h, t)
                - spec.traction_at(1, Face::Top, y1, y2 - h, t))
                / (2.0 * h);
            assert!((d1 + d2).abs() < 1e-6, "div P = {} at ({y1},{y2})", d1 + d2);
            // face-symmetric
            assert_eq!(
                spec.traction_at(0, Face::Top, y1, y2, t),
                spec.traction_at(0, Face::Bottom, y1, y2, t)
            );
        }
    }

    #[test]
    fn loads_vanish_at_t0() {
        let spec = build_scenario(Scenario::Mixed, ScenarioAmplitudes::default(), Ramp::new(0.25));
        for c in 0..3 {
            assert_eq!(spec.traction_at(c, Face::Top, 0.3, 0.6, 0.0), 0.0);
        }
        assert_eq!((spec.flux_u1)(0.3, 0.6, 0.0), 0.0);
        assert_eq!((spec.flux_v)(0.0, 0.3, 0.0), 0.0);
    }
}
