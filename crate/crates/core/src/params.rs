//! Model parameters, scaling regime, and tolerance knobs.

use crate::error::{CoreError, Result};
use serde::{Deserialize, Serialize};

/// Cytosolic diffusivity: finite (>= 1) or the nonlocal scalar-cytosol limit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Diffusivity {
    Finite(f64),
    Infinite,
}

impl Diffusivity {
    pub fn is_infinite(&self) -> bool {
        matches!(self, Diffusivity::Infinite)
    }
    pub fn value(&self) -> Option<f64> {
        match self {
            Diffusivity::Finite(d) => Some(*d),
            Diffusivity::Infinite => None,
        }
    }
}

/// Volume of the unit ball.
pub const BALL_VOLUME: f64 = 4.0 * std::f64::consts::PI / 3.0;
/// Area of the unit sphere.
pub const SPHERE_AREA: f64 = 4.0 * std::f64::consts::PI;

/// Rate constants and scaling parameters. The seventh rate constant of the
/// original model is fixed to 1: any external value is absorbed into the
/// signal c before it reaches this struct.
///
/// `mass` is the total protein mass in the rescaled variables (the quantity
/// conserved is int_G (U + eps v) + eps int_O w = mass). At eps = 1 this is
/// the plain total mass of the unscaled model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelParams {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    pub a5: f64,
    pub a6: f64,
    pub diffusivity: Diffusivity,
    pub eps: f64,
    pub mass: f64,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, ok: bool| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(CoreError::InvalidParameter(format!(
                    "{name} out of range in {self:?}"
                )))
            }
        };
        check("a1", self.a1 >= 0.0 && self.a1.is_finite())?;
        check("a2", self.a2 >= 0.0 && self.a2.is_finite())?;
        check("a3", self.a3 > 0.0 && self.a3.is_finite())?;
        check("a4", self.a4 > 0.0 && self.a4.is_finite())?;
        check("a5", self.a5 > 0.0 && self.a5.is_finite())?;
        check("a6", self.a6 > 0.0 && self.a6.is_finite())?;
        if let Diffusivity::Finite(d) = self.diffusivity {
            check("D", d >= 1.0 && d.is_finite())?;
        }
        check("eps", self.eps > 0.0 && self.eps <= 1.0)?;
        check("mass", self.mass > 0.0 && self.mass.is_finite())?;
        Ok(())
    }

    /// Nonlocal coupling strength of the finite-diffusion obstacle problem.
    pub fn ell(&self) -> Option<f64> {
        self.diffusivity.value().map(|d| self.a6 / d)
    }

    /// Total mass in original (unscaled) variables: M = mass / eps.
    pub fn total_mass_original(&self) -> f64 {
        self.mass / self.eps
    }

    /// Default parameter set used by the examples and tests.
    pub fn default_with(diffusivity: Diffusivity, eps: f64, mass: f64) -> ModelParams {
        ModelParams {
            a1: 0.05,
            a2: 0.1,
            a3: 1.0,
            a4: 1.0,
            a5: 1.0,
            a6: 1.0,
            diffusivity,
            eps,
            mass,
        }
    }
}

/// Solver tolerances; the defaults are the ones pinned throughout the tests.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Tolerances {
    /// Steady-state detection threshold on the stationary residual L2 norm.
    pub tol_ss: f64,
    /// Newton refinement target residual.
    pub tol_newton: f64,
    /// Allowed pointwise negativity of u, v, w in accepted dynamic steps.
    pub tol_neg: f64,
    /// Allowed relative mass drift per step.
    pub tol_mass_step: f64,
    /// Relative mass tolerance of the obstacle bisection.
    pub tol_mass: f64,
    /// Complementarity (KKT) residual target of the obstacle solvers.
    pub tol_kkt: f64,
    /// Active-set threshold factor (times max(u, mass scale)).
    pub tol_active_factor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            tol_ss: 1e-9,
            tol_newton: 1e-11,
            tol_neg: 1e-8,
            tol_mass_step: 1e-9,
            tol_mass: 1e-6,
            tol_kkt: 1e-10,
            tol_active_factor: 1e-7,
        }
    }
}

/// Time-step controller bounds.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DtPolicy {
    pub dt0: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Double dt after this many consecutive accepted steps.
    pub grow_after: usize,
}

impl Default for DtPolicy {
    fn default() -> Self {
        DtPolicy {
            dt0: 1e-3,
            dt_min: 1e-6,
            dt_max: 1e-1,
            grow_after: 25,
        }
    }
}
