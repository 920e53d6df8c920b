//! Parametric kernel families for agent interest (`f`), production ability
//! (`g`) and relay filters (`h`), with closed-form first and second
//! derivatives.
//!
//! Interest kernels need full support on `[0, L]` and must be strictly
//! decreasing there; ability kernels are compactly supported bumps that are
//! strictly decreasing and concave on the interior of their support; filter
//! kernels only need to be non-increasing with range `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    /// `a * exp(-d^2 / (2 w^2))`; full support.
    Gaussian,
    /// `a * (1 + cos(pi d / L)) / 2`; full support, vanishes smoothly at `L`.
    RaisedCosine,
    /// `a * max(0, 1 - (d / w)^2)`; support `[0, w]`.
    QuadraticBump,
    /// `a * cos(pi d / (2 w))` for `d <= w`, else 0; support `[0, w]`.
    CosineBump,
}

impl KernelFamily {
    pub fn compact_support(self) -> bool {
        matches!(self, KernelFamily::QuadraticBump | KernelFamily::CosineBump)
    }
}

/// The role a kernel plays; decides which admissibility rules apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelRole {
    InterestF,
    AbilityG,
    FilterH,
}

impl KernelRole {
    fn name(self) -> &'static str {
        match self {
            KernelRole::InterestF => "interest f",
            KernelRole::AbilityG => "ability g",
            KernelRole::FilterH => "filter h",
        }
    }
}

/// A kernel: family plus amplitude (value at distance 0) and width.
///
/// For the full-support families `width` is a decay scale (the raised cosine
/// ignores it and decays over `[0, L]`); for the bump families it is the
/// support radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub amplitude: f64,
    pub width: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, amplitude: f64, width: f64) -> Result<Self> {
        if !(amplitude > 0.0 && amplitude <= 1.0) {
            return Err(Error::invalid(format!(
                "kernel amplitude must lie in (0, 1], got {amplitude}"
            )));
        }
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::invalid(format!(
                "kernel width must be positive, got {width}"
            )));
        }
        Ok(KernelSpec {
            family,
            amplitude,
            width,
        })
    }

    pub fn gaussian(amplitude: f64, width: f64) -> Result<Self> {
        Self::new(KernelFamily::Gaussian, amplitude, width)
    }

    pub fn raised_cosine(amplitude: f64) -> Result<Self> {
        // Width is immaterial for this family; store 1 to keep the record valid.
        Self::new(KernelFamily::RaisedCosine, amplitude, 1.0)
    }

    pub fn quadratic_bump(amplitude: f64, width: f64) -> Result<Self> {
        Self::new(KernelFamily::QuadraticBump, amplitude, width)
    }

    pub fn cosine_bump(amplitude: f64, width: f64) -> Result<Self> {
        Self::new(KernelFamily::CosineBump, amplitude, width)
    }

    /// Distance beyond which the kernel vanishes; `L` for full-support families.
    pub fn support_radius(&self, l: f64) -> f64 {
        if self.family.compact_support() {
            self.width.min(l)
        } else {
            l
        }
    }

    pub fn support(&self, l: f64) -> SupportInfo {
        SupportInfo {
            radius: self.support_radius(l),
        }
    }

    /// Kernel value at distance `d` in `[0, L]`.
    pub fn eval(&self, d: f64, l: f64) -> Result<f64> {
        if !d.is_finite() || d < 0.0 || d > l {
            return Err(Error::invalid(format!(
                "kernel evaluated outside [0, {l}]: d = {d}"
            )));
        }
        Ok(self.eval_unchecked(d, l))
    }

    /// Same as [`eval`](Self::eval) without the domain check. Internal hot
    /// paths call this after the distance has already been clamped to `[0, L]`.
    pub(crate) fn eval_unchecked(&self, d: f64, l: f64) -> f64 {
        let a = self.amplitude;
        let w = self.width;
        match self.family {
            KernelFamily::Gaussian => a * (-d * d / (2.0 * w * w)).exp(),
            KernelFamily::RaisedCosine => a * 0.5 * (1.0 + (std::f64::consts::PI * d / l).cos()),
            KernelFamily::QuadraticBump => {
                let t = d / w;
                if t < 1.0 {
                    a * (1.0 - t * t)
                } else {
                    0.0
                }
            }
            KernelFamily::CosineBump => {
                if d < w {
                    a * (std::f64::consts::FRAC_PI_2 * d / w).cos()
                } else {
                    0.0
                }
            }
        }
    }

    /// Extension of the kernel to distances in `[0, 2L]`, as used by the
    /// community-length feasibility test, which probes twice the arc length.
    /// The gaussian decays by its own law; the other families are zero past
    /// their natural support (the raised cosine already vanishes at `L`).
    pub(crate) fn eval_tail(&self, d: f64, l: f64) -> f64 {
        if d <= l {
            self.eval_unchecked(d, l)
        } else {
            match self.family {
                KernelFamily::Gaussian => {
                    self.amplitude * (-d * d / (2.0 * self.width * self.width)).exp()
                }
                _ => 0.0,
            }
        }
    }

    /// First derivative with respect to distance, on the interior of the
    /// domain (and of the support, for bump families).
    pub fn deriv(&self, d: f64, l: f64) -> Result<f64> {
        self.check_interior(d, l)?;
        let a = self.amplitude;
        let w = self.width;
        Ok(match self.family {
            KernelFamily::Gaussian => -a * d / (w * w) * (-d * d / (2.0 * w * w)).exp(),
            KernelFamily::RaisedCosine => {
                let pi = std::f64::consts::PI;
                -a * 0.5 * pi / l * (pi * d / l).sin()
            }
            KernelFamily::QuadraticBump => -2.0 * a * d / (w * w),
            KernelFamily::CosineBump => {
                let h = std::f64::consts::FRAC_PI_2 / w;
                -a * h * (h * d).sin()
            }
        })
    }

    /// Second derivative with respect to distance, same domain as [`deriv`](Self::deriv).
    pub fn second_deriv(&self, d: f64, l: f64) -> Result<f64> {
        self.check_interior(d, l)?;
        let a = self.amplitude;
        let w = self.width;
        Ok(match self.family {
            KernelFamily::Gaussian => {
                let w2 = w * w;
                a * (d * d / (w2 * w2) - 1.0 / w2) * (-d * d / (2.0 * w2)).exp()
            }
            KernelFamily::RaisedCosine => {
                let pi = std::f64::consts::PI;
                -a * 0.5 * (pi / l) * (pi / l) * (pi * d / l).cos()
            }
            KernelFamily::QuadraticBump => -2.0 * a / (w * w),
            KernelFamily::CosineBump => {
                let h = std::f64::consts::FRAC_PI_2 / w;
                -a * h * h * (h * d).cos()
            }
        })
    }

    /// Derivative without the domain/boundary checks; evaluates the analytic
    /// branch formula, returning 0 outside a bump's support.
    pub(crate) fn deriv_unchecked(&self, d: f64, l: f64) -> f64 {
        if self.family.compact_support() && d >= self.width {
            return 0.0;
        }
        let a = self.amplitude;
        let w = self.width;
        match self.family {
            KernelFamily::Gaussian => -a * d / (w * w) * (-d * d / (2.0 * w * w)).exp(),
            KernelFamily::RaisedCosine => {
                let pi = std::f64::consts::PI;
                -a * 0.5 * pi / l * (pi * d / l).sin()
            }
            KernelFamily::QuadraticBump => -2.0 * a * d / (w * w),
            KernelFamily::CosineBump => {
                let h = std::f64::consts::FRAC_PI_2 / w;
                -a * h * (h * d).sin()
            }
        }
    }

    fn check_interior(&self, d: f64, l: f64) -> Result<()> {
        if !d.is_finite() || d < 0.0 || d > l {
            return Err(Error::invalid(format!(
                "kernel derivative outside [0, {l}]: d = {d}"
            )));
        }
        // One-sided derivatives at the edge of a bump's support are out of
        // contract: the bump families are not differentiable there.
        if self.family.compact_support() && d >= self.width {
            return Err(Error::SupportBoundary { d });
        }
        Ok(())
    }

    /// Checks the admissibility rules for the given role, both analytically
    /// (per family) and on a 1024-point grid.
    pub fn validate(&self, role: KernelRole, l: f64) -> ValidationReport {
        let mut checks = Vec::new();
        let radius = self.support_radius(l);

        // Range: all families map into [0, amplitude] ⊆ [0, 1] by construction;
        // ability kernels additionally need amplitude strictly below 1.
        let amp_ok = match role {
            KernelRole::AbilityG => self.amplitude < 1.0,
            _ => self.amplitude <= 1.0,
        };
        checks.push(PropertyCheck::flag(
            "amplitude range",
            amp_ok,
            self.amplitude,
        ));

        let n = 1024usize;
        let monotone_span = match role {
            // Interest kernels must decrease over the whole metric range.
            KernelRole::InterestF => l,
            // Ability and filter kernels over their support.
            _ => radius,
        };
        let mut strictly_decreasing = true;
        let mut non_increasing = true;
        let mut worst_step = f64::NEG_INFINITY;
        let mut prev = self.eval_unchecked(0.0, l);
        for i in 1..=n {
            let d = monotone_span * i as f64 / n as f64;
            let v = self.eval_unchecked(d.min(l), l);
            let step = v - prev;
            worst_step = worst_step.max(step);
            if step >= 0.0 {
                strictly_decreasing = false;
            }
            if step > 1e-15 {
                non_increasing = false;
            }
            prev = v;
        }
        match role {
            KernelRole::FilterH => {
                checks.push(PropertyCheck::flag(
                    "non-increasing",
                    non_increasing,
                    worst_step,
                ));
            }
            _ => {
                checks.push(PropertyCheck::flag(
                    "strictly decreasing",
                    strictly_decreasing,
                    worst_step,
                ));
            }
        }

        // Twice differentiable on the relevant interior; bump families fail
        // this on [0, L] as interest kernels (kink at the support edge).
        let smooth_ok = match role {
            KernelRole::InterestF => !self.family.compact_support(),
            _ => true,
        };
        checks.push(PropertyCheck::flag("twice differentiable", smooth_ok, 0.0));

        // Concavity on the interior of the support, ability kernels only.
        if role == KernelRole::AbilityG {
            let mut concave = true;
            let mut worst = (f64::NEG_INFINITY, 0.0);
            for i in 1..n {
                let d = radius * i as f64 / n as f64;
                if let Ok(s) = self.second_deriv(d, l) {
                    if s > 1e-12 {
                        concave = false;
                    }
                    if s > worst.0 {
                        worst = (s, d);
                    }
                }
            }
            checks.push(
                PropertyCheck::flag("concave on support", concave, worst.0).with_location(worst.1),
            );
        }

        ValidationReport {
            role: role.name().to_string(),
            checks,
        }
    }

    /// Shorthand: validation that returns an error when any check fails.
    pub fn require(&self, role: KernelRole, l: f64) -> Result<()> {
        let report = self.validate(role, l);
        if report.pass() {
            Ok(())
        } else {
            Err(Error::KernelValidation {
                role: report.role.clone(),
                detail: report.failures().join("; "),
            })
        }
    }
}

/// The support of a kernel around its center: content farther than `radius`
/// gets weight zero. Ability kernels meant to operate inside a community
/// need `radius` at most the community length.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportInfo {
    pub radius: f64,
}

/// A single named check with the numeric evidence that decided it.
#[derive(Clone, Debug, Serialize)]
pub struct PropertyCheck {
    pub name: String,
    pub pass: bool,
    /// The decisive quantity (worst residual, worst increment, ...).
    pub value: f64,
    /// Where on the grid the worst value occurred, when meaningful.
    pub location: Option<f64>,
}

impl PropertyCheck {
    pub fn flag(name: &str, pass: bool, value: f64) -> Self {
        PropertyCheck {
            name: name.to_string(),
            pass,
            value,
            location: None,
        }
    }

    pub fn with_location(mut self, at: f64) -> Self {
        self.location = Some(at);
        self
    }
}

/// Outcome of validating one kernel for one role. Failures are reported,
/// never thrown.
#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub role: String,
    pub checks: Vec<PropertyCheck>,
}

impl ValidationReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| match c.location {
                Some(at) => format!("{} (value {:.3e} at d = {:.6})", c.name, c.value, at),
                None => format!("{} (value {:.3e})", c.name, c.value),
            })
            .collect()
    }
}
