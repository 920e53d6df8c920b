//! Optimal content production inside an interval community. Each producer
//! concentrates its whole rate budget on the single type that maximizes
//! relevance times demand, which sits between the producer's own location
//! and the community midpoint.

use rayon::prelude::*;
use serde::Serialize;

use crate::demand::DemandProfile;
use crate::error::{Error, Result};
use crate::geometry::TorusPoint;
use crate::kernels::{KernelRole, KernelSpec, PropertyCheck};
use crate::numerics::{golden_section_max, trapezoid_weights};

/// Where one producer ends up: its best content type, the factored value
/// there, and the gate decision (produce at full budget or not at all).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ProductionTarget {
    pub y: TorusPoint,
    pub x_star: TorusPoint,
    /// `q(x*|y)`: relevance of the producer's output at the chosen type.
    pub relevance: f64,
    /// `P(x*)`: community demand at the chosen type.
    pub demand: f64,
    /// `relevance * demand`, the maximized objective.
    pub objective: f64,
    /// Full budget if producing is worthwhile at the aggregate reading cost,
    /// zero otherwise.
    pub gate_rate: f64,
}

/// Finds `argmax_x q(x|y) * P(x)` for a producer at `y`.
///
/// The search bracket is the closed span from `y` to the community midpoint,
/// clipped to the support of `q(.|y)`; the objective is strictly concave
/// there, so a golden-section search converges cleanly. The returned target
/// has `gate_rate = 0`; apply [`production_gate`] afterwards.
pub fn best_content_type(
    y: TorusPoint,
    profile: &DemandProfile,
    g: &KernelSpec,
) -> Result<ProductionTarget> {
    let ring = profile.ring;
    g.require(KernelRole::AbilityG, ring.half_len())?;
    Ok(best_content_type_unchecked(y, profile, g))
}

pub(crate) fn best_content_type_unchecked(
    y: TorusPoint,
    profile: &DemandProfile,
    g: &KernelSpec,
) -> ProductionTarget {
    let ring = profile.ring;
    let arc = profile.arc;
    let l = ring.half_len();
    let u_mid = 0.5 * arc.length();
    let u_y = arc.local(&ring, y);
    let radius = g.support_radius(l);

    // Bracket in arc-local coordinates.
    let (lo, hi) = if u_y <= u_mid {
        (u_y, u_mid.min(u_y + radius))
    } else {
        (u_mid.max(u_y - radius), u_y)
    };

    let eval = |u: f64| {
        let x = arc.offset(&ring, u);
        let q = g.eval_unchecked(ring.distance(x, y).min(l), l);
        q * profile.eval(x)
    };

    let make = |u: f64| {
        let x = arc.offset(&ring, u);
        let relevance = g.eval_unchecked(ring.distance(x, y).min(l), l);
        let demand = profile.eval(x);
        ProductionTarget {
            y,
            x_star: x,
            relevance,
            demand,
            objective: relevance * demand,
            gate_rate: 0.0,
        }
    };

    let width = hi - lo;
    if width <= 0.0 {
        // Zero-width bracket: the producer sits at the midpoint (or has no
        // room to shift); its own location is the optimum.
        return make(u_y);
    }

    // Golden-section brackets the concave objective; a bisection polish on
    // the analytic first-order condition then pins the optimum to machine
    // precision, which keeps downstream difference quotients grid-stable.
    let (u_star, best) = golden_section_max(lo, hi, width * 1e-3, eval);
    let u_star = polish_stationary_point(u_star, lo, hi, width, u_y, profile, g).unwrap_or(u_star);

    // Flat objectives (degenerate configurations only) resolve toward the
    // producer's own location for a deterministic answer.
    let u_home = if u_y <= u_mid { lo } else { hi };
    if eval(u_home) >= best.max(eval(u_star)) * (1.0 - 1e-13) {
        return make(u_home);
    }
    make(u_star)
}

/// First-order condition of the production objective in arc-local
/// coordinates: `sign(u - u_y) g'(|u - u_y|) P(x) + g(|u - u_y|) P'(x)`.
fn objective_slope(u: f64, u_y: f64, profile: &DemandProfile, g: &KernelSpec) -> f64 {
    let ring = profile.ring;
    let l = ring.half_len();
    let x = profile.arc.offset(&ring, u);
    let e = (u - u_y).abs().min(l);
    let sign = if u >= u_y { 1.0 } else { -1.0 };
    sign * g.deriv_unchecked(e, l) * profile.eval(x) + g.eval_unchecked(e, l) * profile.slope(x)
}

/// Bisection on the objective derivative inside a small window around the
/// golden-section result. Returns `None` when the window does not straddle a
/// sign change (optimum at a bracket end, or degenerate objective).
fn polish_stationary_point(
    u_star: f64,
    lo: f64,
    hi: f64,
    width: f64,
    u_y: f64,
    profile: &DemandProfile,
    g: &KernelSpec,
) -> Option<f64> {
    let pad = 4e-3 * width;
    let mut a = (u_star - pad).max(lo + 1e-12 * width);
    let mut b = (u_star + pad).min(hi - 1e-12 * width);
    if b <= a {
        return None;
    }
    let mut fa = objective_slope(a, u_y, profile, g);
    let fb = objective_slope(b, u_y, profile, g);
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() {
        return None;
    }
    for _ in 0..80 {
        let m = 0.5 * (a + b);
        let fm = objective_slope(m, u_y, profile, g);
        if fm == 0.0 {
            return Some(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
        if b - a < 1e-15 * width.max(1.0) {
            break;
        }
    }
    Some(0.5 * (a + b))
}

/// Opens the production gate iff the maximized objective covers the
/// aggregate reading cost `alpha_C * c` the producer imposes on the
/// community.
pub fn production_gate(
    mut target: ProductionTarget,
    alpha_c: f64,
    c: f64,
    e_q: f64,
) -> ProductionTarget {
    target.gate_rate = if target.objective - alpha_c * c >= 0.0 {
        e_q
    } else {
        0.0
    };
    target
}

/// The full production map of a community: gated targets for a uniform
/// producer grid over the arc (endpoints included).
#[derive(Clone, Debug, Serialize)]
pub struct ProductionMap {
    pub arc: crate::geometry::Arc,
    pub e_q: f64,
    pub alpha_c: f64,
    pub c: f64,
    pub targets: Vec<ProductionTarget>,
    /// Arc-local offsets of the producer grid, ascending.
    pub us: Vec<f64>,
}

pub fn production_map(
    profile: &DemandProfile,
    g: &KernelSpec,
    e_q: f64,
    alpha_c: f64,
    c: f64,
    y_grid_n: usize,
) -> Result<ProductionMap> {
    if y_grid_n < 128 {
        return Err(Error::invalid(format!(
            "production map needs at least 128 producers, got {y_grid_n}"
        )));
    }
    let ring = profile.ring;
    g.require(KernelRole::AbilityG, ring.half_len())?;
    let arc = profile.arc;
    let step = arc.length() / (y_grid_n - 1) as f64;
    let us: Vec<f64> = (0..y_grid_n).map(|i| i as f64 * step).collect();
    let targets: Vec<ProductionTarget> = us
        .par_iter()
        .map(|&u| {
            let y = arc.offset(&ring, u);
            let t = best_content_type_unchecked(y, profile, g);
            production_gate(t, alpha_c, c, e_q)
        })
        .collect();
    Ok(ProductionMap {
        arc,
        e_q,
        alpha_c,
        c,
        targets,
        us,
    })
}

impl ProductionMap {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn fully_gated(&self) -> bool {
        self.targets.iter().all(|t| t.gate_rate > 0.0)
    }

    /// Trapezoid weights matching the producer grid.
    pub fn weights(&self) -> Vec<f64> {
        trapezoid_weights(self.targets.len(), self.arc.length())
    }

    /// Arc-local offset of each chosen content type, same order as `targets`.
    pub fn target_offsets(&self, ring: &crate::geometry::Ring) -> Vec<f64> {
        self.targets
            .iter()
            .map(|t| self.arc.local(ring, t.x_star))
            .collect()
    }

    /// The image interval of the map in arc-local coordinates
    /// `(first target, last target)`; the supply support.
    pub fn image_span(&self, ring: &crate::geometry::Ring) -> (f64, f64) {
        let us = self.target_offsets(ring);
        (us[0], us[us.len() - 1])
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "y,x_star,objective,gate_rate")?;
        for t in &self.targets {
            writeln!(
                w,
                "{},{},{},{}",
                t.y.coord(),
                t.x_star.coord(),
                t.objective,
                t.gate_rate
            )?;
        }
        Ok(())
    }

    /// Structural checks: targets between producer and midpoint, strict
    /// monotonicity per half, producer-to-target distance shrinking toward
    /// the midpoint, and continuity at the grid scale.
    pub fn property_report(&self, ring: &crate::geometry::Ring) -> Vec<PropertyCheck> {
        let n = self.targets.len();
        let u_mid = 0.5 * self.arc.length();
        let xs = self.target_offsets(ring);
        let step = self.us[1] - self.us[0];
        let slack = 1e-7 * self.arc.length();

        let mut between = true;
        let mut worst_between = f64::NEG_INFINITY;
        for (u, x) in self.us.iter().zip(&xs) {
            let (lo, hi) = if *u <= u_mid {
                (*u, u_mid)
            } else {
                (u_mid, *u)
            };
            let excess = (lo - x).max(x - hi);
            worst_between = worst_between.max(excess);
            if excess > slack {
                between = false;
            }
        }

        let mut monotone = true;
        let mut worst_step = f64::INFINITY;
        for i in 1..n {
            // The map is increasing across the whole arc when it is increasing
            // on each half, since both halves meet at the midpoint.
            let d = xs[i] - xs[i - 1];
            worst_step = worst_step.min(d);
            if d <= -slack {
                monotone = false;
            }
        }

        let mid = self.arc.mid(ring);
        let mut shrink = true;
        let mut worst_shrink = f64::NEG_INFINITY;
        for i in 1..n {
            let (a, b) = (&self.targets[i - 1], &self.targets[i]);
            let da = ring.distance(a.y, mid);
            let db = ring.distance(b.y, mid);
            let ra = ring.distance(a.y, a.x_star);
            let rb = ring.distance(b.y, b.x_star);
            // Closer to mid must mean a (weakly) shorter shift.
            let violation = if db < da { rb - ra } else { ra - rb };
            worst_shrink = worst_shrink.max(violation);
            if violation > slack {
                shrink = false;
            }
        }

        let mut continuous = true;
        let mut max_jump = 0.0f64;
        for i in 1..n {
            let jump = (xs[i] - xs[i - 1]).abs();
            max_jump = max_jump.max(jump);
            if jump > 20.0 * step {
                continuous = false;
            }
        }

        vec![
            PropertyCheck::flag("target between producer and mid", between, worst_between),
            PropertyCheck::flag("monotone target map", monotone, worst_step),
            PropertyCheck::flag("shift shrinks toward mid", shrink, worst_shrink),
            PropertyCheck::flag("continuous at grid scale", continuous, max_jump),
        ]
    }
}
