//! Per-agent utility rates and the community-level balance identity: the
//! aggregate utility from reading equals the aggregate utility from
//! producing, and both equal the demand-supply overlap integral minus the
//! total reading-cost flow.

use serde::Serialize;

use crate::demand::DemandProfile;
use crate::error::{Error, Result};
use crate::geometry::TorusPoint;
use crate::kernels::PropertyCheck;
use crate::numerics::integrate_panels;
use crate::production::{ProductionMap, ProductionTarget};

/// Consumption utility rate of an agent at `y`: expected interesting-content
/// rate from the community supply, minus the reading cost of everything the
/// community produces. Evaluated in weak form over the production map.
pub fn consumption_utility(
    y: TorusPoint,
    map: &ProductionMap,
    profile: &DemandProfile,
    c: f64,
) -> f64 {
    let ring = profile.ring;
    let l = ring.half_len();
    let f = &profile.interest;
    let weights = map.weights();
    let mut reward = 0.0;
    let mut produced = 0.0;
    for (w, t) in weights.iter().zip(&map.targets) {
        if t.gate_rate > 0.0 {
            let p = f.eval_unchecked(ring.distance(t.x_star, y), l);
            reward += w * t.gate_rate * t.relevance * p;
            produced += w * t.gate_rate;
        }
    }
    profile.e_p * (reward - c * produced)
}

/// Production utility rate of one producer: rate times net value of the
/// chosen content type; zero when the gate is closed.
pub fn production_utility(target: &ProductionTarget, alpha_c: f64, c: f64) -> f64 {
    target.gate_rate * (target.objective - alpha_c * c)
}

/// Sampled utility rates over the community plus the three aggregate totals.
#[derive(Clone, Debug, Serialize)]
pub struct UtilityProfile {
    pub arc: crate::geometry::Arc,
    /// Arc-local agent offsets (the production-map grid).
    pub us: Vec<f64>,
    pub u_d: Vec<f64>,
    pub u_s: Vec<f64>,
    pub total_d: f64,
    pub total_s: f64,
    pub total_formula: f64,
}

impl UtilityProfile {
    pub fn write_csv<W: std::io::Write>(
        &self,
        ring: &crate::geometry::Ring,
        mut w: W,
    ) -> std::io::Result<()> {
        writeln!(w, "y,U_d,U_s")?;
        for i in 0..self.us.len() {
            let y = self.arc.offset(ring, self.us[i]).coord();
            writeln!(w, "{y},{},{}", self.u_d[i], self.u_s[i])?;
        }
        Ok(())
    }
}

/// Computes both utility rate profiles and the three totals.
///
/// `total_s` integrates the per-producer utilities with the trapezoid rule
/// on the map grid, `total_formula` evaluates the demand-supply overlap in
/// weak form, and `total_d` integrates the (smooth) consumption rate with
/// composite Gauss-Legendre. The three routes share no panelization, so
/// their agreement exercises the whole quadrature stack.
pub fn utility_profile(profile: &DemandProfile, map: &ProductionMap) -> Result<UtilityProfile> {
    let ring = profile.ring;
    let arc = profile.arc;
    let c = map.c;
    let len = arc.length();

    let u_d: Vec<f64> = map
        .us
        .iter()
        .map(|&u| consumption_utility(arc.offset(&ring, u), map, profile, c))
        .collect();
    let u_s: Vec<f64> = map
        .targets
        .iter()
        .map(|t| production_utility(t, map.alpha_c, c))
        .collect();

    let weights = map.weights();
    let total_s: f64 = weights.iter().zip(&u_s).map(|(w, v)| w * v).sum();

    let beta_c = map.e_q * len;
    let overlap: f64 = weights
        .iter()
        .zip(&map.targets)
        .map(|(w, t)| w * t.gate_rate * t.relevance * t.demand)
        .sum();
    let total_formula = overlap - map.alpha_c * beta_c * c;

    let max_panel = (0.5 * ring.half_len())
        .min(4.0 * profile.interest.width)
        .max(1e-3);
    let total_d = integrate_panels(
        0.0,
        len,
        &[0.5 * len],
        max_panel,
        profile.quadrature_order,
        |u| consumption_utility(arc.offset(&ring, u), map, profile, c),
    );

    Ok(UtilityProfile {
        arc,
        us: map.us.clone(),
        u_d,
        u_s,
        total_d,
        total_s,
        total_formula,
    })
}

/// The balance identity `(total_d, total_s, formula)`. Only meaningful for
/// fully gated communities; a disagreement beyond the failure threshold is
/// reported as an integrity defect in the quadrature stack.
pub fn utility_balance(
    profile: &DemandProfile,
    map: &ProductionMap,
    fail_rel: f64,
) -> Result<(f64, f64, f64)> {
    if !map.fully_gated() {
        return Err(Error::invalid(
            "balance identity holds for fully gated communities only",
        ));
    }
    let up = utility_profile(profile, map)?;
    up.check_balance(fail_rel)?;
    Ok((up.total_d, up.total_s, up.total_formula))
}

impl UtilityProfile {
    /// Asserts the three totals agree; failure points at a defect in the
    /// quadrature stack.
    pub fn check_balance(&self, fail_rel: f64) -> Result<()> {
        let scale = self.total_d.abs().max(self.total_s.abs()).max(1e-12);
        let spread = (self.total_d - self.total_s)
            .abs()
            .max((self.total_d - self.total_formula).abs())
            .max((self.total_s - self.total_formula).abs());
        if spread > fail_rel * scale {
            return Err(Error::Integrity(format!(
                "utility totals disagree: d={}, s={}, formula={}",
                self.total_d, self.total_s, self.total_formula
            )));
        }
        Ok(())
    }
}

/// Peak and monotonicity checks: both rates top out at the community
/// midpoint and fall off with distance from it, on either side.
pub fn utility_peak_check(profile: &UtilityProfile) -> Vec<PropertyCheck> {
    let n = profile.us.len();
    let mid = 0.5 * profile.arc.length();
    let step = profile.us[1] - profile.us[0];

    let peaked = |vals: &[f64]| {
        let mut best = 0;
        for i in 0..n {
            if vals[i] > vals[best] {
                best = i;
            }
        }
        (profile.us[best] - mid).abs() <= step + 1e-12
    };

    // Sort by distance from mid; utilities must be non-increasing along it.
    let monotone = |vals: &[f64]| {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| {
            let di = (profile.us[i] - mid).abs();
            let dj = (profile.us[j] - mid).abs();
            di.partial_cmp(&dj).unwrap()
        });
        let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
        let mut worst = f64::NEG_INFINITY;
        for k in 1..n {
            let (near, far) = (order[k - 1], order[k]);
            // Mirror pairs have equal distance; their order is arbitrary.
            if ((profile.us[near] - mid).abs() - (profile.us[far] - mid).abs()).abs() < 0.25 * step
            {
                continue;
            }
            worst = worst.max(vals[far] - vals[near]);
        }
        (worst <= 1e-9 * scale, worst)
    };

    let (mono_d, worst_d) = monotone(&profile.u_d);
    let (mono_s, worst_s) = monotone(&profile.u_s);
    vec![
        PropertyCheck::flag(
            "consumption utility peaks at mid",
            peaked(&profile.u_d),
            0.0,
        ),
        PropertyCheck::flag("production utility peaks at mid", peaked(&profile.u_s), 0.0),
        PropertyCheck::flag("consumption utility monotone toward mid", mono_d, worst_d),
        PropertyCheck::flag("production utility monotone toward mid", mono_s, worst_s),
    ]
}
