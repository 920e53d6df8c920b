//! The optimal supply of a community is an atomic measure: every producer
//! concentrates its budget on one content type. Integrals against it are
//! exact sums over the production map (the weak form); an explicit density
//! on the image interval is recovered by inverting the monotone target map
//! (the pushforward form) for property verification and export.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Arc, Ring, TorusPoint};
use crate::kernels::PropertyCheck;
use crate::numerics::GridFunction;
use crate::production::ProductionMap;

/// Integrates a test function against the supply measure:
/// `sum_z w_z * gate(z) * q(x*_z|z) * phi(x*_z)` over the producer grid.
pub fn supply_weak_integral<F: Fn(TorusPoint) -> f64>(map: &ProductionMap, phi: F) -> f64 {
    let weights = map.weights();
    let mut acc = 0.0;
    for (w, t) in weights.iter().zip(&map.targets) {
        if t.gate_rate > 0.0 {
            acc += w * t.gate_rate * t.relevance * phi(t.x_star);
        }
    }
    acc
}

/// Total relevant supply mass, i.e. the weak integral of 1.
pub fn supply_mass(map: &ProductionMap) -> f64 {
    supply_weak_integral(map, |_| 1.0)
}

/// The supply measure in density form on its support interval.
#[derive(Clone, Debug, Serialize)]
pub struct SupplyRepresentation {
    pub ring: Ring,
    /// The community arc.
    pub arc: Arc,
    /// Support interval in arc-local offsets (subset of `[0, arc.length()]`).
    pub support_lo: f64,
    pub support_hi: f64,
    /// Density sampled on a uniform grid over the support; `xs` hold
    /// arc-local offsets.
    pub density: GridFunction,
    /// Cells where the inverse-map derivative fell below the configured
    /// floor; such cells carry a clamped value and are excluded from
    /// concavity checks.
    pub flagged: Vec<bool>,
}

impl SupplyRepresentation {
    pub fn support_arc(&self) -> Arc {
        let start = self.arc.offset(&self.ring, self.support_lo);
        Arc::new(&self.ring, start, self.support_hi - self.support_lo)
            .expect("support of a valid map is a valid arc")
    }

    pub fn mid_local(&self) -> f64 {
        0.5 * self.arc.length()
    }

    /// Trapezoid mass of the density over its support.
    pub fn mass(&self) -> f64 {
        let n = self.density.len();
        let h = self.density.step();
        let mut acc = 0.0;
        for i in 0..n {
            let w = if i == 0 || i == n - 1 { 0.5 * h } else { h };
            acc += w * self.density.values[i];
        }
        acc
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x,Q_star,flagged")?;
        for (i, (u, v)) in self.density.iter().enumerate() {
            let x = self.arc.offset(&self.ring, u).coord();
            writeln!(w, "{x},{v},{}", self.flagged[i])?;
        }
        Ok(())
    }
}

/// Recovers the pushforward density `Q*(x) = E_q q(x|y(x)) / |dx*/dy|` by
/// inverting the sampled target map. The map must be strictly monotone in
/// arc-local coordinates (either orientation); derivative estimates come
/// from central differences on the producer grid.
pub fn supply_density(
    ring: &Ring,
    map: &ProductionMap,
    x_grid_n: usize,
    jacobian_floor: f64,
) -> Result<SupplyRepresentation> {
    if x_grid_n < 16 {
        return Err(Error::invalid("density grid needs at least 16 points"));
    }
    if !map.fully_gated() {
        return Err(Error::invalid(
            "density form requires a fully gated production map",
        ));
    }
    let n = map.len();
    let mut xs = map.target_offsets(ring);
    let mut us = map.us.clone();
    let mut relevance: Vec<f64> = map.targets.iter().map(|t| t.relevance).collect();

    // Normalize to an increasing map; a mirrored (decreasing) map is still a
    // valid pushforward.
    if xs[n - 1] < xs[0] {
        xs.reverse();
        us.reverse();
        relevance.reverse();
    }
    let span = xs[n - 1] - xs[0];
    let wiggle = 1e-9 * map.arc.length().max(1.0);
    for i in 1..n {
        if xs[i] < xs[i - 1] - wiggle {
            return Err(Error::NonMonotoneMap {
                left: i - 1,
                right: i,
            });
        }
    }
    if span <= 0.0 {
        return Err(Error::invalid("target map image has zero width"));
    }

    // Node-wise |dx*/dy| by central differences (one-sided at the ends).
    let slope: Vec<f64> = (0..n)
        .map(|i| {
            let (a, b) = if i == 0 {
                (0, 1)
            } else if i == n - 1 {
                (n - 2, n - 1)
            } else {
                (i - 1, i + 1)
            };
            ((xs[b] - xs[a]) / (us[b] - us[a])).abs()
        })
        .collect();

    let step = span / (x_grid_n - 1) as f64;
    let grid_xs: Vec<f64> = (0..x_grid_n).map(|i| xs[0] + i as f64 * step).collect();
    let mut values = Vec::with_capacity(x_grid_n);
    let mut flagged = Vec::with_capacity(x_grid_n);
    for &x in &grid_xs {
        // Locate the bracketing map cell.
        let j = match xs.binary_search_by(|p| p.partial_cmp(&x).unwrap()) {
            Ok(j) => j.min(n - 2),
            Err(j) => j.saturating_sub(1).min(n - 2),
        };
        let cell = (xs[j + 1] - xs[j]).max(f64::MIN_POSITIVE);
        let t = ((x - xs[j]) / cell).clamp(0.0, 1.0);
        let q = relevance[j] + t * (relevance[j + 1] - relevance[j]);
        let s = slope[j] + t * (slope[j + 1] - slope[j]);
        let singular = s < jacobian_floor;
        let value = map.e_q * q / s.max(jacobian_floor);
        values.push(value);
        flagged.push(singular);
    }

    Ok(SupplyRepresentation {
        ring: *ring,
        arc: map.arc,
        support_lo: xs[0],
        support_hi: xs[n - 1],
        density: GridFunction::new(grid_xs, values),
        flagged,
    })
}

/// Symmetry, concavity and support-inclusion checks for the density form.
pub fn supply_properties_check(
    rep: &SupplyRepresentation,
    symmetry_rel: f64,
) -> Vec<PropertyCheck> {
    let n = rep.density.len();
    let peak = rep.density.max_value();

    // Support inside the community arc.
    let included = rep.support_lo >= -1e-9 && rep.support_hi <= rep.arc.length() + 1e-9;

    // Symmetry about the arc midpoint: the support itself is symmetric, so
    // mirrored grid indices face each other.
    let mid = rep.mid_local();
    let support_sym =
        ((mid - rep.support_lo) - (rep.support_hi - mid)).abs() <= 1e-3 * rep.arc.length();
    let mut sym_residual = 0.0f64;
    for i in 0..n / 2 {
        let j = n - 1 - i;
        sym_residual = sym_residual.max((rep.density.values[i] - rep.density.values[j]).abs());
    }
    let symmetric = support_sym && sym_residual <= symmetry_rel * peak.max(f64::MIN_POSITIVE);

    // Discrete concavity on the interior, skipping flagged neighborhoods.
    let mut concave = true;
    let mut worst = f64::NEG_INFINITY;
    for i in 1..n.saturating_sub(1) {
        if rep.flagged[i - 1] || rep.flagged[i] || rep.flagged[i + 1] {
            continue;
        }
        let second =
            rep.density.values[i + 1] - 2.0 * rep.density.values[i] + rep.density.values[i - 1];
        worst = worst.max(second);
        // Interpolation noise scales with the grid; allow a small positive slack.
        if second > 1e-4 * peak.max(1.0) {
            concave = false;
        }
    }

    vec![
        PropertyCheck::flag("support inside community arc", included, rep.support_hi),
        PropertyCheck::flag("symmetric about mid", symmetric, sym_residual),
        PropertyCheck::flag("concave on support interior", concave, worst),
    ]
}
