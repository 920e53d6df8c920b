//! Oracle helpers shared by the integration tests. Everything here is an
//! independent computational route: demand through the error function
//! instead of panel quadrature, argmax by dense scan plus derivative
//! bisection on the closed form, integrals by midpoint/trapezoid refinement.

use community_forge::demand::{demand_profile, DemandProfile};
use community_forge::geometry::{Arc, Ring};
use community_forge::kernels::KernelSpec;
use community_forge::numerics::NumericsConfig;
use community_forge::production::{production_map, ProductionMap};

pub const F_WIDTH: f64 = 0.3;
pub const G_AMP: f64 = 0.9;
pub const G_WIDTH: f64 = 0.25;
pub const COST: f64 = 0.05;

pub fn ring() -> Ring {
    Ring::new(1.0).unwrap()
}

pub fn interest() -> KernelSpec {
    KernelSpec::gaussian(1.0, F_WIDTH).unwrap()
}

pub fn ability() -> KernelSpec {
    KernelSpec::quadratic_bump(G_AMP, G_WIDTH).unwrap()
}

/// The canonical standalone community `[-0.25, 0.25]`.
pub fn canonical_arc() -> Arc {
    Arc::from_coords(&ring(), -0.25, 0.5).unwrap()
}

pub fn canonical_profile(grid_n: usize) -> DemandProfile {
    demand_profile(
        &ring(),
        &canonical_arc(),
        1.0,
        &interest(),
        grid_n,
        &NumericsConfig::default(),
    )
    .unwrap()
}

pub fn canonical_map(y_grid_n: usize) -> ProductionMap {
    let profile = canonical_profile(512);
    production_map(&profile, &ability(), 1.0, 0.5, COST, y_grid_n).unwrap()
}

// ---------------------------------------------------------------------------
// Oracle route: closed forms on a centered community [-delta, delta].
// ---------------------------------------------------------------------------

/// Demand of the centered community via the error function (exact up to
/// `erf` accuracy); valid while `|x| + delta <= L` so no geodesic wraps.
pub fn oracle_demand(delta: f64, x: f64) -> f64 {
    let w = F_WIDTH;
    let s = std::f64::consts::SQRT_2 * w;
    w * (std::f64::consts::PI / 2.0).sqrt()
        * (libm::erf((delta - x) / s) + libm::erf((delta + x) / s))
}

fn oracle_demand_slope(delta: f64, x: f64) -> f64 {
    let gauss = |d: f64| (-d * d / (2.0 * F_WIDTH * F_WIDTH)).exp();
    gauss(delta + x) - gauss(delta - x)
}

fn bump(e: f64) -> f64 {
    let t = e.abs() / G_WIDTH;
    if t < 1.0 {
        G_AMP * (1.0 - t * t)
    } else {
        0.0
    }
}

fn bump_slope(e: f64) -> f64 {
    -2.0 * G_AMP * e / (G_WIDTH * G_WIDTH)
}

/// Optimal content type for an agent of the centered community, by bisection
/// on the first-order condition of `g(x - y) * P(x)`.
pub fn oracle_target(delta: f64, y: f64) -> f64 {
    if y == 0.0 {
        return 0.0;
    }
    let flip = y > 0.0;
    let y = -y.abs();
    let slope = |x: f64| {
        let e = x - y;
        bump_slope(e) * oracle_demand(delta, x) + bump(e) * oracle_demand_slope(delta, x)
    };
    let mut lo = y + 1e-15;
    let mut hi = -1e-15;
    if slope(lo) <= 0.0 {
        return if flip { -y } else { y };
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    if flip {
        -x
    } else {
        x
    }
}

/// Refined trapezoid of `z -> weight(z)` over `[-delta, delta]`.
pub fn oracle_trapezoid<F: Fn(f64) -> f64>(delta: f64, n: usize, f: F) -> f64 {
    let h = 2.0 * delta / n as f64;
    let mut acc = 0.5 * (f(-delta) + f(delta));
    for i in 1..n {
        acc += f(-delta + i as f64 * h);
    }
    acc * h
}
