//! The content demand profile of an interval community: every member reads
//! at the full budget rate, so demand at a content type is the rate-weighted
//! aggregate interest `E_p * integral over the arc of f(||x - y||) dy`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::geometry::{Arc, Ring, TorusPoint};
use crate::kernels::{KernelRole, KernelSpec, PropertyCheck};
use crate::numerics::{integrate_panels, GridFunction, NumericsConfig};

/// Demand of the community on `arc` for content of type `x`.
///
/// The integrand `y -> f(||x - y||)` is smooth in `y` except where `y` is
/// antipodal to `x`, so the arc is cut there (and at `x` itself, which for
/// sharp kernels is where curvature concentrates) before applying the
/// composite Gauss-Legendre rule.
pub fn demand_at(
    ring: &Ring,
    arc: &Arc,
    e_p: f64,
    f: &KernelSpec,
    x: TorusPoint,
    numerics: &NumericsConfig,
) -> Result<f64> {
    f.require(KernelRole::InterestF, ring.half_len())?;
    Ok(demand_at_unchecked(ring, arc, e_p, f, x, numerics))
}

/// Hot path used after the kernel has been validated once.
pub(crate) fn demand_at_unchecked(
    ring: &Ring,
    arc: &Arc,
    e_p: f64,
    f: &KernelSpec,
    x: TorusPoint,
    numerics: &NumericsConfig,
) -> f64 {
    let len = arc.length();
    // Work in arc-local offsets u in [0, len].
    let u_x = arc.local(ring, x);
    let antipode = ring
        .point(x.coord() + ring.half_len())
        .expect("antipode is finite");
    let u_anti = arc.local(ring, antipode);
    let breaks = [u_x, u_anti];
    // Panels no longer than half the kernel scale keep the 64-node rule
    // deep in its spectral regime even for narrow kernels.
    let max_panel = (0.5 * ring.half_len()).min(4.0 * f.width).max(1e-3);
    let start = arc.start();
    let l = ring.half_len();
    let integral = integrate_panels(
        0.0,
        len,
        &breaks,
        max_panel,
        numerics.quadrature_order,
        |u| {
            let y = ring
                .point(start.coord() + u)
                .expect("arc offsets are finite");
            f.eval_unchecked(ring.distance(x, y), l)
        },
    );
    e_p * integral
}

/// Closed-form demand for the gaussian family, via the error function.
///
/// This is a cross-check of the quadrature machinery, not the reference
/// path: it integrates each geodesic branch of the torus metric exactly.
pub fn demand_at_gaussian_closed_form(
    ring: &Ring,
    arc: &Arc,
    e_p: f64,
    f: &KernelSpec,
    x: TorusPoint,
) -> f64 {
    assert_eq!(f.family, crate::kernels::KernelFamily::Gaussian);
    let w = f.width;
    let a = f.amplitude;
    let len = arc.length();
    let u_x = arc.local(ring, x);
    let antipode = ring
        .point(x.coord() + ring.half_len())
        .expect("antipode is finite");
    let u_anti = arc.local(ring, antipode);

    let mut cuts = vec![0.0, len];
    for c in [u_x, u_anti] {
        if c > 0.0 && c < len {
            cuts.push(c);
        }
    }
    cuts.sort_by(|p, q| p.partial_cmp(q).unwrap());

    let sqrt2w = std::f64::consts::SQRT_2 * w;
    let gauss_mass = |lo: f64, hi: f64, center: f64| {
        a * w
            * (std::f64::consts::PI / 2.0).sqrt()
            * (libm::erf((hi - center) / sqrt2w) - libm::erf((lo - center) / sqrt2w))
    };

    let span = ring.circumference();
    let mut total = 0.0;
    for pair in cuts.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        if hi - lo <= 0.0 {
            continue;
        }
        // Within one panel a single lifted copy of x realises the geodesic.
        let mid = 0.5 * (lo + hi);
        let center = [u_x - span, u_x, u_x + span]
            .into_iter()
            .min_by(|p, q| (p - mid).abs().partial_cmp(&(q - mid).abs()).unwrap())
            .unwrap();
        total += gauss_mass(lo, hi, center);
    }
    e_p * total
}

/// A sampled demand profile over the whole ring, carrying everything needed
/// to re-evaluate the underlying integral exactly at off-grid points.
#[derive(Clone, Debug, Serialize)]
pub struct DemandProfile {
    pub ring: Ring,
    pub arc: Arc,
    pub e_p: f64,
    pub interest: KernelSpec,
    pub grid: GridFunction,
    pub quadrature_order: usize,
    #[serde(skip)]
    numerics: NumericsConfig,
}

impl DemandProfile {
    pub fn numerics(&self) -> &NumericsConfig {
        &self.numerics
    }

    /// Exact (quadrature) demand at an arbitrary point; the sampled grid is
    /// for argmax scans and export only.
    pub fn eval(&self, x: TorusPoint) -> f64 {
        demand_at_unchecked(
            &self.ring,
            &self.arc,
            self.e_p,
            &self.interest,
            x,
            &self.numerics,
        )
    }

    /// Exact spatial derivative of the demand function: integration over the
    /// arc turns the kernel into a difference of boundary terms,
    /// `P'(x) = E_p (f(||x - start||) - f(||x - end||))`.
    /// Valid away from the arc endpoints and their antipodes.
    pub fn slope(&self, x: TorusPoint) -> f64 {
        let l = self.ring.half_len();
        let d_start = self.ring.distance(x, self.arc.start());
        let d_end = self.ring.distance(x, self.arc.end(&self.ring));
        self.e_p
            * (self.interest.eval_unchecked(d_start, l) - self.interest.eval_unchecked(d_end, l))
    }

    pub fn mid(&self) -> TorusPoint {
        self.arc.mid(&self.ring)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x,P(x)")?;
        for (x, v) in self.grid.iter() {
            writeln!(w, "{x},{v}")?;
        }
        Ok(())
    }
}

/// Samples the demand function on a uniform `grid_n`-point ring grid.
pub fn demand_profile(
    ring: &Ring,
    arc: &Arc,
    e_p: f64,
    f: &KernelSpec,
    grid_n: usize,
    numerics: &NumericsConfig,
) -> Result<DemandProfile> {
    if grid_n < 64 {
        return Err(crate::error::Error::invalid(format!(
            "demand grid needs at least 64 points, got {grid_n}"
        )));
    }
    f.require(KernelRole::InterestF, ring.half_len())?;
    let step = ring.circumference() / grid_n as f64;
    let xs: Vec<f64> = (0..grid_n)
        .map(|i| -ring.half_len() + i as f64 * step)
        .collect();
    let values: Vec<f64> = xs
        .par_iter()
        .map(|&x| {
            let p = ring.point(x).expect("grid point is finite");
            demand_at_unchecked(ring, arc, e_p, f, p, numerics)
        })
        .collect();
    Ok(DemandProfile {
        ring: *ring,
        arc: *arc,
        e_p,
        interest: *f,
        grid: GridFunction::new(xs, values),
        quadrature_order: numerics.quadrature_order,
        numerics: *numerics,
    })
}

/// The profile-level property report: symmetry about the arc midpoint,
/// strict concavity inside the arc, and monotone growth toward the midpoint.
#[derive(Clone, Debug, Serialize)]
pub struct DemandReport {
    pub symmetry_residual: f64,
    pub checks: Vec<PropertyCheck>,
}

impl DemandReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

pub fn demand_properties_check(profile: &DemandProfile) -> DemandReport {
    let ring = &profile.ring;
    let mid = profile.mid();
    let peak = profile.grid.max_value();
    let tol = profile.numerics.tolerances;

    // Symmetry: compare P(mid + d) with P(mid - d) via exact evaluation on
    // mirrored offsets, stepping at the grid resolution.
    let n_half = profile.grid.len() / 2;
    let step = profile.grid.step();
    let mut sym_residual = 0.0f64;
    for i in 1..n_half {
        let d = i as f64 * step;
        let plus = profile.eval(ring.point(mid.coord() + d).unwrap());
        let minus = profile.eval(ring.point(mid.coord() - d).unwrap());
        sym_residual = sym_residual.max((plus - minus).abs());
    }
    let sym_ok = sym_residual <= tol.symmetry_rel * peak.max(f64::MIN_POSITIVE);

    // Strict concavity of second differences at grid points interior to the arc.
    let len = profile.arc.length();
    let h = step;
    let mut worst_second = f64::NEG_INFINITY;
    let mut concave = true;
    let mut checked = 0usize;
    for i in 0..profile.grid.len() {
        let x = profile.grid.xs[i];
        let p = ring.point(x).unwrap();
        let u = profile.arc.local(ring, p);
        // Keep a one-step margin so the stencil stays inside the arc.
        if u <= h || u >= len - h {
            continue;
        }
        let n = profile.grid.len();
        let vm = profile.grid.values[(i + n - 1) % n];
        let v0 = profile.grid.values[i];
        let vp = profile.grid.values[(i + 1) % n];
        let second = vp - 2.0 * v0 + vm;
        worst_second = worst_second.max(second);
        checked += 1;
        if second >= -tol.concavity_abs * peak.max(1.0) {
            concave = false;
        }
    }
    let concave = concave && checked > 0;

    // Monotone toward the midpoint on either side, over the whole ring.
    let mut monotone = true;
    let mut worst_mono = f64::NEG_INFINITY;
    let n = profile.grid.len();
    for i in 0..n {
        let xi = ring.point(profile.grid.xs[i]).unwrap();
        let xj = ring.point(profile.grid.xs[(i + 1) % n]).unwrap();
        let di = ring.distance(xi, mid);
        let dj = ring.distance(xj, mid);
        if (di - dj).abs() < 0.25 * h {
            continue; // straddling the peak or the antipode
        }
        let (nearer, farther) = if di < dj {
            (i, (i + 1) % n)
        } else {
            ((i + 1) % n, i)
        };
        let diff = profile.grid.values[farther] - profile.grid.values[nearer];
        worst_mono = worst_mono.max(diff);
        if diff >= 1e-12 * peak.max(1.0) {
            monotone = false;
        }
    }

    DemandReport {
        symmetry_residual: sym_residual,
        checks: vec![
            PropertyCheck::flag("symmetric about mid", sym_ok, sym_residual),
            PropertyCheck::flag("strictly concave inside arc", concave, worst_second),
            PropertyCheck::flag("monotone toward mid", monotone, worst_mono),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelFamily;

    fn setup() -> (Ring, Arc, KernelSpec, NumericsConfig) {
        let ring = Ring::new(1.0).unwrap();
        let arc = Arc::from_coords(&ring, -0.25, 0.5).unwrap();
        let f = KernelSpec::gaussian(1.0, 0.3).unwrap();
        (ring, arc, f, NumericsConfig::default())
    }

    #[test]
    fn full_ring_demand_is_constant() {
        let (ring, _, f, num) = setup();
        let full = Arc::from_coords(&ring, -1.0, 2.0).unwrap();
        let base = demand_at(&ring, &full, 1.0, &f, ring.point(0.0).unwrap(), &num).unwrap();
        for x in [-0.9, -0.3, 0.17, 0.5, 0.99] {
            let v = demand_at(&ring, &full, 1.0, &f, ring.point(x).unwrap(), &num).unwrap();
            assert!((v - base).abs() < 1e-12 * base, "x={x}: {v} vs {base}");
        }
    }

    #[test]
    fn symmetric_about_mid() {
        let (ring, arc, f, num) = setup();
        let plus = demand_at(&ring, &arc, 1.0, &f, ring.point(0.1).unwrap(), &num).unwrap();
        let minus = demand_at(&ring, &arc, 1.0, &f, ring.point(-0.1).unwrap(), &num).unwrap();
        assert!((plus - minus).abs() < 1e-12);
    }

    #[test]
    fn matches_closed_form_for_gaussian() {
        let (ring, arc, f, num) = setup();
        for x in [-0.8, -0.25, 0.0, 0.13, 0.25, 0.6, 0.999] {
            let p = ring.point(x).unwrap();
            let quad = demand_at(&ring, &arc, 1.3, &f, p, &num).unwrap();
            let exact = demand_at_gaussian_closed_form(&ring, &arc, 1.3, &f, p);
            assert!(
                (quad - exact).abs() < 1e-10 * exact.abs().max(1e-3),
                "x={x}: quad={quad} closed={exact}"
            );
        }
    }

    #[test]
    fn canonical_value_at_mid() {
        // E_p * integral over [-1/4, 1/4] of exp(-y^2 / 0.18) dy,
        // high-precision reference value.
        let (ring, arc, f, num) = setup();
        let v = demand_at(&ring, &arc, 1.0, &f, ring.point(0.0).unwrap(), &num).unwrap();
        let reference = 0.447691258099032;
        assert!((v - reference).abs() < 1e-8 * reference, "got {v}");
    }

    #[test]
    fn linear_in_consumption_rate() {
        let (ring, arc, f, num) = setup();
        let x = ring.point(0.07).unwrap();
        let one = demand_at(&ring, &arc, 1.0, &f, x, &num).unwrap();
        let two = demand_at(&ring, &arc, 2.0, &f, x, &num).unwrap();
        assert!((two - 2.0 * one).abs() < 1e-14);
    }

    #[test]
    fn rotation_invariance() {
        let (ring, arc, f, num) = setup();
        let base = demand_at(&ring, &arc, 1.0, &f, ring.point(0.1).unwrap(), &num).unwrap();
        for rho in [0.3, 0.9, 1.4, -0.7] {
            let arc2 = Arc::from_coords(&ring, -0.25 + rho, 0.5).unwrap();
            let v = demand_at(&ring, &arc2, 1.0, &f, ring.point(0.1 + rho).unwrap(), &num).unwrap();
            assert!((v - base).abs() < 1e-10 * base, "rho={rho}");
        }
    }

    #[test]
    fn profile_grid_matches_pointwise_evaluation() {
        let (ring, arc, f, num) = setup();
        let profile = demand_profile(&ring, &arc, 1.0, &f, 128, &num).unwrap();
        for i in (0..profile.grid.len()).step_by(17) {
            let x = ring.point(profile.grid.xs[i]).unwrap();
            let direct = demand_at(&ring, &arc, 1.0, &f, x, &num).unwrap();
            assert_eq!(profile.grid.values[i], direct);
        }
    }

    #[test]
    fn profile_argmax_at_mid_and_properties_pass() {
        let (ring, arc, f, num) = setup();
        let profile = demand_profile(&ring, &arc, 1.0, &f, 512, &num).unwrap();
        let peak_x = profile.grid.xs[profile.grid.argmax()];
        assert!(peak_x.abs() <= profile.grid.step() + 1e-12);

        let report = demand_properties_check(&profile);
        assert!(report.pass(), "{:?}", report.checks);
        assert!(report.symmetry_residual < 1e-6 * profile.grid.max_value());
    }

    #[test]
    fn full_ring_profile_is_flat() {
        let (ring, _, f, num) = setup();
        let full = Arc::from_coords(&ring, -1.0, 2.0).unwrap();
        let profile = demand_profile(&ring, &full, 1.0, &f, 128, &num).unwrap();
        let lo = profile
            .grid
            .values
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let hi = profile.grid.max_value();
        assert!(hi - lo < 1e-9);
    }

    #[test]
    fn flat_profile_fails_concavity() {
        // A constant profile is not strictly concave; forge one by hand.
        let (ring, arc, f, num) = setup();
        let mut profile = demand_profile(&ring, &arc, 1.0, &f, 128, &num).unwrap();
        for v in profile.grid.values.iter_mut() {
            *v = 1.0;
        }
        let report = demand_properties_check(&profile);
        let concavity = report
            .checks
            .iter()
            .find(|c| c.name.contains("concave"))
            .unwrap();
        assert!(!concavity.pass);
    }

    #[test]
    fn inadmissible_kernel_is_rejected() {
        let (ring, arc, _, num) = setup();
        let bump = KernelSpec::new(KernelFamily::QuadraticBump, 0.9, 0.25).unwrap();
        assert!(demand_at(&ring, &arc, 1.0, &bump, ring.point(0.0).unwrap(), &num).is_err());
    }

    #[test]
    fn undersized_grid_is_rejected() {
        let (ring, arc, f, num) = setup();
        assert!(demand_profile(&ring, &arc, 1.0, &f, 32, &num).is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn rotation_invariant(
                rho in -1.0f64..1.0,
                x_off in -0.9f64..0.9,
                len in 0.05f64..1.5,
            ) {
                let ring = Ring::new(1.0).unwrap();
                let f = KernelSpec::gaussian(1.0, 0.3).unwrap();
                let num = NumericsConfig::default();
                let base = Arc::from_coords(&ring, -len / 2.0, len).unwrap();
                let turned = Arc::from_coords(&ring, -len / 2.0 + rho, len).unwrap();
                let a = demand_at(&ring, &base, 1.0, &f, ring.point(x_off).unwrap(), &num).unwrap();
                let b = demand_at(&ring, &turned, 1.0, &f, ring.point(x_off + rho).unwrap(), &num)
                    .unwrap();
                prop_assert!((a - b).abs() < 1e-10 * a.max(1e-6), "{a} vs {b}");
            }

            #[test]
            fn scales_linearly_in_rate(e_p in 0.1f64..10.0, x_off in -1.0f64..1.0) {
                let ring = Ring::new(1.0).unwrap();
                let f = KernelSpec::gaussian(1.0, 0.3).unwrap();
                let num = NumericsConfig::default();
                let arc = Arc::from_coords(&ring, -0.25, 0.5).unwrap();
                let x = ring.point(x_off).unwrap();
                let unit = demand_at(&ring, &arc, 1.0, &f, x, &num).unwrap();
                let scaled = demand_at(&ring, &arc, e_p, &f, x, &num).unwrap();
                prop_assert!((scaled - e_p * unit).abs() <= 4.0 * f64::EPSILON * scaled.abs());
            }
        }
    }

    #[test]
    fn discrete_concavity_across_families_and_scales() {
        let ring = Ring::new(1.0).unwrap();
        let num = NumericsConfig::default();
        for family in [KernelFamily::Gaussian, KernelFamily::RaisedCosine] {
            for width in [0.1, 0.3, 1.0] {
                for len in [0.1, 0.5, 1.0] {
                    let f = KernelSpec::new(family, 1.0, width).unwrap();
                    let arc = Arc::from_coords(&ring, -len / 2.0, len).unwrap();
                    let profile = demand_profile(&ring, &arc, 1.0, &f, 512, &num).unwrap();
                    let report = demand_properties_check(&profile);
                    assert!(
                        report.pass(),
                        "{:?} w={width} len={len}: {:?}",
                        family,
                        report.checks
                    );
                }
            }
        }
    }
}
