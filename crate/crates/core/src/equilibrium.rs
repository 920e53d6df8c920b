//! Covering equilibrium structures: the ring is tiled by equal-length
//! interval communities, every agent reads at full budget in its own
//! community, and every producer concentrates on its optimal content type.
//! Such a partition exists whenever the peak relevance-times-interest value
//! covers the reading cost; verification searches for profitable unilateral
//! deviations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::demand::{demand_profile, DemandProfile};
use crate::error::{Error, Result};
use crate::geometry::{Arc, Ring, TorusPoint};
use crate::kernels::{KernelRole, KernelSpec};
use crate::numerics::{golden_section_max, integrate_panels, kronecker_sequence, NumericsConfig};
use crate::production::{best_content_type_unchecked, production_map, ProductionMap};
use crate::utility::{utility_profile, UtilityProfile};

/// The model parameters shared by every community.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GlobalParams {
    /// Ring half-length; the ring is `[-l, l)`.
    pub l: f64,
    /// Per-item reading cost.
    pub c: f64,
    /// Consumption rate budget.
    pub e_p: f64,
    /// Production rate budget.
    pub e_q: f64,
    /// Interest kernel.
    pub f: KernelSpec,
    /// Ability kernel.
    pub g: KernelSpec,
}

impl GlobalParams {
    pub fn ring(&self) -> Result<Ring> {
        Ring::new(self.l)
    }

    pub fn validate(&self) -> Result<()> {
        let ring = self.ring()?;
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(Error::invalid("reading cost must be non-negative"));
        }
        if !(self.e_p > 0.0 && self.e_q > 0.0) {
            return Err(Error::invalid("rate budgets must be positive"));
        }
        self.f.require(KernelRole::InterestF, ring.half_len())?;
        self.g.require(KernelRole::AbilityG, ring.half_len())?;
        Ok(())
    }

    /// Peak net value of content, `f(0) g(0) - c`; positive iff a covering
    /// structure can be built.
    pub fn peak_margin(&self) -> f64 {
        self.f.eval_unchecked(0.0, self.l) * self.g.eval_unchecked(0.0, self.l) - self.c
    }
}

/// The largest community length `m` in `[0, L]` whose central producer still
/// breaks even: the running integral of `g(0) f(x) - c` stays non-negative
/// up to `m`. Returns 0 when even the peak value cannot cover the cost.
pub fn max_interval_length(params: &GlobalParams) -> f64 {
    let l = params.l;
    let g0 = params.g.eval_unchecked(0.0, l);
    let c = params.c;
    if g0 * params.f.eval_unchecked(0.0, l) - c <= 0.0 {
        return 0.0;
    }
    let margin = |upto: f64| {
        integrate_panels(0.0, upto, &[], 0.25 * l, 64, |x| {
            g0 * params.f.eval_unchecked(x, l)
        }) - c * upto
    };
    if margin(l) >= 0.0 {
        return l;
    }
    // The integrand is decreasing, so the running integral is concave with a
    // single sign change; bisect it.
    let (mut lo, mut hi) = (0.0f64, l);
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if margin(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Sufficient break-even test for a community of the given length: the
/// worst-pair product of interest and relevance must beat the reading cost.
/// `support_caveat` flags lengths that cannot contain the full ability
/// support, where the bound is conservative.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FeasibilityCheck {
    pub feasible: bool,
    pub support_caveat: bool,
}

pub fn feasibility_check(arc_length: f64, params: &GlobalParams) -> FeasibilityCheck {
    let l = params.l;
    let d = 2.0 * arc_length;
    let product = params.f.eval_tail(d, l) * params.g.eval_tail(d, l);
    FeasibilityCheck {
        feasible: product - params.c > 0.0,
        support_caveat: params.g.support_radius(l) > arc_length,
    }
}

/// One community of a structure: its arc plus the cached demand profile,
/// production map and utility profile.
#[derive(Clone, Debug, Serialize)]
pub struct CommunityState {
    pub arc: Arc,
    pub profile: DemandProfile,
    pub map: ProductionMap,
    pub utilities: UtilityProfile,
}

impl CommunityState {
    pub fn build(
        ring: &Ring,
        params: &GlobalParams,
        arc: Arc,
        numerics: &NumericsConfig,
    ) -> Result<Self> {
        let profile = demand_profile(
            ring,
            &arc,
            params.e_p,
            &params.f,
            numerics.ring_grid_n,
            numerics,
        )?;
        let alpha = params.e_p * arc.length();
        let map = production_map(
            &profile,
            &params.g,
            params.e_q,
            alpha,
            params.c,
            numerics.y_grid_n,
        )?;
        let utilities = utility_profile(&profile, &map)?;
        Ok(CommunityState {
            arc,
            profile,
            map,
            utilities,
        })
    }

    /// Aggregate consumption rate `E_p * |I_C|`.
    pub fn alpha(&self) -> f64 {
        self.map.alpha_c
    }

    /// Produced mass `integral of gate_rate`; `E_q * |I_C|` when fully gated.
    pub fn produced_mass(&self) -> f64 {
        self.map
            .weights()
            .iter()
            .zip(&self.map.targets)
            .map(|(w, t)| w * t.gate_rate)
            .sum()
    }
}

/// A covering structure: equal arcs tiling the ring (but see
/// [`CommunityStructure::from_arcs`], which accepts arbitrary tilings for
/// verification of externally supplied or tampered structures).
#[derive(Clone, Debug, Serialize)]
pub struct CommunityStructure {
    pub params: GlobalParams,
    pub k: usize,
    pub delta_star: f64,
    pub communities: Vec<CommunityState>,
}

impl CommunityStructure {
    pub fn ring(&self) -> Ring {
        Ring::new(self.params.l).expect("validated on construction")
    }

    pub fn is_uniform(&self) -> bool {
        let len0 = self.communities[0].arc.length();
        self.communities
            .iter()
            .all(|c| (c.arc.length() - len0).abs() < 1e-9 * len0)
    }

    /// Builds the member communities over a caller-supplied tiling without
    /// asserting equal lengths or open gates.
    pub fn from_arcs(
        params: GlobalParams,
        arcs: Vec<Arc>,
        numerics: &NumericsConfig,
    ) -> Result<Self> {
        params.validate()?;
        numerics.validate()?;
        if arcs.is_empty() {
            return Err(Error::invalid("a structure needs at least one community"));
        }
        let ring = params.ring()?;
        let total: f64 = arcs.iter().map(Arc::length).sum();
        if (total - ring.circumference()).abs() > 1e-6 * ring.circumference() {
            return Err(Error::invalid(format!(
                "arcs must tile the ring: lengths sum to {total}, circumference is {}",
                ring.circumference()
            )));
        }
        let communities: Result<Vec<CommunityState>> = arcs
            .into_par_iter()
            .map(|arc| CommunityState::build(&ring, &params, arc, numerics))
            .collect();
        let communities = communities?;
        let k = communities.len();
        let delta_star = communities[0].arc.length();
        Ok(CommunityStructure {
            params,
            k,
            delta_star,
            communities,
        })
    }

    pub fn summary(&self) -> StructureFile {
        let ring = self.ring();
        StructureFile {
            params: self.params,
            k: self.k,
            delta_star: self.delta_star,
            communities: self
                .communities
                .iter()
                .map(|c| {
                    let (lo, hi) = c.map.image_span(&ring);
                    CommunitySummary {
                        start: c.arc.start().coord(),
                        length: c.arc.length(),
                        mid: c.arc.mid(&ring).coord(),
                        alpha: c.alpha(),
                        beta: c.produced_mass(),
                        total_utility: c.utilities.total_formula,
                        supply_support: (lo, hi),
                        fully_gated: c.map.fully_gated(),
                    }
                })
                .collect(),
        }
    }
}

/// The wire format for a constructed structure.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StructureFile {
    pub params: GlobalParams,
    pub k: usize,
    pub delta_star: f64,
    pub communities: Vec<CommunitySummary>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CommunitySummary {
    pub start: f64,
    pub length: f64,
    pub mid: f64,
    /// Aggregate consumption rate of the community.
    pub alpha: f64,
    /// Produced (gated) rate mass.
    pub beta: f64,
    /// The community total utility rate.
    pub total_utility: f64,
    /// Supply support in arc-local offsets.
    pub supply_support: (f64, f64),
    pub fully_gated: bool,
}

impl StructureFile {
    /// Rebuilds the full structure from the stored arcs. Tampered files
    /// rebuild too; verification decides whether they are equilibria.
    pub fn rebuild(&self, numerics: &NumericsConfig) -> Result<CommunityStructure> {
        let ring = self.params.ring()?;
        let arcs: Result<Vec<Arc>> = self
            .communities
            .iter()
            .map(|c| Arc::from_coords(&ring, c.start, c.length))
            .collect();
        CommunityStructure::from_arcs(self.params, arcs?, numerics)
    }
}

/// Picks the largest feasible community length, then the smallest count of
/// equal arcs at or below it, and builds every community. With an explicit
/// `k` the partition is prescribed directly.
///
/// Fails with the length-bound diagnosis when no positive length is
/// feasible, and when any production gate of the built structure is closed.
pub fn construct_covering(
    params: &GlobalParams,
    k: Option<usize>,
    numerics: &NumericsConfig,
) -> Result<CommunityStructure> {
    params.validate()?;
    numerics.validate()?;
    let ring = params.ring()?;
    if params.peak_margin() <= 0.0 {
        return Err(Error::Infeasible(format!(
            "peak value does not cover the reading cost (margin {:.6}); \
             the maximal break-even community length is {:.6}",
            params.peak_margin(),
            max_interval_length(params)
        )));
    }

    let k = match k {
        Some(k) if k >= 1 => k,
        Some(_) => return Err(Error::invalid("community count must be at least 1")),
        None => {
            // Largest feasible length by bisection: the break-even product is
            // decreasing in the length, so the feasible set is an interval
            // anchored at zero.
            let mut lo = 0.0f64;
            let mut hi = ring.half_len();
            if feasibility_check(hi, params).feasible {
                lo = hi;
            } else {
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if feasibility_check(mid, params).feasible {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo < 1e-12 {
                        break;
                    }
                }
            }
            let delta0 = lo;
            if delta0 <= 0.0 {
                return Err(Error::Infeasible(format!(
                    "no positive community length passes the break-even test; \
                     the maximal break-even community length is {:.6}",
                    max_interval_length(params)
                )));
            }
            let mut k = (ring.circumference() / delta0).ceil() as usize;
            // Guard the boundary case where the quotient is an exact integer
            // and the resulting length sits on the break-even edge.
            while !feasibility_check(ring.circumference() / k as f64, params).feasible {
                k += 1;
                if k > 100_000_000 {
                    return Err(Error::Infeasible(
                        "feasible community length is vanishingly small".into(),
                    ));
                }
            }
            k
        }
    };

    let arcs = ring.partition(k)?;
    let structure = CommunityStructure::from_arcs(*params, arcs, numerics)?;
    for (i, c) in structure.communities.iter().enumerate() {
        if !c.map.fully_gated() {
            return Err(Error::Infeasible(format!(
                "community {i} has closed production gates at length {:.6}; \
                 the maximal break-even community length is {:.6}",
                c.arc.length(),
                max_interval_length(params)
            )));
        }
        // Fully gated, so the aggregate identity must hold; a violation
        // means the quadrature stack is broken, not the parameters.
        c.utilities
            .check_balance(numerics.tolerances.balance_fail_rel)?;
    }
    Ok(structure)
}

/// Outcome of the deviation search.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NashReport {
    pub max_consumption_gain: f64,
    pub max_production_gain: f64,
    /// Location of the agent with the largest normalized gain.
    pub worst_agent: f64,
    pub pass: bool,
}

/// Checks the equilibrium conditions at `n_agents` deterministically sampled
/// agents: no agent may improve its consumption or production utility by
/// reallocating its budget to another community (or to none). Gains are
/// accepted up to `tol * (1 + |home value|)`.
pub fn verify_nash(
    structure: &CommunityStructure,
    n_agents: usize,
    tol: f64,
    seed: u64,
) -> NashReport {
    let ring = structure.ring();
    let params = &structure.params;
    let ys: Vec<f64> = kronecker_sequence(seed, n_agents)
        .into_iter()
        .map(|u| -ring.half_len() + ring.circumference() * u)
        .collect();

    struct AgentGains {
        y: f64,
        consumption: f64,
        production: f64,
        normalized: f64,
        ok: bool,
    }

    let gains: Vec<AgentGains> = ys
        .par_iter()
        .map(|&yc| {
            let y = ring.point(yc).expect("sampled agents are finite");
            let home = structure
                .communities
                .iter()
                .position(|c| c.arc.contains(&ring, y))
                .expect("arcs tile the ring");

            let mut best_d = f64::NEG_INFINITY;
            let mut best_s = f64::NEG_INFINITY;
            let mut home_d = 0.0;
            let mut home_s = 0.0;
            for (i, community) in structure.communities.iter().enumerate() {
                // Reading nothing is always available.
                let v_d = consumption_value(&ring, community, y, params).max(0.0);
                let v_s = production_value(&ring, community, y, params).max(0.0);
                if i == home {
                    home_d = v_d;
                    home_s = v_s;
                }
                best_d = best_d.max(v_d);
                best_s = best_s.max(v_s);
            }
            let gain_d = best_d - home_d;
            let gain_s = best_s - home_s;
            let norm_d = gain_d / (1.0 + home_d.abs());
            let norm_s = gain_s / (1.0 + home_s.abs());
            AgentGains {
                y: yc,
                consumption: gain_d,
                production: gain_s,
                normalized: norm_d.max(norm_s),
                ok: gain_d <= tol * (1.0 + home_d.abs()) && gain_s <= tol * (1.0 + home_s.abs()),
            }
        })
        .collect();

    let mut report = NashReport {
        max_consumption_gain: 0.0,
        max_production_gain: 0.0,
        worst_agent: ys.first().copied().unwrap_or(0.0),
        pass: true,
    };
    let mut worst_norm = f64::NEG_INFINITY;
    for g in &gains {
        report.max_consumption_gain = report.max_consumption_gain.max(g.consumption);
        report.max_production_gain = report.max_production_gain.max(g.production);
        if g.normalized > worst_norm {
            worst_norm = g.normalized;
            report.worst_agent = g.y;
        }
        report.pass &= g.ok;
    }
    report
}

/// Per-unit-rate consumption value of community `C` for an agent at `y`:
/// the weak-form interest integral against the supply, minus the reading
/// cost of the produced mass.
fn consumption_value(
    ring: &Ring,
    community: &CommunityState,
    y: TorusPoint,
    params: &GlobalParams,
) -> f64 {
    let l = ring.half_len();
    let weights = community.map.weights();
    let mut reward = 0.0;
    let mut produced = 0.0;
    for (w, t) in weights.iter().zip(&community.map.targets) {
        if t.gate_rate > 0.0 {
            reward += w
                * t.gate_rate
                * t.relevance
                * params.f.eval_unchecked(ring.distance(t.x_star, y), l);
            produced += w * t.gate_rate;
        }
    }
    reward - params.c * produced
}

/// Per-unit-rate production value of community `C` for an agent at `y`:
/// the best achievable relevance-times-demand minus the aggregate reading
/// cost it would impose. Members use the concave-bracket search; outsiders
/// fall back to a dense scan over their ability support refined locally.
fn production_value(
    ring: &Ring,
    community: &CommunityState,
    y: TorusPoint,
    params: &GlobalParams,
) -> f64 {
    let best = if community.arc.contains(ring, y) {
        best_content_type_unchecked(y, &community.profile, &params.g).objective
    } else {
        let l = ring.half_len();
        let radius = params.g.support_radius(l);
        let grid = &community.profile.grid;
        let mut best_x = y.coord();
        let mut best_v = params.g.eval_unchecked(0.0, l) * community.profile.eval(y);
        for (i, &xc) in grid.xs.iter().enumerate() {
            let x = ring.point(xc).expect("grid coords are finite");
            let d = ring.distance(x, y);
            if d < radius {
                let v = params.g.eval_unchecked(d, l) * grid.values[i];
                if v > best_v {
                    best_v = v;
                    best_x = xc;
                }
            }
        }
        // Refine around the winning cell with the exact objective.
        let h = grid.step();
        let (_, refined) = golden_section_max(best_x - h, best_x + h, h * 1e-8, |t| {
            let x = ring.point(t).expect("finite");
            let d = ring.distance(x, y);
            if d >= radius {
                return 0.0;
            }
            params.g.eval_unchecked(d, l) * community.profile.eval(x)
        });
        refined.max(best_v)
    };
    best - community.map.alpha_c * params.c
}
