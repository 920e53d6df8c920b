//! Content filtering inside an equilibrium community: the total utility
//! under a relay filter, the best place to put a single filtering agent,
//! the threshold filter that loses nothing, and the expert pre-filtering
//! scheme that can beat it for producers of unpopular content.

use serde::Serialize;

use crate::equilibrium::CommunityState;
use crate::geometry::TorusPoint;
use crate::kernels::KernelSpec;
use crate::production::ProductionTarget;
use crate::supply::supply_weak_integral;

/// A relay filter: either a kernel response centered on an agent, or a
/// hard threshold on the central agent's interest.
#[derive(Clone, Copy, Debug, Serialize)]
pub enum FilterSpec {
    Kernel { h: KernelSpec, center: TorusPoint },
    Threshold { t: f64, center: TorusPoint },
}

impl FilterSpec {
    /// Pass probability for content of type `x`. Threshold filters compare
    /// the interest of the center agent (through the community's interest
    /// kernel) strictly against the threshold.
    pub fn response(&self, community: &CommunityState, x: TorusPoint) -> f64 {
        let ring = community.profile.ring;
        let l = ring.half_len();
        match self {
            FilterSpec::Kernel { h, center } => h.eval_unchecked(ring.distance(x, *center), l),
            FilterSpec::Threshold { t, center } => {
                let interest = community
                    .profile
                    .interest
                    .eval_unchecked(ring.distance(x, *center), l);
                if interest > *t {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Total community utility rate when all produced content is relayed
/// through `filter`: the weak-form integral of the filter response against
/// the net value of each produced type.
pub fn filtered_total_utility(community: &CommunityState, filter: &FilterSpec) -> f64 {
    let alpha_c = community.map.alpha_c;
    let c = community.map.c;
    let weights = community.map.weights();
    let mut acc = 0.0;
    for (w, t) in weights.iter().zip(&community.map.targets) {
        if t.gate_rate > 0.0 {
            let r = filter.response(community, t.x_star);
            acc += w * t.gate_rate * r * (t.objective - alpha_c * c);
        }
    }
    acc
}

/// Scans a uniform agent grid for the location whose kernel filter keeps
/// the most total utility. Ties resolve toward the community midpoint.
pub fn optimal_filter_agent(
    community: &CommunityState,
    h: &KernelSpec,
    y_grid_n: usize,
) -> TorusPoint {
    let ring = community.profile.ring;
    let arc = community.arc;
    let n = y_grid_n.max(3);
    let step = arc.length() / (n - 1) as f64;
    let mid_u = 0.5 * arc.length();

    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let u = i as f64 * step;
        let center = arc.offset(&ring, u);
        let filter = FilterSpec::Kernel { h: *h, center };
        values.push((u, filtered_total_utility(community, &filter)));
    }
    let best = values
        .iter()
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    let tie = 1e-12 * best.abs().max(f64::MIN_POSITIVE);
    let (u_best, _) = values
        .iter()
        .filter(|(_, v)| *v >= best - tie)
        .min_by(|(u1, _), (u2, _)| {
            let d1 = (u1 - mid_u).abs();
            let d2 = (u2 - mid_u).abs();
            d1.partial_cmp(&d2).unwrap()
        })
        .copied()
        .expect("grid is non-empty");
    arc.offset(&ring, u_best)
}

/// The loss-free threshold filter of a community.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ThresholdFilterInfo {
    pub filter: FilterSpec,
    /// The threshold: central-agent interest at the supply support edge.
    pub t0: f64,
    /// Half-width of the supply support.
    pub half_width: f64,
    /// Set when the supply support is (numerically) empty; the filter then
    /// passes everything.
    pub degenerate: bool,
}

/// Builds the threshold filter centered on the community midpoint, with the
/// threshold at the minimum central-agent interest over the supply support.
///
/// The stored threshold is shaded down by one part in 1e9 so that content
/// exactly on the (closed) support edge passes the strict comparison; this
/// widens the pass band by a metrically negligible sliver and keeps the
/// filtered total exactly loss-free on the discrete supply atoms.
pub fn make_threshold_filter(community: &CommunityState) -> ThresholdFilterInfo {
    let ring = community.profile.ring;
    let center = community.arc.mid(&ring);
    let (lo, hi) = community.map.image_span(&ring);
    let half_width = 0.5 * (hi - lo);
    if half_width.is_nan() || half_width <= 0.0 {
        return ThresholdFilterInfo {
            filter: FilterSpec::Threshold {
                t: f64::NEG_INFINITY,
                center,
            },
            t0: f64::NEG_INFINITY,
            half_width: half_width.max(0.0),
            degenerate: true,
        };
    }
    let l = ring.half_len();
    let edge_interest = community
        .profile
        .interest
        .eval_unchecked(half_width.min(l), l);
    let t0 = edge_interest * (1.0 - 1e-9);
    ThresholdFilterInfo {
        filter: FilterSpec::Threshold { t: t0, center },
        t0,
        half_width,
        degenerate: false,
    }
}

/// Net change in a producer's utility rate when its content is routed
/// through the expert sitting at the produced type before reaching the
/// central filter: the expert discards irrelevant items early (saving the
/// community their reading cost) but also attenuates relevant ones by the
/// central agent's top interest rate.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ExpertBenefit {
    pub gain: f64,
    /// False when demand at the produced type does not cover the aggregate
    /// reading cost; the closed-form benefit condition is undefined there,
    /// though the raw gain is still meaningful.
    pub condition_defined: bool,
}

pub fn expert_benefit(
    target: &ProductionTarget,
    alpha_c: f64,
    c: f64,
    e_q: f64,
    peak_interest: f64,
) -> ExpertBenefit {
    let q = target.relevance;
    let p = target.demand;
    let routed = q * peak_interest * (p - alpha_c * c);
    let direct = q * p - alpha_c * c;
    ExpertBenefit {
        gain: e_q * (routed - direct),
        condition_defined: p > alpha_c * c,
    }
}

/// The community-wide expert routing plan: which producers benefit from
/// expert pre-filtering, the empirical popularity threshold separating them,
/// and the total utility gained.
#[derive(Clone, Debug, Serialize)]
pub struct ExpertPlan {
    /// Producer-grid indices whose routed utility strictly improves.
    pub benefiting: Vec<usize>,
    /// Largest demand level among benefiting producers; the empirical
    /// threshold of the scheme. Absent when nobody benefits.
    pub t_c: Option<f64>,
    /// Aggregate utility gain over the benefiting producers.
    pub delta_total: f64,
    /// Fraction of the community (by measure) that benefits.
    pub benefiting_fraction: f64,
    /// Non-benefiting producers whose content is less popular than some
    /// benefiting producer's, beyond grid resolution. Zero when the
    /// benefiting set is exactly a low-popularity band.
    pub threshold_violations: usize,
    pub gains: Vec<ExpertBenefit>,
}

pub fn expert_routing_plan(community: &CommunityState) -> ExpertPlan {
    let map = &community.map;
    let f0 = community
        .profile
        .interest
        .eval_unchecked(0.0, community.profile.ring.half_len());
    let weights = map.weights();

    let gains: Vec<ExpertBenefit> = map
        .targets
        .iter()
        .map(|t| expert_benefit(t, map.alpha_c, map.c, t.gate_rate, f0))
        .collect();

    let mut benefiting = Vec::new();
    let mut delta_total = 0.0;
    let mut measure = 0.0;
    for (i, (g, w)) in gains.iter().zip(&weights).enumerate() {
        if map.targets[i].gate_rate > 0.0 && g.gain > 0.0 {
            benefiting.push(i);
            delta_total += w * g.gain;
            measure += w;
        }
    }

    let t_c = benefiting
        .iter()
        .map(|&i| map.targets[i].demand)
        .fold(None, |acc: Option<f64>, p| {
            Some(acc.map_or(p, |a| a.max(p)))
        });

    // Threshold structure: every benefiting producer should be less popular
    // than every non-benefiting one, up to the demand resolution of the grid.
    let mut threshold_violations = 0;
    if let Some(level) = t_c {
        let mut slack = 0.0f64;
        for i in 1..map.targets.len() {
            slack = slack.max((map.targets[i].demand - map.targets[i - 1].demand).abs());
        }
        for (i, t) in map.targets.iter().enumerate() {
            if t.gate_rate > 0.0 && !benefiting.contains(&i) && t.demand < level - slack {
                threshold_violations += 1;
            }
        }
    }

    ExpertPlan {
        benefiting,
        t_c,
        delta_total,
        benefiting_fraction: (measure / community.arc.length()).min(1.0),
        threshold_violations,
        gains,
    }
}

/// Export of per-producer expert gains.
pub fn write_gains_csv<W: std::io::Write>(
    community: &CommunityState,
    plan: &ExpertPlan,
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "y,gain,P_at_xstar,q_at_xstar")?;
    for (t, g) in community.map.targets.iter().zip(&plan.gains) {
        writeln!(w, "{},{},{},{}", t.y.coord(), g.gain, t.demand, t.relevance)?;
    }
    Ok(())
}

/// Weak-form integral of an arbitrary response function against the supply,
/// weighted by net value; used by tests to cross-check the filter path.
pub fn filtered_total_by_response<F: Fn(TorusPoint) -> f64>(
    community: &CommunityState,
    response: F,
) -> f64 {
    let alpha_c = community.map.alpha_c;
    let c = community.map.c;
    // Rewrite sum w * gate * r * (q P - alpha c) through the two weak forms.
    let value_part =
        supply_weak_integral(&community.map, |x| response(x) * community.profile.eval(x));
    let weights = community.map.weights();
    let mut cost_part = 0.0;
    for (w, t) in weights.iter().zip(&community.map.targets) {
        if t.gate_rate > 0.0 {
            cost_part += w * t.gate_rate * response(t.x_star) * alpha_c * c;
        }
    }
    value_part - cost_part
}
