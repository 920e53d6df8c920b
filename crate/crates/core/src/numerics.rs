//! Quadrature, one-dimensional search and grid plumbing shared by the model
//! modules. Everything here is deterministic.

use std::collections::HashMap;
use std::sync::{Arc as StdArc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid sizes and tolerances used by profile construction and the property
/// checks. One record so golden-file generation can tighten everything in a
/// single place.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct NumericsConfig {
    /// Samples for ring-wide grids (demand profiles).
    pub ring_grid_n: usize,
    /// Producer grid per community (production maps, utility profiles).
    pub y_grid_n: usize,
    /// Gauss-Legendre nodes per smooth panel.
    pub quadrature_order: usize,
    pub tolerances: Tolerances,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Relative bound for symmetry residuals of demand/supply/utility profiles.
    pub symmetry_rel: f64,
    /// Scaled threshold for strict-concavity second differences.
    pub concavity_abs: f64,
    /// Relative agreement required of the three utility totals.
    pub balance_rel: f64,
    /// Relative disagreement of the totals that is treated as a defect.
    pub balance_fail_rel: f64,
    /// Nash deviation-gain tolerance, relative to `1 + |home utility|`.
    pub nash_gain: f64,
    /// `|dx*/dy|` below this marks a singular pushforward cell.
    pub jacobian_floor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            symmetry_rel: 1e-6,
            concavity_abs: 1e-12,
            balance_rel: 1e-6,
            balance_fail_rel: 1e-3,
            nash_gain: 1e-4,
            jacobian_floor: 1e-8,
        }
    }
}

impl Default for NumericsConfig {
    fn default() -> Self {
        NumericsConfig {
            ring_grid_n: 512,
            y_grid_n: 256,
            quadrature_order: 64,
            tolerances: Tolerances::default(),
        }
    }
}

impl NumericsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ring_grid_n < 64 {
            return Err(Error::invalid("ring_grid_n must be at least 64"));
        }
        if self.y_grid_n < 128 {
            return Err(Error::invalid("y_grid_n must be at least 128"));
        }
        if self.quadrature_order < 2 {
            return Err(Error::invalid("quadrature_order must be at least 2"));
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("symmetry_rel", t.symmetry_rel),
            ("concavity_abs", t.concavity_abs),
            ("balance_rel", t.balance_rel),
            ("balance_fail_rel", t.balance_fail_rel),
            ("nash_gain", t.nash_gain),
            ("jacobian_floor", t.jacobian_floor),
        ] {
            if v.is_nan() || v <= 0.0 {
                return Err(Error::invalid(format!("tolerance {name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Computes the rule by Newton iteration on the Legendre polynomial.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1);
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            // Chebyshev-like initial guess.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    /// Cached rule; the same orders are requested over and over from the hot
    /// integration paths.
    pub fn cached(order: usize) -> StdArc<GaussLegendre> {
        static CACHE: OnceLock<Mutex<HashMap<usize, StdArc<GaussLegendre>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut map = cache.lock().expect("quadrature cache poisoned");
        map.entry(order)
            .or_insert_with(|| StdArc::new(GaussLegendre::new(order)))
            .clone()
    }

    /// Integrates `f` over `[a, b]` with a single panel.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }
}

/// Evaluates `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite Gauss-Legendre: the interval is cut at the supplied interior
/// break points (integrand kinks) and each piece is kept short enough for
/// the rule to resolve sharp kernels.
pub fn integrate_panels<F: FnMut(f64) -> f64>(
    a: f64,
    b: f64,
    breaks: &[f64],
    max_panel: f64,
    order: usize,
    mut f: F,
) -> f64 {
    debug_assert!(b >= a);
    let rule = GaussLegendre::cached(order);
    let mut cuts: Vec<f64> = Vec::with_capacity(breaks.len() + 2);
    cuts.push(a);
    for &c in breaks {
        if c > a && c < b {
            cuts.push(c);
        }
    }
    cuts.push(b);
    cuts.sort_by(|x, y| x.partial_cmp(y).expect("finite cut points"));

    let mut acc = 0.0;
    for pair in cuts.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        if hi - lo <= 0.0 {
            continue;
        }
        let pieces = ((hi - lo) / max_panel).ceil().max(1.0) as usize;
        let step = (hi - lo) / pieces as f64;
        for i in 0..pieces {
            let p0 = lo + i as f64 * step;
            acc += rule.integrate(p0, p0 + step, &mut f);
        }
    }
    acc
}

/// Trapezoid weights for a closed uniform grid of `n >= 2` points spanning
/// length `len`: `h/2, h, ..., h, h/2`.
pub fn trapezoid_weights(n: usize, len: f64) -> Vec<f64> {
    assert!(n >= 2);
    let h = len / (n - 1) as f64;
    let mut w = vec![h; n];
    w[0] = 0.5 * h;
    w[n - 1] = 0.5 * h;
    w
}

/// Golden-section search for the maximum of a strictly unimodal function on
/// `[a, b]`. Converges until the bracket shrinks below `tol`, then returns
/// the midpoint and the value there.
pub fn golden_section_max<F: FnMut(f64) -> f64>(
    mut a: f64,
    mut b: f64,
    tol: f64,
    mut f: F,
) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    if b < a {
        std::mem::swap(&mut a, &mut b);
    }
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut iters = 0;
    while b - a > tol && iters < 300 {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
        iters += 1;
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// A sampled real function on a uniform grid, with explicit abscissae.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridFunction {
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(xs: Vec<f64>, values: Vec<f64>) -> Self {
        assert_eq!(xs.len(), values.len());
        GridFunction { xs, values }
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn step(&self) -> f64 {
        if self.xs.len() < 2 {
            0.0
        } else {
            self.xs[1] - self.xs[0]
        }
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        best
    }

    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.values.iter().copied())
    }
}

/// Deterministic low-discrepancy points in `[0, 1)`: the golden-ratio
/// Kronecker sequence with a seed-derived phase.
pub fn kronecker_sequence(seed: u64, n: usize) -> Vec<f64> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let phase = (seed as f64 * INV_PHI).fract();
    (0..n)
        .map(|i| ((i as f64 + 1.0) * INV_PHI + phase).fract())
        .collect()
}
