//! Cumulant calculus of the exponentially tilted family.
//!
//! For a model with log-MGF `ψ`, the tilted law at `t` has density
//! `exp(t f(x) - ψ(t)) p(x)`, mean `m(t) = ψ'(t)` and variance `s²(t) = ψ''(t)`.
//! Because `ψ` is strictly convex, `m` is strictly increasing and can be
//! inverted by a safeguarded Newton iteration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SourceModel;

/// Local cumulant data `(t, ψ'(t), ψ''(t), ψ'''(t), ψ''''(t))` of the tilted law.
///
/// `mu3` is the third central moment and `mu4` the fourth cumulant
/// (the excess over `3 s⁴` of the fourth central moment).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CumulantPoint {
    pub t: f64,
    pub m: f64,
    pub s2: f64,
    pub mu3: f64,
    pub mu4: f64,
}

impl CumulantPoint {
    pub fn s(&self) -> f64 {
        self.s2.sqrt()
    }
}

const RIDDERS_SHRINK: f64 = 1.4;
const RIDDERS_LEVELS: usize = 10;

fn stencil(psi: &dyn Fn(f64) -> f64, order: usize, t: f64, h: f64) -> f64 {
    match order {
        1 => (psi(t + h) - psi(t - h)) / (2.0 * h),
        2 => (psi(t + h) - 2.0 * psi(t) + psi(t - h)) / (h * h),
        3 => (psi(t + 2.0 * h) - 2.0 * psi(t + h) + 2.0 * psi(t - h) - psi(t - 2.0 * h)) / (2.0 * h.powi(3)),
        4 => (psi(t + 2.0 * h) - 4.0 * psi(t + h) + 6.0 * psi(t) - 4.0 * psi(t - h) + psi(t - 2.0 * h)) / h.powi(4),
        _ => unreachable!("derivative order {order}"),
    }
}

/// Central-difference derivative of order 1..=4 with Ridders–Richardson
/// extrapolation. The starting step is fixed by `t` and the distance to the
/// domain edges, so the result is a deterministic function of its inputs.
pub fn finite_difference(psi: &dyn Fn(f64) -> f64, order: usize, t: f64, domain: (f64, f64)) -> f64 {
    let room = (t - domain.0).min(domain.1 - t);
    let mut h = (0.25 * t.abs().max(1.0)).min(0.125 * room);
    let mut tableau = [[0.0f64; RIDDERS_LEVELS]; RIDDERS_LEVELS];
    tableau[0][0] = stencil(psi, order, t, h);
    let mut best = tableau[0][0];
    let mut best_err = f64::INFINITY;
    let c2 = RIDDERS_SHRINK * RIDDERS_SHRINK;
    for i in 1..RIDDERS_LEVELS {
        h /= RIDDERS_SHRINK;
        tableau[0][i] = stencil(psi, order, t, h);
        let mut fac = c2;
        for j in 1..=i {
            tableau[j][i] = (tableau[j - 1][i] * fac - tableau[j - 1][i - 1]) / (fac - 1.0);
            fac *= c2;
            let err = (tableau[j][i] - tableau[j - 1][i])
                .abs()
                .max((tableau[j][i] - tableau[j - 1][i - 1]).abs());
            if err <= best_err {
                best_err = err;
                best = tableau[j][i];
            }
        }
        if (tableau[i][i] - tableau[i - 1][i - 1]).abs() >= 2.0 * best_err {
            break;
        }
    }
    best
}

fn check_domain(model: &dyn SourceModel, t: f64) -> Result<()> {
    if model.contains_tilt(t) {
        Ok(())
    } else {
        let (lo, hi) = model.t_domain();
        Err(Error::TiltOutOfDomain { t, lo, hi })
    }
}

/// First four derivatives of `ψ` at `t`.
pub fn cumulants_at(model: &dyn SourceModel, t: f64) -> Result<CumulantPoint> {
    check_domain(model, t)?;
    let [m, s2, mu3, mu4] = match model.log_mgf_derivatives(t) {
        Some(d) => d,
        None => {
            let psi = |u: f64| model.log_mgf(u);
            let domain = model.t_domain();
            [1, 2, 3, 4].map(|order| finite_difference(&psi, order, t, domain))
        }
    };
    if !(s2 > 0.0) {
        return Err(Error::NonconvexLogMgf { t, s2 });
    }
    Ok(CumulantPoint { t, m, s2, mu3, mu4 })
}

/// `log π^t(x) = t f(x) - ψ(t) + log p(x)`.
pub fn tilt_log_density(model: &dyn SourceModel, t: f64, x: f64) -> Result<f64> {
    check_domain(model, t)?;
    let lp = model.log_density(x);
    if lp == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(t * model.f(x) - model.log_mgf(t) + lp)
}

const MAX_NEWTON: usize = 200;
const MAX_DOUBLINGS: usize = 1100;
const EDGE_MARGIN: f64 = 1e-12;

fn capped_edge(edge: f64) -> f64 {
    if edge.is_finite() {
        edge - edge.signum() * EDGE_MARGIN * edge.abs().max(1.0)
    } else {
        edge
    }
}

/// Solve `m(t) = target` on the tilt domain.
///
/// The bracket is grown geometrically (factor 2) from `t = 0` and capped
/// just inside the domain edges; Newton steps that leave the bracket are
/// replaced by bisection.
pub fn invert_m(model: &dyn SourceModel, target: f64) -> Result<f64> {
    let tol = 1e-10 * target.abs().max(1.0);
    let outside = || Error::TargetOutsideRange { target, index: None };
    if !target.is_finite() {
        return Err(outside());
    }
    let (dlo, dhi) = model.t_domain();
    let at_zero = cumulants_at(model, 0.0)?;
    if (at_zero.m - target).abs() <= tol {
        return Ok(0.0);
    }
    let upward = target > at_zero.m;
    let cap = if upward { capped_edge(dhi) } else { capped_edge(dlo) };
    let sign = if upward { 1.0 } else { -1.0 };

    // Grow [near, far] until m(far) passes the target.
    let mut near_point = at_zero;
    let mut step: f64 = 1.0;
    let mut doublings = 0;
    let far_point = loop {
        let far = if upward { step.min(cap) } else { (-step).max(cap) };
        if !far.is_finite() {
            return Err(outside());
        }
        // Curvature underflow far out in a flat tail means the target was not met.
        let point = match cumulants_at(model, far) {
            Err(Error::NonconvexLogMgf { .. }) => return Err(outside()),
            other => other?,
        };
        if (point.m - target) * sign > 0.0 {
            break point;
        }
        if far == cap || doublings >= MAX_DOUBLINGS {
            return Err(outside());
        }
        near_point = point;
        step *= 2.0;
        doublings += 1;
    };
    let (mut lo, mut hi) = if upward {
        (near_point.t, far_point.t)
    } else {
        (far_point.t, near_point.t)
    };
    let mut point = near_point;
    for _ in 0..MAX_NEWTON {
        let r = point.m - target;
        if r.abs() <= tol {
            return Ok(point.t);
        }
        if r < 0.0 {
            lo = point.t;
        } else {
            hi = point.t;
        }
        let mut next = point.t - r / point.s2;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if next == point.t {
            break;
        }
        point = cumulants_at(model, next)?;
    }
    let r = point.m - target;
    if r.abs() <= tol {
        Ok(point.t)
    } else {
        Err(Error::NoConvergence {
            target,
            iterations: MAX_NEWTON,
        })
    }
}

/// One-step tilt update replacing the exact inversion at step `i`:
/// `t_i = t_{i-1} + (m(t_{i-1}) - x_i) / ((n - i) s²(t_{i-1}))`,
/// where `x_i` is the `f`-value of the `i`-th observation.
pub fn incremental_t_update(prev: &CumulantPoint, x_i: f64, n: usize, i: usize) -> f64 {
    prev.t + (prev.m - x_i) / ((n - i) as f64 * prev.s2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Flag {
    Ok,
    Warn,
}

impl Flag {
    fn from_ok(ok: bool) -> Self {
        if ok {
            Flag::Ok
        } else {
            Flag::Warn
        }
    }
}

/// Advisory numbers describing how far `(n, k, a)` sits inside the
/// asymptotic regime, with `ε_n = log(n) / √(n - k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeDiagnostics {
    pub eps_n: f64,
    /// `ε_n √(n - k)`, should be large.
    pub run_gap: f64,
    pub run_gap_flag: Flag,
    /// `ε_n (log n)²`, the accuracy rate, should be small.
    pub rate: f64,
    pub rate_flag: Flag,
    /// `a² / (ε_n (log n)²)`, should be large.
    pub level: f64,
    pub level_flag: Flag,
    /// `√n a² / (log n)²`, should be large.
    pub level_sufficient: f64,
    pub level_sufficient_flag: Flag,
}

impl RegimeDiagnostics {
    pub fn all_ok(&self) -> bool {
        [
            self.run_gap_flag,
            self.rate_flag,
            self.level_flag,
            self.level_sufficient_flag,
        ]
        .iter()
        .all(|f| *f == Flag::Ok)
    }
}

pub fn check_regime(n: usize, k: usize, a: f64) -> RegimeDiagnostics {
    let log_n = (n as f64).ln();
    let gap = (n.saturating_sub(k)).max(1) as f64;
    let eps_n = log_n / gap.sqrt();
    let run_gap = eps_n * gap.sqrt();
    let rate = eps_n * log_n * log_n;
    let level = a * a / rate;
    let level_sufficient = (n as f64).sqrt() * a * a / (log_n * log_n);
    RegimeDiagnostics {
        eps_n,
        run_gap,
        run_gap_flag: Flag::from_ok(run_gap > 1.0),
        rate,
        rate_flag: Flag::from_ok(rate < 1.0),
        level,
        level_flag: Flag::from_ok(level > 1.0),
        level_sufficient,
        level_sufficient_flag: Flag::from_ok(level_sufficient > 1.0),
    }
}
