//! Adaptive Gauss–Kronrod (7/15) quadrature on finite intervals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for nodes XGK[1], XGK[3], XGK[5] and the center.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_PANELS: usize = 4000;

struct Panel {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> Panel {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(center);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(center - dx) + f(center + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    Panel {
        lo,
        hi,
        value: k * half,
        error: ((k - g) * half).abs(),
    }
}

/// Integrate `f` over `[lo, hi]` to relative tolerance `rel_tol`, starting
/// from `initial_panels` equal subintervals.
pub fn integrate_panels<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, rel_tol: f64, initial_panels: usize) -> Result<f64> {
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::QuadratureFailed {
            lo,
            hi,
            error: f64::INFINITY,
        });
    }
    if hi <= lo {
        return Ok(0.0);
    }
    let panels = initial_panels.max(1);
    let width = (hi - lo) / panels as f64;
    let mut heap = BinaryHeap::with_capacity(4 * panels);
    let (mut total, mut error) = (0.0, 0.0);
    for j in 0..panels {
        let a = lo + j as f64 * width;
        let b = if j + 1 == panels { hi } else { a + width };
        let p = kronrod(&f, a, b);
        total += p.value;
        error += p.error;
        heap.push(p);
    }
    while error > rel_tol * total.abs() && error > f64::MIN_POSITIVE {
        if heap.len() >= MAX_PANELS {
            return Err(Error::QuadratureFailed { lo, hi, error });
        }
        let worst = heap.pop().expect("heap is non-empty");
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid <= worst.lo || mid >= worst.hi {
            // Panel collapsed to machine resolution; keep what we have.
            heap.push(worst);
            break;
        }
        let left = kronrod(&f, worst.lo, mid);
        let right = kronrod(&f, mid, worst.hi);
        total += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
    // Re-sum to shed the drift of the incremental updates.
    Ok(heap.iter().map(|p| p.value).sum())
}

pub fn integrate<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, rel_tol: f64) -> Result<f64> {
    integrate_panels(f, lo, hi, rel_tol, 8)
}

/// `log ∫ exp(log_f)` over `[lo, hi]`, shifting by `log_shift` so that the
/// integrand stays representable. Pick `log_shift` near the maximum of `log_f`.
pub fn log_integrate<F: Fn(f64) -> f64>(
    log_f: F,
    lo: f64,
    hi: f64,
    log_shift: f64,
    rel_tol: f64,
    initial_panels: usize,
) -> Result<f64> {
    let value = integrate_panels(|x| (log_f(x) - log_shift).exp(), lo, hi, rel_tol, initial_panels)?;
    if value > 0.0 {
        Ok(value.ln() + log_shift)
    } else {
        Err(Error::DegenerateEstimate)
    }
}
