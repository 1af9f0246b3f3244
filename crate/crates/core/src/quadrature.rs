//! Adaptive Gauss–Kronrod quadrature used for weight functions without closed forms.

#![allow(clippy::excessive_precision)]

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_5,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_48,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_19,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_42,
    0.204_432_940_075_298_89,
    0.209_482_141_084_727_82,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_64, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadEstimate {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> (f64, f64) {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (k, (&x, &wk)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kronrod += wk * pair;
        if k % 2 == 1 {
            gauss += WG[k / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

struct Segment {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive G7/K15 integration of `f` over `[lo, hi]`.
///
/// Bisects the interval with the largest error estimate until the summed
/// estimate drops below `max(abs_tol, rel_tol * |value|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, abs_tol: f64, rel_tol: f64) -> QuadEstimate {
    const MAX_SEGMENTS: usize = 4096;
    if hi == lo {
        return QuadEstimate { value: 0.0, error: 0.0, converged: true };
    }
    let (value, error) = gk15(&f, lo, hi);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { lo, hi, value, error });
    let mut total = value;
    let mut total_err = error;
    while total_err > abs_tol.max(rel_tol * total.abs()) {
        if heap.len() >= MAX_SEGMENTS {
            return QuadEstimate { value: total, error: total_err, converged: false };
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid <= worst.lo || mid >= worst.hi {
            // interval can no longer be split in floating point
            heap.push(worst);
            return QuadEstimate { value: total, error: total_err, converged: false };
        }
        let (lv, le) = gk15(&f, worst.lo, mid);
        let (rv, re) = gk15(&f, mid, worst.hi);
        total += lv + rv - worst.value;
        total_err += le + re - worst.error;
        heap.push(Segment { lo: worst.lo, hi: mid, value: lv, error: le });
        heap.push(Segment { lo: mid, hi: worst.hi, value: rv, error: re });
    }
    // Re-sum to shed the drift from incremental updates.
    let value = heap.iter().map(|s| s.value).sum();
    let error = heap.iter().map(|s| s.error).sum();
    QuadEstimate { value, error, converged: true }
}

/// Fixed-order Gauss–Legendre rule on `[lo, hi]` with 20 nodes.
///
/// Used for smooth integrands where a closed error bound is not needed.
pub fn gauss_legendre_20<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> f64 {
    const X: [f64; 10] = [
        0.076_526_521_133_497_34,
        0.227_785_851_141_645_07,
        0.373_706_088_715_419_55,
        0.510_867_001_950_827_1,
        0.636_053_680_726_515,
        0.746_331_906_460_150_8,
        0.839_116_971_822_218_8,
        0.912_234_428_251_326,
        0.963_971_927_277_913_8,
        0.993_128_599_185_094_9,
    ];
    const W: [f64; 10] = [
        0.152_753_387_130_725_84,
        0.149_172_986_472_603_74,
        0.142_096_109_318_382_04,
        0.131_688_638_449_176_64,
        0.118_194_531_961_518_41,
        0.101_930_119_817_240_44,
        0.083_276_741_576_704_75,
        0.062_672_048_334_109_07,
        0.040_601_429_800_386_94,
        0.017_614_007_139_152_118,
    ];
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let mut acc = 0.0;
    for (&x, &w) in X.iter().zip(W.iter()) {
        acc += w * (f(center - half * x) + f(center + half * x));
    }
    acc * half
}
