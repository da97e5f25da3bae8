//! Independent 1-D oracle for the auxiliary coordinate updates.
//!
//! The subproblem is rebuilt from scratch (entries located by scanning, not
//! through tensor slices; predictions and weights recomputed by hand) and
//! minimized by golden-section search. Objective values are compared in exact
//! arithmetic: in floating point a quadratic is flat to within
//! rounding over an interval of width ~1e-8 around its minimum, which would
//! cap the attainable accuracy at the tolerance being tested.

#![allow(dead_code)]

use std::cmp::Ordering;
use std::ops::{Add, Mul, Sub};

use lft_core::{FactorModel, Mode, SparseTensor};
use num_bigint::BigInt;
use num_traits::{Signed, Zero};

/// Exact dyadic rational `m·2^e`. Every finite `f64` is one, and the set is
/// closed under `+`, `-` and `*`, so no gcd reduction is ever needed.
#[derive(Debug, Clone)]
pub struct Dyadic {
    m: BigInt,
    e: i64,
}

impl Dyadic {
    pub fn zero() -> Self {
        Dyadic { m: BigInt::zero(), e: 0 }
    }

    pub fn from_f64(v: f64) -> Self {
        assert!(v.is_finite(), "{v}");
        if v == 0.0 {
            return Self::zero();
        }
        let bits = v.to_bits();
        let sign = if bits >> 63 == 0 { 1i64 } else { -1 };
        let exp = ((bits >> 52) & 0x7ff) as i64;
        let frac = (bits & ((1u64 << 52) - 1)) as i64;
        let (m, e) = if exp == 0 { (frac, -1074) } else { (frac | (1i64 << 52), exp - 1075) };
        Dyadic { m: BigInt::from(sign * m), e }
    }

    fn aligned(&self, other: &Self) -> (BigInt, BigInt, i64) {
        let e = self.e.min(other.e);
        (&self.m << (self.e - e) as usize, &other.m << (other.e - e) as usize, e)
    }
}

impl Add for &Dyadic {
    type Output = Dyadic;
    fn add(self, rhs: &Dyadic) -> Dyadic {
        let (a, b, e) = self.aligned(rhs);
        Dyadic { m: a + b, e }
    }
}

impl Sub for &Dyadic {
    type Output = Dyadic;
    fn sub(self, rhs: &Dyadic) -> Dyadic {
        let (a, b, e) = self.aligned(rhs);
        Dyadic { m: a - b, e }
    }
}

impl Mul for &Dyadic {
    type Output = Dyadic;
    fn mul(self, rhs: &Dyadic) -> Dyadic {
        Dyadic { m: &self.m * &rhs.m, e: self.e + rhs.e }
    }
}

impl PartialEq for Dyadic {
    fn eq(&self, other: &Self) -> bool {
        self.partial_cmp(other) == Some(Ordering::Equal)
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        let d = self - other;
        Some(if d.m.is_zero() {
            Ordering::Equal
        } else if d.m.is_positive() {
            Ordering::Greater
        } else {
            Ordering::Less
        })
    }
}

/// One data term `½ w (y - rest - x·c)²`.
#[derive(Debug, Clone, Copy)]
pub struct Term {
    pub w: f64,
    pub y: f64,
    pub rest: f64,
    pub c: f64,
}

/// `f(x) = Σ ½ w (y - rest - x c)² + (κ/2)(x - primal)² + mult·(x - primal)`
///
/// This is the penalty form `(κ/2)(x - primal + mult/κ)²` without its constant
/// `mult²/2κ`, which keeps every coefficient a plain `f64`.
#[derive(Debug, Clone)]
pub struct Subproblem {
    pub terms: Vec<Term>,
    pub kappa: f64,
    pub primal: f64,
    pub mult: f64,
}

impl Subproblem {
    /// Exact value of `2·f(x)` (the factor 2 does not move the minimizer).
    pub fn twice_value(&self, x: f64) -> Dyadic {
        let d = Dyadic::from_f64;
        let x = d(x);
        let mut total = Dyadic::zero();
        for t in &self.terms {
            let r = &(&d(t.y) - &d(t.rest)) - &(&x * &d(t.c));
            total = &total + &(&d(t.w) * &(&r * &r));
        }
        let gap = &x - &d(self.primal);
        total = &total + &(&d(self.kappa) * &(&gap * &gap));
        let two_mult = d(2.0 * self.mult);
        &total + &(&two_mult * &gap)
    }

    /// Golden-section search on `[lo, hi]` down to adjacent doubles.
    pub fn golden_section(&self, mut lo: f64, mut hi: f64) -> f64 {
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = hi - (hi - lo) * inv_phi;
        let mut d = lo + (hi - lo) * inv_phi;
        let (mut fc, mut fd) = (self.twice_value(c), self.twice_value(d));
        for _ in 0..400 {
            if !(lo < c && c < d && d < hi) {
                break;
            }
            if hi - lo <= 4.0 * f64::EPSILON * lo.abs().max(hi.abs()).max(1e-300) {
                break;
            }
            if fc < fd {
                hi = d;
                (d, fd) = (c, fc);
                c = hi - (hi - lo) * inv_phi;
                fc = self.twice_value(c);
            } else {
                lo = c;
                (c, fc) = (d, fd);
                d = lo + (hi - lo) * inv_phi;
                fd = self.twice_value(d);
            }
        }
        0.5 * (lo + hi)
    }

/// Brute-force minimum over a uniform grid; coarse cross-check only.
    pub fn grid_min(&self, lo: f64, hi: f64, steps: usize) -> f64 {
        let mut best = lo;
        let mut best_v = self.twice_value(lo);
        for s in 1..=steps {
            let x = lo + (hi - lo) * s as f64 / steps as f64;
            let v = self.twice_value(x);
            if v < best_v {
                best = x;
                best_v = v;
            }
        }
        best
    }
}

/// Loss weight recomputed without the library: `1/(γ²+e²)` or `1`.
pub fn weight(gamma: Option<f64>, e: f64) -> f64 {
    match gamma {
        Some(g) => 1.0 / (g * g + e * e),
        None => 1.0,
    }
}

fn brute_predict(m: &FactorModel, i: usize, j: usize, k: usize) -> f64 {
    let (u, s, t) = (
        m.factor(Mode::User).row(i),
        m.factor(Mode::Service).row(j),
        m.factor(Mode::Time).row(k),
    );
    let mut acc = 0.0;
    for r in 0..m.rank() {
        acc += u[r] * s[r] * t[r];
    }
    acc + m.bias(Mode::User)[i] + m.bias(Mode::Service)[j] + m.bias(Mode::Time)[k]
}

fn coord(i: usize, j: usize, k: usize, mode: Mode) -> usize {
    match mode {
        Mode::User => i,
        Mode::Service => j,
        Mode::Time => k,
    }
}

/// Frozen-weight subproblem for auxiliary factor `(mode, index, r)`.
/// `rank = None` selects the bias of `(mode, index)` instead.
#[allow(clippy::too_many_arguments)]
pub fn subproblem(
    tensor: &SparseTensor,
    aux: &FactorModel,
    primal: &FactorModel,
    mult: &FactorModel,
    kappa: f64,
    gamma: Option<f64>,
    mode: Mode,
    index: usize,
    rank: Option<usize>,
) -> Subproblem {
    let old = match rank {
        Some(r) => aux.factor(mode).row(index)[r],
        None => aux.bias(mode)[index],
    };
    let mut terms = Vec::new();
    for e in tensor.entries() {
        if coord(e.i, e.j, e.k, mode) != index {
            continue;
        }
        let pred = brute_predict(aux, e.i, e.j, e.k);
        let c = match rank {
            Some(r) => {
                let (u, s, t) = (
                    aux.factor(Mode::User).row(e.i)[r],
                    aux.factor(Mode::Service).row(e.j)[r],
                    aux.factor(Mode::Time).row(e.k)[r],
                );
                match mode {
                    Mode::User => s * t,
                    Mode::Service => u * t,
                    Mode::Time => u * s,
                }
            }
            None => 1.0,
        };
        terms.push(Term { w: weight(gamma, e.y - pred), y: e.y, rest: pred - old * c, c });
    }
    let (p, m) = match rank {
        Some(r) => (primal.factor(mode).row(index)[r], mult.factor(mode).row(index)[r]),
        None => (primal.bias(mode)[index], mult.bias(mode)[index]),
    };
    Subproblem { terms, kappa, primal: p, mult: m }
}

/// Checks the exact arithmetic and the search on hand-solvable cases.
pub fn self_test() {
    let d = Dyadic::from_f64;
    assert!(&d(0.1) + &d(0.2) != d(0.3));
    assert!(&d(0.5) + &d(0.25) == d(0.75));
    assert!(&d(-3.0) * &d(2.5) == d(-7.5));
    assert!(d(f64::MIN_POSITIVE / 8.0) > Dyadic::zero());
    assert!(d(-1e300) < d(1e-300));

    // minimizer is primal - mult/kappa = 1.0, where 2f = 2·0.25 - 2·0.5
    let s = Subproblem { terms: vec![], kappa: 2.0, primal: 1.5, mult: 1.0 };
    assert!(s.twice_value(1.0) == d(-0.5));
    assert!((s.golden_section(-10.0, 10.0) - 1.0).abs() < 1e-12);

    // one data term w=1, y=3, rest=0, c=1 and no penalty: minimizer 3
    let s = Subproblem {
        terms: vec![Term { w: 1.0, y: 3.0, rest: 0.0, c: 1.0 }],
        kappa: 0.0,
        primal: 0.0,
        mult: 0.0,
    };
    assert!((s.golden_section(-100.0, 100.0) - 3.0).abs() < 1e-12);
}
