//! Scalar abstraction for the numeric core.
//!
//! All free energies, message tables and scores are generic over [`Real`],
//! so the same code runs in `f32` or `f64`. The crate-level defaults fix
//! `f64`, which is what the tolerance contracts in the test suite assume.

use std::fmt;
use std::iter::{Product, Sum};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point scalar usable throughout the crate.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Product
    + fmt::Debug
    + fmt::Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Widening (or identity) conversion to `f64`.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Conversion from `f64` into any [`Real`]; panics only for values outside
/// the target type's range, which no caller in this crate produces.
pub fn real<S: Real>(x: f64) -> S {
    <S as FromPrimitive>::from_f64(x).expect("f64 value representable in scalar type")
}

/// Streaming log-sum-exp accumulator.
///
/// Maintains `ln Σ exp(x_i)` over a sequence of log-scale terms without
/// ever leaving the log domain, so partition sums with large `|ln ψ|`
/// neither overflow nor underflow.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp<S> {
    max: S,
    sum: S,
}

impl<S: Real> Default for LogSumExp<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Real> LogSumExp<S> {
    pub fn new() -> Self {
        Self {
            max: S::neg_infinity(),
            sum: S::zero(),
        }
    }

    pub fn add(&mut self, x: S) {
        if x == S::neg_infinity() {
            return;
        }
        if x <= self.max {
            self.sum = self.sum + (x - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - x).exp() + S::one();
            self.max = x;
        }
    }

    /// `ln Σ exp(x_i)`; `-inf` when empty.
    pub fn value(&self) -> S {
        if self.max == S::neg_infinity() {
            S::neg_infinity()
        } else {
            self.max + self.sum.ln()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.max == S::neg_infinity()
    }
}
