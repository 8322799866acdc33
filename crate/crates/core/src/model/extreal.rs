use std::cmp::Ordering;
use std::fmt;
use std::ops::Add;

use crate::error::{Error, Result};

/// Values at or above this magnitude are treated as `+∞`.
pub const CAP: f64 = 1e30;
/// Intermediates below this value signal a genuine descent to `−∞`.
pub const NEG_GUARD: f64 = -1e15;

/// A value in `(−∞, +∞]`.
#[derive(Debug, Clone, Copy)]
pub enum ExtReal {
    Finite(f64),
    PlusInf,
}

impl ExtReal {
    /// Converts an `f64`: `NaN` is rejected, values `≥ CAP` become `+∞`,
    /// values below [`NEG_GUARD`] raise [`Error::NegativeInfinityDetected`].
    pub fn from_f64(v: f64) -> Result<ExtReal> {
        if v.is_nan() {
            return Err(Error::InvalidInput("NaN value".into()));
        }
        if v < NEG_GUARD {
            return Err(Error::NegativeInfinityDetected);
        }
        Ok(if v >= CAP { ExtReal::PlusInf } else { ExtReal::Finite(v) })
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn is_inf(&self) -> bool {
        matches!(self, ExtReal::PlusInf)
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::PlusInf => None,
        }
    }

    /// `+∞` maps to `f64::INFINITY`.
    pub fn to_f64(&self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }

    pub fn min(self, other: ExtReal) -> ExtReal {
        if other < self { other } else { self }
    }

    pub fn max(self, other: ExtReal) -> ExtReal {
        if other > self { other } else { self }
    }

    /// Minimum of a list; empty or all-`+∞` lists give `+∞`.
    pub fn min_of<I: IntoIterator<Item = ExtReal>>(it: I) -> ExtReal {
        it.into_iter().fold(ExtReal::PlusInf, ExtReal::min)
    }

    /// Agreement test used throughout: both `+∞`, or finite within `tol`.
    pub fn agrees(&self, other: &ExtReal, tol: f64) -> bool {
        match (self, other) {
            (ExtReal::PlusInf, ExtReal::PlusInf) => true,
            (ExtReal::Finite(a), ExtReal::Finite(b)) => (a - b).abs() <= tol,
            _ => false,
        }
    }

    /// Agreement within `max(abs, rel·|self|)`.
    pub fn agrees_rel(&self, other: &ExtReal, abs: f64, rel: f64) -> bool {
        let scale = self.finite().map_or(0.0, f64::abs);
        self.agrees(other, abs.max(rel * scale))
    }

    pub fn scale(self, s: f64) -> ExtReal {
        debug_assert!(s >= 0.0);
        match self {
            ExtReal::Finite(v) => ExtReal::Finite(v * s),
            ExtReal::PlusInf if s == 0.0 => ExtReal::Finite(0.0),
            ExtReal::PlusInf => ExtReal::PlusInf,
        }
    }
}

impl PartialEq for ExtReal {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for ExtReal {}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExtReal {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (ExtReal::PlusInf, ExtReal::PlusInf) => Ordering::Equal,
            (ExtReal::PlusInf, _) => Ordering::Greater,
            (_, ExtReal::PlusInf) => Ordering::Less,
            (ExtReal::Finite(a), ExtReal::Finite(b)) => a.partial_cmp(b).unwrap_or(Ordering::Equal),
        }
    }
}

impl Add for ExtReal {
    type Output = ExtReal;
    fn add(self, rhs: ExtReal) -> ExtReal {
        match (self, rhs) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a + b),
            _ => ExtReal::PlusInf,
        }
    }
}

impl Add<f64> for ExtReal {
    type Output = ExtReal;
    fn add(self, rhs: f64) -> ExtReal {
        self + ExtReal::Finite(rhs)
    }
}

impl From<f64> for ExtReal {
    /// Lossy: `+∞` and values `≥ CAP` become `PlusInf`.
    fn from(v: f64) -> Self {
        if v >= CAP { ExtReal::PlusInf } else { ExtReal::Finite(v) }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::PlusInf => write!(f, "+inf"),
            ExtReal::Finite(v) => write!(f, "{}", v),
        }
    }
}
