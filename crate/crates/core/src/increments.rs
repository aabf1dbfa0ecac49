//! Step laws of the walk.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};

/// Largest window searched by [`IncrementLaw::min_window`].
pub const MIN_WINDOW_CAP: usize = 100_000;

/// A symmetric, zero-mean step distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IncrementLaw {
    /// Steps -1, 0, +1 with masses p, q = 1 - 2p, p.
    DiscretePQ { p: f64 },
    Gaussian { sigma: f64 },
    /// Uniform on [-halfwidth, halfwidth].
    UniformSym { halfwidth: f64 },
}

impl IncrementLaw {
    pub fn pq(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 0.5) {
            return Err(invalid(format!("p must lie in (0, 1/2), got {p}")));
        }
        Ok(Self::DiscretePQ { p })
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(invalid(format!("sigma must be positive, got {sigma}")));
        }
        Ok(Self::Gaussian { sigma })
    }

    pub fn uniform(halfwidth: f64) -> Result<Self> {
        if !(halfwidth > 0.0 && halfwidth.is_finite()) {
            return Err(invalid(format!("halfwidth must be positive, got {halfwidth}")));
        }
        Ok(Self::UniformSym { halfwidth })
    }

    pub fn is_lattice(&self) -> bool {
        matches!(self, Self::DiscretePQ { .. })
    }

    /// The `p` parameter of a (p,q) law.
    pub fn pq_p(&self) -> Option<f64> {
        match *self {
            Self::DiscretePQ { p } => Some(p),
            _ => None,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Self::DiscretePQ { p } => 2.0 * p,
            Self::Gaussian { sigma } => sigma * sigma,
            Self::UniformSym { halfwidth } => halfwidth * halfwidth / 3.0,
        }
    }

    pub fn sigma(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Lebesgue density for continuous laws, point mass for the lattice law.
    pub fn density(&self, x: f64) -> f64 {
        match *self {
            Self::DiscretePQ { p } => {
                if x == 0.0 {
                    1.0 - 2.0 * p
                } else if x == 1.0 || x == -1.0 {
                    p
                } else {
                    0.0
                }
            }
            Self::Gaussian { sigma } => {
                let z = x / sigma;
                (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
            }
            Self::UniformSym { halfwidth } => {
                if x.abs() <= halfwidth {
                    0.5 / halfwidth
                } else {
                    0.0
                }
            }
        }
    }

    /// P[X > x].
    pub fn tail(&self, x: f64) -> f64 {
        match *self {
            Self::DiscretePQ { p } => {
                if x < -1.0 {
                    1.0
                } else if x < 0.0 {
                    1.0 - p
                } else if x < 1.0 {
                    p
                } else {
                    0.0
                }
            }
            Self::Gaussian { sigma } => 0.5 * libm::erfc(x / (sigma * std::f64::consts::SQRT_2)),
            Self::UniformSym { halfwidth } => ((halfwidth - x) / (2.0 * halfwidth)).clamp(0.0, 1.0),
        }
    }

    /// P[X <= x].
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Self::Gaussian { sigma } => 0.5 * libm::erfc(-x / (sigma * std::f64::consts::SQRT_2)),
            _ => 1.0 - self.tail(x),
        }
    }

    /// Half-width of the support, `None` when unbounded.
    pub fn support_halfwidth(&self) -> Option<f64> {
        match *self {
            Self::DiscretePQ { .. } => Some(1.0),
            Self::Gaussian { .. } => None,
            Self::UniformSym { halfwidth } => Some(halfwidth),
        }
    }

    /// Distance beyond which the density is below `rel` times its peak.
    pub fn effective_radius(&self, rel: f64) -> f64 {
        match *self {
            Self::Gaussian { sigma } => sigma * (2.0 * (1.0 / rel).ln()).sqrt(),
            _ => self.support_halfwidth().unwrap_or(f64::INFINITY),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::DiscretePQ { p } => {
                let u: f64 = rng.random();
                if u < p {
                    -1.0
                } else if u < 2.0 * p {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Gaussian { sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                sigma * z
            }
            Self::UniformSym { halfwidth } => (2.0 * rng.random::<f64>() - 1.0) * halfwidth,
        }
    }

    /// Smallest n with P[S_n > a] and P[-S_n > a] both strictly inside (0,1).
    ///
    /// Every shipped law has full support on its (possibly unbounded) interval
    /// of half-width `n * halfwidth` after n steps, with positive mass on both
    /// sides of every interior point, so the upper bound is the only constraint.
    pub fn min_window(&self, a: f64) -> Result<usize> {
        if !(a > 0.0) {
            return Err(invalid(format!("strip width must be positive, got {a}")));
        }
        let Some(hw) = self.support_halfwidth() else {
            return Ok(1);
        };
        (1..=MIN_WINDOW_CAP)
            .find(|&n| n as f64 * hw > a)
            .ok_or(Error::NoWindow { cap: MIN_WINDOW_CAP })
    }
}

impl fmt::Display for IncrementLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::DiscretePQ { p } => write!(f, "pq:p={p}"),
            Self::Gaussian { sigma } => write!(f, "gauss:sigma={sigma}"),
            Self::UniformSym { halfwidth } => write!(f, "unif:hw={halfwidth}"),
        }
    }
}

impl FromStr for IncrementLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::LawSpec(s.to_string());
        let (kind, rest) = s.trim().split_once(':').ok_or_else(bad)?;
        let (key, value) = rest.split_once('=').ok_or_else(bad)?;
        let value: f64 = value.trim().parse().map_err(|_| bad())?;
        match (kind.trim(), key.trim()) {
            ("pq", "p") => Self::pq(value),
            ("gauss", "sigma") => Self::gaussian(value),
            ("unif", "hw") => Self::uniform(value),
            _ => Err(bad()),
        }
    }
}
