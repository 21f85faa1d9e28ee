use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Radial potential as a function of the squared distance `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "param")]
pub enum Potential {
    /// `f_c(r) = e^{-c r}`.
    Exponential(f64),
    /// `p_s(r) = r^{-s}`.
    InversePower(f64),
}

impl Potential {
    pub fn exponential(c: f64) -> Result<Self> {
        Potential::Exponential(c).validated()
    }

    pub fn inverse_power(s: f64) -> Result<Self> {
        Potential::InversePower(s).validated()
    }

    pub fn param(&self) -> f64 {
        match *self {
            Potential::Exponential(c) => c,
            Potential::InversePower(s) => s,
        }
    }

    pub fn validated(self) -> Result<Self> {
        let p = self.param();
        if p > 0.0 && p.is_finite() {
            Ok(self)
        } else {
            Err(Error::DomainError(format!("potential parameter must be positive and finite, got {p}")))
        }
    }

    /// Refuses inverse powers whose lattice sums diverge in dimension `d`.
    pub fn check_convergent(&self, d: usize) -> Result<()> {
        self.validated()?;
        if let Potential::InversePower(s) = *self {
            let half = d as f64 / 2.0;
            if s <= half {
                return Err(Error::DivergentSum { s, half_dim: half });
            }
        }
        Ok(())
    }

    /// `f(r)` for `r > 0`.
    pub fn value(&self, r: f64) -> f64 {
        match *self {
            Potential::Exponential(c) => (-c * r).exp(),
            Potential::InversePower(s) => r.powf(-s),
        }
    }

    /// `j`-th derivative with respect to `r`.
    pub fn derivative(&self, r: f64, j: u32) -> f64 {
        match *self {
            Potential::Exponential(c) => (-c).powi(j as i32) * (-c * r).exp(),
            Potential::InversePower(s) => {
                let mut coef = 1.0;
                for i in 0..j {
                    coef *= -(s + i as f64);
                }
                coef * r.powf(-s - j as f64)
            }
        }
    }
}

impl fmt::Display for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Potential::Exponential(c) => write!(f, "exp:c={c}"),
            Potential::InversePower(s) => write!(f, "pow:s={s}"),
        }
    }
}

impl FromStr for Potential {
    type Err = Error;

    /// `exp:c=<c>` or `pow:s=<s>`.
    fn from_str(text: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("expected exp:c=<c> or pow:s=<s>, found {text:?}"));
        let (kind, rest) = text.split_once(':').ok_or_else(bad)?;
        let (key, value) = rest.split_once('=').ok_or_else(bad)?;
        let value: f64 = value.trim().parse().map_err(|_| bad())?;
        match (kind.trim(), key.trim()) {
            ("exp", "c") => Potential::exponential(value),
            ("pow", "s") => Potential::inverse_power(value),
            _ => Err(bad()),
        }
    }
}

/// `f(r)` with the domain check `r > 0`.
pub fn eval_potential<T: Real>(pot: Potential, r: T) -> Result<T> {
    pot.validated()?;
    if !(r > T::zero()) {
        return Err(Error::DomainError(format!("potential evaluated at r = {r}, needs r > 0")));
    }
    Ok(T::lit(pot.value(r.as_f64())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_and_parsing() {
        let f = Potential::exponential(1.0).unwrap();
        assert!((eval_potential(f, 1.0f64).unwrap() - (-1.0f64).exp()).abs() < 1e-16);
        assert_eq!(eval_potential(Potential::InversePower(2.0), 4.0f64).unwrap(), 1.0 / 16.0);
        assert!(matches!(eval_potential(f, 0.0f64), Err(Error::DomainError(_))));
        assert_eq!("exp:c=3.5".parse::<Potential>().unwrap(), Potential::Exponential(3.5));
        assert_eq!("pow:s=4".parse::<Potential>().unwrap(), Potential::InversePower(4.0));
        assert!("exp:s=1".parse::<Potential>().is_err());
        assert!("pow:s=-1".parse::<Potential>().is_err());
        assert!(Potential::InversePower(1.0).check_convergent(2).is_err());
        assert!(Potential::InversePower(1.01).check_convergent(2).is_ok());
    }

    #[test]
    fn derivatives_match_differences() {
        for pot in [Potential::Exponential(1.7), Potential::InversePower(2.5)] {
            let r = 1.3;
            let h = 1e-5;
            let d1 = (pot.value(r + h) - pot.value(r - h)) / (2.0 * h);
            let d2 = (pot.value(r + h) - 2.0 * pot.value(r) + pot.value(r - h)) / (h * h);
            assert!((pot.derivative(r, 1) - d1).abs() < 1e-8);
            assert!((pot.derivative(r, 2) - d2).abs() < 1e-4);
        }
    }
}
