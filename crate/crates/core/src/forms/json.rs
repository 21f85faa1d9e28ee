//! JSON representation of periodic forms.
//!
//! ```json
//! {"dim": 2, "gram": [[2, 1], [1, 2]], "translations": [[0, 0], ["1/3", "1/3"]]}
//! ```
//!
//! Entries may be JSON numbers or `"p/q"` strings. With `gram_denominator` the
//! Gram entries are integers over that denominator. Integer and rational
//! entries keep the form on the exact path.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{PeriodicForm, QuadForm};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::scalar::{format_rational, parse_rational, rational_from_f64, Field, Rational, Real};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FormJson {
    pub dim: usize,
    pub gram: Vec<Vec<Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gram_denominator: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translations: Option<Vec<Vec<Value>>>,
}

/// Parsed entry: exact when given as an integer or a rational string.
#[derive(Debug, Clone)]
enum Entry {
    Exact(Rational),
    Float(f64),
}

impl Entry {
    fn parse(v: &Value) -> Result<Self> {
        match v {
            Value::Number(n) => {
                if let Some(i) = n.as_i64() {
                    Ok(Entry::Exact(Rational::from_int(i as i128)))
                } else {
                    let f = n.as_f64().ok_or_else(|| Error::Parse(format!("bad number {n}")))?;
                    Ok(Entry::Float(f))
                }
            }
            Value::String(s) => {
                parse_rational(s).map(Entry::Exact).ok_or_else(|| Error::Parse(format!("bad rational {s:?}")))
            }
            other => Err(Error::Parse(format!("expected number or \"p/q\" string, found {other}"))),
        }
    }

    fn as_f64(&self) -> f64 {
        match self {
            Entry::Exact(r) => r.to_f64_lossy(),
            Entry::Float(f) => *f,
        }
    }
}

/// Scalar-independent parsed form.
#[derive(Debug, Clone)]
pub struct FormSpec {
    pub dim: usize,
    exact_gram: Option<Mat<Rational>>,
    float_gram: Mat<f64>,
    exact_translations: Option<Vec<Vec<Rational>>>,
    float_translations: Vec<Vec<f64>>,
}

impl FormSpec {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: FormJson = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_json(&raw)
    }

    pub fn from_json(raw: &FormJson) -> Result<Self> {
        let d = raw.dim;
        if d == 0 {
            return Err(Error::Parse("dim must be positive".into()));
        }
        if raw.gram.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: raw.gram.len() });
        }
        let mut entries = Vec::with_capacity(d * d);
        for row in &raw.gram {
            if row.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: row.len() });
            }
            for v in row {
                entries.push(Entry::parse(v)?);
            }
        }
        if let Some(den) = raw.gram_denominator {
            if den <= 0 {
                return Err(Error::Parse("gram_denominator must be positive".into()));
            }
            let den = Rational::from_int(den as i128);
            for e in entries.iter_mut() {
                match e {
                    Entry::Exact(r) if r.is_integer() => *r = &*r / &den,
                    _ => return Err(Error::Parse("with gram_denominator all gram entries must be integers".into())),
                }
            }
        }
        let float_gram = Mat::from_data(d, d, entries.iter().map(Entry::as_f64).collect());
        let exact_gram = if entries.iter().all(|e| matches!(e, Entry::Exact(_))) {
            Some(Mat::from_data(
                d,
                d,
                entries.iter().map(|e| if let Entry::Exact(r) = e { r.clone() } else { unreachable!() }).collect(),
            ))
        } else {
            None
        };

        let rows = match &raw.translations {
            Some(t) if !t.is_empty() => t.clone(),
            _ => vec![vec![Value::from(0); d]],
        };
        let mut parsed = Vec::with_capacity(rows.len());
        for row in &rows {
            if row.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: row.len() });
            }
            parsed.push(row.iter().map(Entry::parse).collect::<Result<Vec<_>>>()?);
        }
        let float_translations = parsed.iter().map(|r| r.iter().map(Entry::as_f64).collect()).collect();
        let exact_translations = if parsed.iter().flatten().all(|e| matches!(e, Entry::Exact(_))) {
            Some(
                parsed
                    .iter()
                    .map(|r| r.iter().map(|e| if let Entry::Exact(x) = e { x.clone() } else { unreachable!() }).collect())
                    .collect(),
            )
        } else {
            None
        };
        Ok(FormSpec { dim: d, exact_gram, float_gram, exact_translations, float_translations })
    }

    pub fn to_form<T: Real>(&self) -> Result<PeriodicForm<T>> {
        let q = match &self.exact_gram {
            Some(g) => QuadForm::from_exact(g)?,
            None => QuadForm::new(self.float_gram.map(|v| T::lit(*v)))?,
        };
        match &self.exact_translations {
            Some(u) => PeriodicForm::from_exact(q, u),
            None => PeriodicForm::new(
                q,
                self.float_translations.iter().map(|r| r.iter().map(|v| T::lit(*v)).collect()).collect(),
            ),
        }
    }
}

fn exact_value(r: &Rational) -> Value {
    if r.is_integer() {
        if let Ok(i) = r.to_integer().to_string().parse::<i64>() {
            return Value::from(i);
        }
    }
    Value::from(format_rational(r))
}

impl<T: Real> PeriodicForm<T> {
    /// JSON form; exact data is written as integers or `"p/q"` strings.
    pub fn to_json(&self) -> FormJson {
        let d = self.dim();
        let gram = match self.q().exact_gram() {
            Some(g) => g.to_rows().iter().map(|r| r.iter().map(exact_value).collect()).collect(),
            None => self.q().gram().to_rows().iter().map(|r| r.iter().map(|v| Value::from(v.as_f64())).collect()).collect(),
        };
        let translations = match self.exact_translations() {
            Some(u) => u.iter().map(|r| r.iter().map(exact_value).collect()).collect(),
            None => self
                .translations()
                .iter()
                .map(|r| {
                    r.iter()
                        .map(|v| match rational_from_f64(v.as_f64()) {
                            Some(x) if x.denom().bits() <= 12 => exact_value(&x),
                            _ => Value::from(v.as_f64()),
                        })
                        .collect()
                })
                .collect(),
        };
        FormJson { dim: d, gram, gram_denominator: None, translations: Some(translations) }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        FormSpec::from_json_str(s)?.to_form()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_exact_and_float() {
        let p: PeriodicForm<f64> =
            PeriodicForm::from_json_str(r#"{"dim":2,"gram":[[4,0],[0,1]],"translations":[[0,0],["1/2",0]]}"#).unwrap();
        assert!(p.is_exact());
        assert_eq!(p.m(), 2);
        assert_eq!(p.translations()[1][0], 0.5);

        let p: PeriodicForm<f64> = PeriodicForm::from_json_str(r#"{"dim":2,"gram":[[1.5,0.25],[0.25,1]]}"#).unwrap();
        assert!(!p.is_exact());
        assert_eq!(p.m(), 1);

        let p: PeriodicForm<f64> =
            PeriodicForm::from_json_str(r#"{"dim":2,"gram":[[4,2],[2,4]],"gram_denominator":2}"#).unwrap();
        assert_eq!(p.q().gram()[(0, 0)], 2.0);
        assert!(p.q().exact().is_some());
    }

    #[test]
    fn round_trips() {
        let src = r#"{"dim":2,"gram":[["3/2",1],[1,2]],"translations":[[0,0],["1/3","2/3"]]}"#;
        let p: PeriodicForm<f64> = PeriodicForm::from_json_str(src).unwrap();
        let text = serde_json::to_string(&p.to_json()).unwrap();
        let again: PeriodicForm<f64> = PeriodicForm::from_json_str(&text).unwrap();
        assert_eq!(again.q().exact_gram(), p.q().exact_gram());
        assert_eq!(again.exact_translations(), p.exact_translations());
    }

    #[test]
    fn rejects_malformed() {
        assert!(PeriodicForm::<f64>::from_json_str(r#"{"dim":2,"gram":[[1,0]]}"#).is_err());
        assert!(PeriodicForm::<f64>::from_json_str(r#"{"dim":2,"gram":[[1,"x"],[0,1]]}"#).is_err());
        assert!(PeriodicForm::<f64>::from_json_str(r#"{"dim":1,"gram":[[1.5]],"gram_denominator":2}"#).is_err());
    }
}
