//! Runtime values, variable domains and initial-value distributions.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Score values on real domains are kept on this dyadic grid so that reward
/// sums telescope exactly in `f64`.
pub const SCORE_QUANTUM: f64 = 1.0 / 65536.0;
/// Largest admissible |bound| for a real score variable.
pub const SCORE_REAL_LIMIT: f64 = (1u64 << 36) as f64;
/// Largest admissible |bound| for an integer score variable.
pub const SCORE_INT_LIMIT: i64 = 1 << 52;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Real(f64),
    Sym(String),
    Vector(Vec<f64>),
}

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Bool(_) => "bool",
            Value::Int(_) => "int",
            Value::Real(_) => "real",
            Value::Sym(_) => "symbol",
            Value::Vector(_) => "vector",
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Real(r) => Some(*r),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }
}

/// Formats a real so that it reads back as a real (`3.0`, not `3`).
pub fn fmt_real(r: f64) -> String {
    let s = format!("{r:?}");
    if s.contains(['.', 'e', 'E']) || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Real(r) => f.write_str(&fmt_real(*r)),
            Value::Sym(s) => write!(f, ":{s}"),
            Value::Vector(v) => {
                f.write_str("[")?;
                for (i, x) in v.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    f.write_str(&fmt_real(*x))?;
                }
                f.write_str("]")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Domain {
    Bool,
    Int { lo: i64, hi: i64 },
    Real { lo: f64, hi: f64 },
    Enum { labels: Vec<String> },
    Vector { len: usize, lo: f64, hi: f64 },
}

impl Domain {
    /// Returns a description of the first invariant violation, if any.
    pub fn check(&self) -> Result<(), String> {
        match self {
            Domain::Bool => Ok(()),
            Domain::Int { lo, hi } => {
                if lo > hi {
                    Err(format!("lower bound {lo} exceeds upper bound {hi}"))
                } else {
                    Ok(())
                }
            }
            Domain::Real { lo, hi } | Domain::Vector { lo, hi, .. } => {
                if !lo.is_finite() || !hi.is_finite() {
                    return Err("bounds must be finite".into());
                }
                if lo > hi {
                    return Err(format!("lower bound {} exceeds upper bound {}", fmt_real(*lo), fmt_real(*hi)));
                }
                if let Domain::Vector { len: 0, .. } = self {
                    return Err("vector length must be at least 1".into());
                }
                Ok(())
            }
            Domain::Enum { labels } => {
                if labels.is_empty() {
                    return Err("enumeration needs at least one label".into());
                }
                for (i, l) in labels.iter().enumerate() {
                    if labels[..i].contains(l) {
                        return Err(format!("duplicate label `{l}`"));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn contains(&self, v: &Value) -> bool {
        match (self, v) {
            (Domain::Bool, Value::Bool(_)) => true,
            (Domain::Int { lo, hi }, Value::Int(i)) => lo <= i && i <= hi,
            (Domain::Real { lo, hi }, Value::Real(r)) => *lo <= *r && *r <= *hi,
            (Domain::Real { lo, hi }, Value::Int(i)) => *lo <= *i as f64 && (*i as f64) <= *hi,
            (Domain::Enum { labels }, Value::Sym(s)) => labels.contains(s),
            (Domain::Vector { len, lo, hi }, Value::Vector(xs)) => {
                xs.len() == *len && xs.iter().all(|x| *lo <= *x && *x <= *hi)
            }
            _ => false,
        }
    }

    /// Number of values, for finite domains.
    pub fn size(&self) -> Option<u64> {
        match self {
            Domain::Bool => Some(2),
            Domain::Int { lo, hi } => u64::try_from(i128::from(*hi) - i128::from(*lo) + 1).ok(),
            Domain::Enum { labels } => Some(labels.len() as u64),
            Domain::Real { .. } | Domain::Vector { .. } => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.size().is_some()
    }

    /// All values of a finite domain in canonical order. Callers bound the
    /// size first.
    pub fn values(&self) -> Option<Vec<Value>> {
        match self {
            Domain::Bool => Some(vec![Value::Bool(false), Value::Bool(true)]),
            Domain::Int { lo, hi } => Some((*lo..=*hi).map(Value::Int).collect()),
            Domain::Enum { labels } => Some(labels.iter().cloned().map(Value::Sym).collect()),
            _ => None,
        }
    }

    /// Zero-based position of `v` among `values()`.
    pub fn index_of(&self, v: &Value) -> Option<u64> {
        match (self, v) {
            (Domain::Bool, Value::Bool(b)) => Some(u64::from(*b)),
            (Domain::Int { lo, hi }, Value::Int(i)) if lo <= i && i <= hi => Some((i - lo) as u64),
            (Domain::Enum { labels }, Value::Sym(s)) => labels.iter().position(|l| l == s).map(|p| p as u64),
            _ => None,
        }
    }

    pub fn is_numeric_scalar(&self) -> bool {
        matches!(self, Domain::Int { .. } | Domain::Real { .. })
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Bool => f.write_str("bool"),
            Domain::Int { lo, hi } => write!(f, "int[{lo}, {hi}]"),
            Domain::Real { lo, hi } => write!(f, "real[{}, {}]", fmt_real(*lo), fmt_real(*hi)),
            Domain::Enum { labels } => write!(f, "enum({})", labels.join(", ")),
            Domain::Vector { len, lo, hi } => write!(f, "vec{len}[{}, {}]", fmt_real(*lo), fmt_real(*hi)),
        }
    }
}

/// Initial-value distribution of a state variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Init {
    Point { value: Value },
    Uniform,
    Categorical { outcomes: Vec<(Value, f64)> },
}

impl Init {
    pub fn point(value: Value) -> Self {
        Init::Point { value }
    }
}

impl fmt::Display for Init {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Init::Point { value } => write!(f, "= {value}"),
            Init::Uniform => f.write_str("~ uniform"),
            Init::Categorical { outcomes } => {
                f.write_str("~ categorical(")?;
                for (i, (v, w)) in outcomes.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v} => {}", fmt_real(*w))?;
                }
                f.write_str(")")
            }
        }
    }
}

/// Why a value could not be stored in a domain.
#[derive(Clone, Debug, PartialEq)]
pub enum CoerceError {
    Type { expected: String, found: &'static str },
    Label(String),
    NonFinite,
}

impl fmt::Display for CoerceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoerceError::Type { expected, found } => write!(f, "expected {expected}, found {found}"),
            CoerceError::Label(l) => write!(f, "`{l}` is not a label of the domain"),
            CoerceError::NonFinite => f.write_str("value is NaN"),
        }
    }
}

fn clamp_f(x: f64, lo: f64, hi: f64) -> f64 {
    if x < lo {
        lo
    } else if x > hi {
        hi
    } else {
        x
    }
}

fn real_to_int(r: f64) -> i64 {
    // `as` saturates on overflow and maps ±inf to the i64 extremes.
    r.round() as i64
}

/// Converts `v` into `domain`, clamping numeric values into bounds.
///
/// Returns the stored value and whether clamping changed it. Reals written to
/// integer domains are rounded half away from zero first.
pub fn coerce(domain: &Domain, v: Value) -> Result<(Value, bool), CoerceError> {
    match domain {
        Domain::Bool => match v {
            Value::Bool(_) => Ok((v, false)),
            other => Err(CoerceError::Type { expected: "bool".into(), found: other.type_name() }),
        },
        Domain::Int { lo, hi } => {
            let raw = match v {
                Value::Int(i) => i,
                Value::Real(r) if r.is_nan() => return Err(CoerceError::NonFinite),
                Value::Real(r) => real_to_int(r),
                other => return Err(CoerceError::Type { expected: "int".into(), found: other.type_name() }),
            };
            let c = raw.clamp(*lo, *hi);
            Ok((Value::Int(c), c != raw))
        }
        Domain::Real { lo, hi } => {
            let raw = match v {
                Value::Int(i) => i as f64,
                Value::Real(r) if r.is_nan() => return Err(CoerceError::NonFinite),
                Value::Real(r) => r,
                other => return Err(CoerceError::Type { expected: "real".into(), found: other.type_name() }),
            };
            let c = clamp_f(raw, *lo, *hi);
            Ok((Value::Real(c), c != raw))
        }
        Domain::Enum { labels } => match v {
            Value::Sym(s) if labels.contains(&s) => Ok((Value::Sym(s), false)),
            Value::Sym(s) => Err(CoerceError::Label(s)),
            other => Err(CoerceError::Type { expected: "symbol".into(), found: other.type_name() }),
        },
        Domain::Vector { len, lo, hi } => match v {
            Value::Vector(xs) if xs.len() == *len => {
                if xs.iter().any(|x| x.is_nan()) {
                    return Err(CoerceError::NonFinite);
                }
                let mut clamped = false;
                let ys = xs
                    .into_iter()
                    .map(|x| {
                        let c = clamp_f(x, *lo, *hi);
                        clamped |= c != x;
                        c
                    })
                    .collect();
                Ok((Value::Vector(ys), clamped))
            }
            Value::Vector(xs) => Err(CoerceError::Type {
                expected: format!("vector of length {len}"),
                found: if xs.is_empty() { "empty vector" } else { "vector of another length" },
            }),
            other => Err(CoerceError::Type { expected: "vector".into(), found: other.type_name() }),
        },
    }
}

/// Rounds a real score onto [`SCORE_QUANTUM`].
pub fn quantize_score(v: Value) -> Value {
    match v {
        Value::Real(r) => Value::Real((r / SCORE_QUANTUM).round() * SCORE_QUANTUM),
        other => other,
    }
}
