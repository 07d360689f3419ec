use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use super::expr::{fmt_rational, Expr};

/// `significand * 10^exponent`, kept exactly as written.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Decimal {
    pub significand: BigInt,
    pub exponent: i32,
}

impl Decimal {
    pub fn new(significand: BigInt, exponent: i32) -> Self {
        Self { significand, exponent }
    }

    pub fn to_rational(&self) -> BigRational {
        let scale = num_traits::pow(BigInt::from(10), self.exponent.unsigned_abs() as usize);
        if self.exponent >= 0 {
            BigRational::from_integer(&self.significand * scale)
        } else {
            BigRational::new(self.significand.clone(), scale)
        }
    }
}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exponent >= 0 {
            let scale = num_traits::pow(BigInt::from(10), self.exponent as usize);
            return write!(f, "{}", &self.significand * scale);
        }
        let places = self.exponent.unsigned_abs() as usize;
        let digits = self.significand.abs().to_string();
        let sign = if self.significand.is_negative() { "-" } else { "" };
        let padded = if digits.len() <= places {
            format!("{}{}", "0".repeat(places + 1 - digits.len()), digits)
        } else {
            digits
        };
        let (int, frac) = padded.split_at(padded.len() - places);
        write!(f, "{sign}{int}.{frac}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Interval {
    pub lo: AnswerValue,
    pub hi: AnswerValue,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

/// Row-major rectangular matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    cells: Vec<AnswerValue>,
}

impl Matrix {
    /// Returns `None` unless every row has the same non-zero length.
    pub fn from_rows(rows: Vec<Vec<AnswerValue>>) -> Option<Self> {
        let cols = rows.first()?.len();
        if cols == 0 || rows.iter().any(|r| r.len() != cols) {
            return None;
        }
        let n = rows.len();
        Some(Self {
            rows: n,
            cols,
            cells: rows.into_iter().flatten().collect(),
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, r: usize, c: usize) -> &AnswerValue {
        &self.cells[r * self.cols + c]
    }

    pub fn cells(&self) -> &[AnswerValue] {
        &self.cells
    }

    pub fn is_vector(&self) -> bool {
        self.rows == 1 || self.cols == 1
    }
}

/// A parsed final answer.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AnswerValue {
    Integer(BigInt),
    /// Always in lowest terms with a positive denominator other than one.
    Rational(BigRational),
    Decimal(Decimal),
    Symbolic(Expr),
    Tuple(Vec<AnswerValue>),
    SetValue(Vec<AnswerValue>),
    Interval(Box<Interval>),
    Matrix(Matrix),
    Boolean(bool),
    Text(String),
}

/// Reduces `num/den` to lowest terms with a positive denominator.
pub fn normalize_rational(num: BigInt, den: BigInt) -> Option<(BigInt, BigInt)> {
    if den.is_zero() {
        return None;
    }
    let g = num.gcd(&den);
    let (mut n, mut d) = if g.is_zero() { (num, den) } else { (num / &g, den / &g) };
    if d.is_negative() {
        n = -n;
        d = -d;
    }
    Some((n, d))
}

impl AnswerValue {
    /// Integer when the denominator is one, otherwise a reduced Rational.
    pub fn from_rational(q: BigRational) -> Self {
        if q.is_integer() {
            AnswerValue::Integer(q.to_integer())
        } else {
            AnswerValue::Rational(q)
        }
    }

    pub fn from_fraction(num: BigInt, den: BigInt) -> Option<Self> {
        let (n, d) = normalize_rational(num, den)?;
        Some(Self::from_rational(BigRational::new_raw(n, d)))
    }

    /// Exact value for Integer, Rational and Decimal.
    pub fn exact(&self) -> Option<BigRational> {
        match self {
            AnswerValue::Integer(n) => Some(BigRational::from_integer(n.clone())),
            AnswerValue::Rational(q) => Some(q.clone()),
            AnswerValue::Decimal(d) => Some(d.to_rational()),
            _ => None,
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            AnswerValue::Integer(_) | AnswerValue::Rational(_) | AnswerValue::Decimal(_)
        )
    }

    /// Numeric or symbolic values as an expression tree.
    pub fn as_expr(&self) -> Option<Expr> {
        match self {
            AnswerValue::Integer(_) | AnswerValue::Rational(_) => Some(Expr::Num(self.exact()?)),
            AnswerValue::Decimal(d) => Some(Expr::Dec(d.to_rational())),
            AnswerValue::Symbolic(e) => Some(e.clone()),
            _ => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            AnswerValue::Integer(_) => "integer",
            AnswerValue::Rational(_) => "rational",
            AnswerValue::Decimal(_) => "decimal",
            AnswerValue::Symbolic(_) => "symbolic",
            AnswerValue::Tuple(_) => "tuple",
            AnswerValue::SetValue(_) => "set",
            AnswerValue::Interval(_) => "interval",
            AnswerValue::Matrix(_) => "matrix",
            AnswerValue::Boolean(_) => "boolean",
            AnswerValue::Text(_) => "text",
        }
    }

    /// A numeric value guaranteed to differ from this one, in the same notation.
    pub fn plus_one(&self) -> Option<AnswerValue> {
        match self {
            AnswerValue::Integer(n) => Some(AnswerValue::Integer(n + 1)),
            AnswerValue::Rational(q) => Some(AnswerValue::from_rational(q + BigRational::one())),
            AnswerValue::Decimal(d) if d.exponent >= 0 => {
                let scale = num_traits::pow(BigInt::from(10), d.exponent as usize);
                Some(AnswerValue::Decimal(Decimal::new(&d.significand * scale + 1, 0)))
            }
            AnswerValue::Decimal(d) => {
                let unit = num_traits::pow(BigInt::from(10), d.exponent.unsigned_abs() as usize);
                Some(AnswerValue::Decimal(Decimal::new(&d.significand + unit, d.exponent)))
            }
            _ => None,
        }
    }
}

fn join(f: &mut fmt::Formatter<'_>, items: &[AnswerValue]) -> fmt::Result {
    for (i, v) in items.iter().enumerate() {
        if i > 0 {
            write!(f, ", ")?;
        }
        write!(f, "{v}")?;
    }
    Ok(())
}

impl fmt::Display for AnswerValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnswerValue::Integer(n) => write!(f, "{n}"),
            AnswerValue::Rational(q) => fmt_rational(q, f),
            AnswerValue::Decimal(d) => write!(f, "{d}"),
            AnswerValue::Symbolic(e) => write!(f, "{e}"),
            AnswerValue::Tuple(items) => {
                write!(f, "(")?;
                join(f, items)?;
                write!(f, ")")
            }
            AnswerValue::SetValue(items) => {
                write!(f, "\\{{")?;
                join(f, items)?;
                write!(f, "\\}}")
            }
            AnswerValue::Interval(iv) => write!(
                f,
                "{}{}, {}{}",
                if iv.lo_closed { "[" } else { "(" },
                iv.lo,
                iv.hi,
                if iv.hi_closed { "]" } else { ")" }
            ),
            AnswerValue::Matrix(m) => {
                write!(f, "\\begin{{pmatrix}}")?;
                for r in 0..m.rows {
                    if r > 0 {
                        write!(f, " \\\\ ")?;
                    }
                    for c in 0..m.cols {
                        if c > 0 {
                            write!(f, " & ")?;
                        }
                        write!(f, "{}", m.get(r, c))?;
                    }
                }
                write!(f, "\\end{{pmatrix}}")
            }
            AnswerValue::Boolean(b) => write!(f, "{b}"),
            AnswerValue::Text(t) => write!(f, "{t}"),
        }
    }
}
