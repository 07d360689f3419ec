//! Symbolic expression trees used for non-rational answers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Largest integer exponent folded exactly; bigger powers stay symbolic.
const MAX_EXACT_EXPONENT: u32 = 4096;
/// Bit budget for an exactly folded power.
const MAX_EXACT_BITS: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Constant {
    Pi,
    E,
    Infinity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Function {
    Sin,
    Cos,
    Tan,
    Ln,
    Log,
    Exp,
}

impl Function {
    pub fn from_command(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Function::Sin,
            "cos" => Function::Cos,
            "tan" => Function::Tan,
            "ln" => Function::Ln,
            "log" => Function::Log,
            "exp" => Function::Exp,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Function::Sin => "sin",
            Function::Cos => "cos",
            Function::Tan => "tan",
            Function::Ln => "ln",
            Function::Log => "log",
            Function::Exp => "exp",
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Function::Sin => x.sin(),
            Function::Cos => x.cos(),
            Function::Tan => x.tan(),
            Function::Ln => x.ln(),
            Function::Log => x.log10(),
            Function::Exp => x.exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    /// Exact number written as an integer or fraction.
    Num(BigRational),
    /// Exact value of a decimal literal; marks the expression as rounded.
    Dec(BigRational),
    Const(Constant),
    Var(String),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Sqrt(Box<Expr>),
    Func(Function, Box<Expr>),
}

impl Expr {
    pub fn int(n: i64) -> Self {
        Expr::Num(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Var(v) => {
                out.insert(v.clone());
            }
            Expr::Num(_) | Expr::Dec(_) | Expr::Const(_) => {}
            Expr::Neg(a) | Expr::Sqrt(a) | Expr::Func(_, a) => a.collect_vars(out),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn has_decimal(&self) -> bool {
        match self {
            Expr::Dec(_) => true,
            Expr::Num(_) | Expr::Const(_) | Expr::Var(_) => false,
            Expr::Neg(a) | Expr::Sqrt(a) | Expr::Func(_, a) => a.has_decimal(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.has_decimal() || b.has_decimal()
            }
        }
    }

    /// Folds the expression to an exact rational when every step stays rational.
    pub fn try_exact(&self) -> Option<BigRational> {
        match self {
            Expr::Num(q) | Expr::Dec(q) => Some(q.clone()),
            Expr::Const(_) | Expr::Var(_) | Expr::Func(..) => None,
            Expr::Neg(a) => Some(-a.try_exact()?),
            Expr::Add(a, b) => Some(a.try_exact()? + b.try_exact()?),
            Expr::Sub(a, b) => Some(a.try_exact()? - b.try_exact()?),
            Expr::Mul(a, b) => Some(a.try_exact()? * b.try_exact()?),
            Expr::Div(a, b) => {
                let d = b.try_exact()?;
                if d.is_zero() {
                    return None;
                }
                Some(a.try_exact()? / d)
            }
            Expr::Sqrt(a) => exact_root(&a.try_exact()?, 2),
            Expr::Pow(a, b) => {
                let base = a.try_exact()?;
                let exp = b.try_exact()?;
                exact_pow(&base, &exp)
            }
        }
    }

    /// Floating-point evaluation with the given variable assignment.
    /// Unassigned variables evaluate to NaN.
    pub fn eval(&self, vars: &BTreeMap<String, f64>) -> f64 {
        match self {
            Expr::Num(q) | Expr::Dec(q) => ratio_to_f64(q),
            Expr::Const(Constant::Pi) => std::f64::consts::PI,
            Expr::Const(Constant::E) => std::f64::consts::E,
            Expr::Const(Constant::Infinity) => f64::INFINITY,
            Expr::Var(v) => vars.get(v).copied().unwrap_or(f64::NAN),
            Expr::Neg(a) => -a.eval(vars),
            Expr::Add(a, b) => a.eval(vars) + b.eval(vars),
            Expr::Sub(a, b) => a.eval(vars) - b.eval(vars),
            Expr::Mul(a, b) => a.eval(vars) * b.eval(vars),
            Expr::Div(a, b) => a.eval(vars) / b.eval(vars),
            Expr::Pow(a, b) => a.eval(vars).powf(b.eval(vars)),
            Expr::Sqrt(a) => a.eval(vars).sqrt(),
            Expr::Func(f, a) => f.apply(a.eval(vars)),
        }
    }
}

pub fn ratio_to_f64(q: &BigRational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

fn exact_pow(base: &BigRational, exp: &BigRational) -> Option<BigRational> {
    if exp.is_integer() {
        let e = exp.to_integer();
        let mag = e.abs().to_u32().filter(|m| *m <= MAX_EXACT_EXPONENT)?;
        let bits = base.numer().bits().max(base.denom().bits()).max(1);
        if bits.saturating_mul(u64::from(mag)) > MAX_EXACT_BITS {
            return None;
        }
        if e.is_negative() {
            if base.is_zero() {
                return None;
            }
            return Some(num_traits::pow(base.recip(), mag as usize));
        }
        return Some(num_traits::pow(base.clone(), mag as usize));
    }
    // rational exponent p/q: exact only when base is a perfect q-th power
    let q = exp.denom().to_u32().filter(|q| *q <= 16)?;
    let root = exact_root(base, q)?;
    exact_pow(&root, &BigRational::from_integer(exp.numer().clone()))
}

fn exact_root(x: &BigRational, n: u32) -> Option<BigRational> {
    if x.is_negative() {
        if n % 2 == 0 {
            return None;
        }
        return exact_root(&-x, n).map(|r| -r);
    }
    let num = x.numer().nth_root(n);
    let den = x.denom().nth_root(n);
    if num.pow(n) == *x.numer() && den.pow(n) == *x.denom() {
        Some(BigRational::new(num, den))
    } else {
        None
    }
}

pub(crate) fn fmt_rational(q: &BigRational, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if q.is_integer() {
        write!(f, "{}", q.numer())
    } else if q.is_negative() {
        write!(f, "-\\frac{{{}}}{{{}}}", -q.numer(), q.denom())
    } else {
        write!(f, "\\frac{{{}}}{{{}}}", q.numer(), q.denom())
    }
}

/// Renders an exact rational as a plain decimal when it terminates.
fn fmt_terminating(q: &BigRational, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let mut den = q.denom().clone();
    let (mut twos, mut fives) = (0u32, 0u32);
    while (&den % 2u32).is_zero() {
        den /= 2u32;
        twos += 1;
    }
    while (&den % 5u32).is_zero() {
        den /= 5u32;
        fives += 1;
    }
    let places = twos.max(fives);
    if !den.is_one() || places == 0 {
        return fmt_rational(q, f);
    }
    let scaled = (q * BigRational::from_integer(num_traits::pow(BigInt::from(10), places as usize))).to_integer();
    write!(f, "{}", super::value::Decimal::new(scaled, -(places as i32)))
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(q) => {
                if q.is_negative() {
                    write!(f, "(")?;
                    fmt_rational(q, f)?;
                    write!(f, ")")
                } else {
                    fmt_rational(q, f)
                }
            }
            Expr::Dec(q) => {
                if q.is_negative() {
                    write!(f, "(")?;
                    fmt_terminating(q, f)?;
                    write!(f, ")")
                } else {
                    fmt_terminating(q, f)
                }
            }
            Expr::Const(Constant::Pi) => write!(f, "\\pi"),
            Expr::Const(Constant::E) => write!(f, "e"),
            Expr::Const(Constant::Infinity) => write!(f, "\\infty"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} \\cdot {b})"),
            Expr::Div(a, b) => write!(f, "\\frac{{{a}}}{{{b}}}"),
            Expr::Pow(a, b) => write!(f, "{{{a}}}^{{{b}}}"),
            Expr::Sqrt(a) => write!(f, "\\sqrt{{{a}}}"),
            Expr::Func(func, a) => write!(f, "\\{}({a})", func.name()),
        }
    }
}
