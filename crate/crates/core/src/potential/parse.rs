//! Parser for polynomial expressions in `x`.
//!
//! ```text
//! expr    := term (("+" | "-") term)*
//! term    := unary (("*" | "/" | <implicit>) unary)*
//! unary   := ("+" | "-") unary | power
//! power   := primary ("^" integer)?
//! primary := number | "x" | "(" expr ")"
//! number  := digits ("." digits)?
//! ```
//!
//! Implicit multiplication applies when a factor is directly followed by a
//! number, `x` or `(` (so `5x^2` and `(11/4)x^2` parse). Division is only
//! allowed by constant subexpressions. All arithmetic is carried out in exact
//! rationals and converted to floating point at the end.

use super::{PolynomialPotential, PotentialError};
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

/// Largest exponent accepted after `^`.
const MAX_EXPONENT: u32 = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("unexpected character '{found}' at position {pos}")]
    UnexpectedChar { pos: usize, found: char },
    #[error("unknown identifier '{name}' at position {pos}: only polynomials in x are supported")]
    UnknownIdentifier { pos: usize, name: String },
    #[error("unexpected {found} at position {pos}, expected {expected}")]
    UnexpectedToken {
        pos: usize,
        found: String,
        expected: &'static str,
    },
    #[error("division by a non-constant expression at position {pos}")]
    NonConstantDivisor { pos: usize },
    #[error("division by zero at position {pos}")]
    DivisionByZero { pos: usize },
    #[error("exponent at position {pos} must be an integer between 0 and {MAX_EXPONENT}")]
    BadExponent { pos: usize },
    #[error("empty expression")]
    Empty,
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(BigRational, bool),
    X,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(n, _) => format!("number {n}"),
            Tok::X => "'x'".into(),
            Tok::Plus => "'+'".into(),
            Tok::Minus => "'-'".into(),
            Tok::Star => "'*'".into(),
            Tok::Slash => "'/'".into(),
            Tok::Caret => "'^'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::End => "end of input".into(),
        }
    }

    fn starts_factor(&self) -> bool {
        matches!(self, Tok::Num(..) | Tok::X | Tok::LParen)
    }
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (pos, ch) = chars[i];
        match ch {
            c if c.is_whitespace() => {
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < chars.len() && chars[i].1.is_ascii_digit() {
                    i += 1;
                }
                let int_part: String = chars[start..i].iter().map(|c| c.1).collect();
                let mut frac_part = String::new();
                let mut has_point = false;
                if i < chars.len() && chars[i].1 == '.' {
                    has_point = true;
                    i += 1;
                    let fs = i;
                    while i < chars.len() && chars[i].1.is_ascii_digit() {
                        i += 1;
                    }
                    frac_part = chars[fs..i].iter().map(|c| c.1).collect();
                }
                if int_part.is_empty() && frac_part.is_empty() {
                    return Err(ParseError::UnexpectedChar { pos, found: '.' });
                }
                let digits = format!("{int_part}{frac_part}");
                let numer: BigInt = digits.parse().expect("ascii digits");
                let denom = num_traits::pow(BigInt::from(10), frac_part.len());
                out.push((pos, Tok::Num(BigRational::new(numer, denom), !has_point)));
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].1.is_alphanumeric() || chars[i].1 == '_') {
                    i += 1;
                }
                let name: String = chars[start..i].iter().map(|c| c.1).collect();
                if name == "x" {
                    out.push((pos, Tok::X));
                } else {
                    return Err(ParseError::UnknownIdentifier { pos, name });
                }
            }
            '+' => {
                out.push((pos, Tok::Plus));
                i += 1;
            }
            '-' | '\u{2212}' => {
                out.push((pos, Tok::Minus));
                i += 1;
            }
            '*' => {
                out.push((pos, Tok::Star));
                i += 1;
            }
            '/' => {
                out.push((pos, Tok::Slash));
                i += 1;
            }
            '^' => {
                out.push((pos, Tok::Caret));
                i += 1;
            }
            '(' => {
                out.push((pos, Tok::LParen));
                i += 1;
            }
            ')' => {
                out.push((pos, Tok::RParen));
                i += 1;
            }
            other => return Err(ParseError::UnexpectedChar { pos, found: other }),
        }
    }
    out.push((text.len(), Tok::End));
    Ok(out)
}

/// Exact polynomial with rational coefficients, constant term first.
#[derive(Debug, Clone, PartialEq)]
struct RatPoly(Vec<BigRational>);

impl RatPoly {
    fn constant(c: BigRational) -> Self {
        RatPoly(vec![c]).trimmed()
    }

    fn x() -> Self {
        RatPoly(vec![BigRational::zero(), BigRational::one()])
    }

    fn trimmed(mut self) -> Self {
        while self.0.len() > 1 && self.0.last().is_some_and(|c| c.is_zero()) {
            self.0.pop();
        }
        if self.0.is_empty() {
            self.0.push(BigRational::zero());
        }
        self
    }

    fn degree(&self) -> usize {
        self.0.len() - 1
    }

    fn add(&self, other: &RatPoly) -> RatPoly {
        let n = self.0.len().max(other.0.len());
        let zero = BigRational::zero();
        RatPoly(
            (0..n)
                .map(|j| self.0.get(j).unwrap_or(&zero) + other.0.get(j).unwrap_or(&zero))
                .collect(),
        )
        .trimmed()
    }

    fn neg(&self) -> RatPoly {
        RatPoly(self.0.iter().map(|c| -c).collect())
    }

    fn mul(&self, other: &RatPoly) -> RatPoly {
        let mut out = vec![BigRational::zero(); self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        RatPoly(out).trimmed()
    }

    fn pow(&self, e: u32) -> RatPoly {
        let mut acc = RatPoly::constant(BigRational::one());
        for _ in 0..e {
            acc = acc.mul(self);
        }
        acc
    }

    fn scale(&self, s: &BigRational) -> RatPoly {
        RatPoly(self.0.iter().map(|c| c * s).collect()).trimmed()
    }
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].1
    }

    fn pos(&self) -> usize {
        self.toks[self.at].0
    }

    fn bump(&mut self) -> (usize, Tok) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn expr(&mut self) -> Result<RatPoly, ParseError> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    acc = acc.add(&self.term()?);
                }
                Tok::Minus => {
                    self.bump();
                    acc = acc.add(&self.term()?.neg());
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<RatPoly, ParseError> {
        let mut acc = self.unary()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    acc = acc.mul(&self.unary()?);
                }
                Tok::Slash => {
                    let pos = self.pos();
                    self.bump();
                    let divisor = self.unary()?;
                    if divisor.degree() > 0 {
                        return Err(ParseError::NonConstantDivisor { pos });
                    }
                    if divisor.0[0].is_zero() {
                        return Err(ParseError::DivisionByZero { pos });
                    }
                    acc = acc.scale(&divisor.0[0].recip());
                }
                t if t.starts_factor() => {
                    acc = acc.mul(&self.power()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn unary(&mut self) -> Result<RatPoly, ParseError> {
        match self.peek() {
            Tok::Minus => {
                self.bump();
                Ok(self.unary()?.neg())
            }
            Tok::Plus => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<RatPoly, ParseError> {
        let base = self.primary()?;
        if *self.peek() != Tok::Caret {
            return Ok(base);
        }
        self.bump();
        let pos = self.pos();
        match self.bump().1 {
            Tok::Num(n, true) if n.is_integer() && !n.is_negative() => {
                let e = n
                    .to_integer()
                    .to_u32()
                    .filter(|&e| e <= MAX_EXPONENT)
                    .ok_or(ParseError::BadExponent { pos })?;
                Ok(base.pow(e))
            }
            _ => Err(ParseError::BadExponent { pos }),
        }
    }

    fn primary(&mut self) -> Result<RatPoly, ParseError> {
        let pos = self.pos();
        match self.bump().1 {
            Tok::Num(n, _) => Ok(RatPoly::constant(n)),
            Tok::X => Ok(RatPoly::x()),
            Tok::LParen => {
                let inner = self.expr()?;
                let close = self.pos();
                match self.bump().1 {
                    Tok::RParen => Ok(inner),
                    other => Err(ParseError::UnexpectedToken {
                        pos: close,
                        found: other.describe(),
                        expected: "')'",
                    }),
                }
            }
            other => Err(ParseError::UnexpectedToken {
                pos,
                found: other.describe(),
                expected: "a number, 'x' or '('",
            }),
        }
    }
}

fn parse_exact(text: &str) -> Result<RatPoly, ParseError> {
    let toks = tokenize(text)?;
    if toks.len() == 1 {
        return Err(ParseError::Empty);
    }
    let mut p = Parser { toks, at: 0 };
    let poly = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(ParseError::UnexpectedToken {
            pos: p.pos(),
            found: p.peek().describe(),
            expected: "an operator or end of input",
        });
    }
    Ok(poly)
}

/// Parses a polynomial expression in `x` into expanded coefficient form.
pub fn parse_potential(text: &str) -> Result<PolynomialPotential, ParseError> {
    let exact = parse_exact(text)?;
    let coeffs = exact
        .0
        .iter()
        .map(|c| Complex64::new(c.to_f64().unwrap_or(f64::NAN), 0.0))
        .collect();
    Ok(PolynomialPotential::new(coeffs)?)
}
