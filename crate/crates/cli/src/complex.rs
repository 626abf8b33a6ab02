//! Complex literals on the command line: `a`, `bi`, `a+bi`, `a-bi`, with a
//! bare `i` standing for `1i`.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message} at position {position} in {input:?}")]
pub struct ComplexParseError {
    pub input: String,
    /// Byte offset of the offending character.
    pub position: usize,
    pub message: &'static str,
}

struct Cursor<'a> {
    input: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn fail(&self, message: &'static str) -> ComplexParseError {
        ComplexParseError {
            input: self.input.to_string(),
            position: self.pos,
            message,
        }
    }

    fn sign(&mut self) -> Option<f64> {
        match self.peek() {
            Some(b'+') => {
                self.pos += 1;
                Some(1.0)
            }
            Some(b'-') => {
                self.pos += 1;
                Some(-1.0)
            }
            _ => None,
        }
    }

    fn digits(&mut self) -> usize {
        let start = self.pos;
        while self.peek().is_some_and(|b| b.is_ascii_digit()) {
            self.pos += 1;
        }
        self.pos - start
    }

    /// Unsigned decimal with optional fraction and exponent; `None` if no
    /// digits are present.
    fn number(&mut self) -> Result<Option<f64>, ComplexParseError> {
        let start = self.pos;
        let mut mantissa = self.digits();
        if self.peek() == Some(b'.') {
            self.pos += 1;
            mantissa += self.digits();
            if mantissa == 0 {
                self.pos = start;
                return Err(self.fail("expected digits around '.'"));
            }
        }
        if mantissa == 0 {
            return Ok(None);
        }
        if matches!(self.peek(), Some(b'e' | b'E')) {
            self.pos += 1;
            self.sign();
            if self.digits() == 0 {
                return Err(self.fail("expected exponent digits"));
            }
        }
        let text = &self.input[start..self.pos];
        text.parse::<f64>()
            .map(Some)
            .map_err(|_| ComplexParseError {
                input: self.input.to_string(),
                position: start,
                message: "malformed number",
            })
    }

    fn imaginary_unit(&mut self) -> bool {
        if self.peek() == Some(b'i') {
            self.pos += 1;
            true
        } else {
            false
        }
    }
}

pub fn parse_complex(input: &str) -> Result<Complex64, ComplexParseError> {
    let mut cur = Cursor {
        input,
        bytes: input.as_bytes(),
        pos: 0,
    };
    if input.is_empty() {
        return Err(cur.fail("empty number"));
    }
    let first_sign = cur.sign().unwrap_or(1.0);
    let first = cur.number()?;
    let first_imag = cur.imaginary_unit();
    let lead = match (first, first_imag) {
        (None, false) => return Err(cur.fail("expected a number or 'i'")),
        (value, _) => first_sign * value.unwrap_or(1.0),
    };
    if cur.peek().is_none() {
        return Ok(if first_imag {
            Complex64::new(0.0, lead)
        } else {
            Complex64::new(lead, 0.0)
        });
    }
    if first_imag {
        return Err(cur.fail("unexpected character after imaginary part"));
    }
    let Some(second_sign) = cur.sign() else {
        return Err(cur.fail("expected '+' or '-' before the imaginary part"));
    };
    let second = cur.number()?;
    if !cur.imaginary_unit() {
        return Err(cur.fail("expected 'i' to end the imaginary part"));
    }
    if cur.peek().is_some() {
        return Err(cur.fail("trailing characters"));
    }
    Ok(Complex64::new(lead, second_sign * second.unwrap_or(1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ok(s: &str) -> Complex64 {
        parse_complex(s).unwrap_or_else(|e| panic!("{e}"))
    }

    #[test]
    fn accepted_forms() {
        assert_eq!(ok("-1"), Complex64::new(-1.0, 0.0));
        assert_eq!(ok("0"), Complex64::new(0.0, 0.0));
        assert_eq!(ok("3i"), Complex64::new(0.0, 3.0));
        assert_eq!(ok("-1-1i"), Complex64::new(-1.0, -1.0));
        assert_eq!(ok("0.6725431089+1i"), Complex64::new(0.6725431089, 1.0));
        assert_eq!(ok("16.489+10i"), Complex64::new(16.489, 10.0));
        assert_eq!(ok("i"), Complex64::new(0.0, 1.0));
        assert_eq!(ok("-i"), Complex64::new(0.0, -1.0));
        assert_eq!(ok("2-i"), Complex64::new(2.0, -1.0));
        assert_eq!(ok("1e-3+2.5E2i"), Complex64::new(1e-3, 250.0));
        assert_eq!(ok(".5"), Complex64::new(0.5, 0.0));
        assert_eq!(ok("+4."), Complex64::new(4.0, 0.0));
    }

    #[test]
    fn errors_carry_positions() {
        let cases = [
            ("", 0),
            ("abc", 0),
            ("1+", 2),
            ("1+2", 3),
            ("1i+2i", 2),
            ("1+2ix", 4),
            ("1 + 2i", 1),
            ("1e+i", 3),
            ("(1,2)", 0),
            ("1.2.3", 3),
            ("-.", 1),
        ];
        for (input, position) in cases {
            let err = parse_complex(input).expect_err(input);
            assert_eq!(err.position, position, "{input}: {err}");
        }
    }

    proptest! {
        #[test]
        fn formatted_values_round_trip(re in -1e6f64..1e6, im in -1e6f64..1e6) {
            let text = format!("{re}{im:+}i");
            prop_assert_eq!(parse_complex(&text).unwrap(), Complex64::new(re, im));
        }
    }
}
