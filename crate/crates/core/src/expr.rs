//! Closed-form data `p(x, y)·exp(rate·t)` with `p` a polynomial of total
//! degree at most 4, written like `"2*x^2 - x*y + 0.5"`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const MAX_DEGREE: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Monomial {
    pub coef: f64,
    pub px: u32,
    pub py: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub terms: Vec<Monomial>,
    pub rate: f64,
}

impl Expr {
    pub fn constant(v: f64) -> Self {
        Self {
            terms: vec![Monomial {
                coef: v,
                px: 0,
                py: 0,
            }],
            rate: 0.0,
        }
    }

    pub fn with_rate(mut self, rate: f64) -> Self {
        self.rate = rate;
        self
    }

    pub fn eval(&self, t: f64, x: f64, y: f64) -> f64 {
        let p: f64 = self
            .terms
            .iter()
            .map(|m| m.coef * x.powi(m.px as i32) * y.powi(m.py as i32))
            .sum();
        if self.rate == 0.0 {
            p
        } else {
            p * (self.rate * t).exp()
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|m| m.coef == 0.0)
    }

    /// Parses the polynomial part; the rate is set separately.
    pub fn parse_poly(src: &str) -> Result<Self> {
        Parser { src, pos: 0 }.polynomial()
    }
}

impl FromStr for Expr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse_poly(s)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, m) in self.terms.iter().enumerate() {
            match (i, m.coef < 0.0) {
                (0, _) => write!(f, "{}", m.coef)?,
                (_, true) => write!(f, " - {}", -m.coef)?,
                (_, false) => write!(f, " + {}", m.coef)?,
            }
            for (var, p) in [("x", m.px), ("y", m.py)] {
                match p {
                    0 => {}
                    1 => write!(f, "*{var}")?,
                    _ => write!(f, "*{var}^{p}")?,
                }
            }
        }
        if self.rate != 0.0 {
            write!(f, " * exp({}*t)", self.rate)?;
        }
        Ok(())
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, msg: impl fmt::Display) -> Error {
        Error::Config(format!(
            "expression `{}` at column {}: {msg}",
            self.src,
            self.pos + 1
        ))
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(|c| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn polynomial(&mut self) -> Result<Expr> {
        let mut terms = Vec::new();
        let mut sign = if self.eat('-') {
            -1.0
        } else {
            self.eat('+');
            1.0
        };
        loop {
            let mut m = self.term()?;
            m.coef *= sign;
            terms.push(m);
            self.skip_ws();
            sign = match self.peek() {
                None => break,
                Some('+') => 1.0,
                Some('-') => -1.0,
                Some(c) => return Err(self.err(format!("unexpected `{c}`"))),
            };
            self.pos += 1;
        }
        Ok(Expr { terms, rate: 0.0 })
    }

    fn term(&mut self) -> Result<Monomial> {
        let mut m = Monomial {
            coef: 1.0,
            px: 0,
            py: 0,
        };
        loop {
            self.factor(&mut m)?;
            if !self.eat('*') {
                break;
            }
        }
        if m.px + m.py > MAX_DEGREE {
            return Err(self.err(format!("monomial degree exceeds {MAX_DEGREE}")));
        }
        Ok(m)
    }

    fn factor(&mut self, m: &mut Monomial) -> Result<()> {
        self.skip_ws();
        match self.peek() {
            Some(c @ ('x' | 'y')) => {
                self.pos += 1;
                let p = if self.eat('^') { self.integer()? } else { 1 };
                if c == 'x' {
                    m.px += p;
                } else {
                    m.py += p;
                }
                Ok(())
            }
            Some(c) if c.is_ascii_digit() || c == '.' => {
                m.coef *= self.number()?;
                Ok(())
            }
            Some(c) => Err(self.err(format!("unexpected `{c}`"))),
            None => Err(self.err("unexpected end of input")),
        }
    }

    fn integer(&mut self) -> Result<u32> {
        self.skip_ws();
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        self.src[start..self.pos]
            .parse()
            .map_err(|_| self.err("expected an integer exponent"))
    }

    fn number(&mut self) -> Result<f64> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() {
            let c = bytes[self.pos];
            let exponent_sign = (c == b'+' || c == b'-')
                && self.pos > start
                && matches!(bytes[self.pos - 1], b'e' | b'E');
            if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' || exponent_sign {
                self.pos += 1;
            } else {
                break;
            }
        }
        self.src[start..self.pos]
            .parse()
            .map_err(|_| self.err(format!("bad number `{}`", &self.src[start..self.pos])))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radial_square() {
        let e = Expr::parse_poly("x^2 + y^2").unwrap().with_rate(-1.0);
        assert!((e.eval(1.0, 3.0, 4.0) - 25.0 * (-1.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn products_signs_and_exponents() {
        let e = Expr::parse_poly("-2.5e-1*x*y^2 + 3 - x").unwrap();
        assert_eq!(e.eval(0.0, 2.0, 1.0), -0.5 + 3.0 - 2.0);
        let e = Expr::parse_poly("1e+2 * x").unwrap();
        assert_eq!(e.eval(0.0, 0.5, 9.0), 50.0);
    }

    #[test]
    fn degree_limit() {
        assert!(Expr::parse_poly("x^2*y^2").is_ok());
        assert!(Expr::parse_poly("x^3*y^2").is_err());
    }

    #[test]
    fn garbage_rejected() {
        for s in ["", "x +", "z", "x^", "2**x", "sin(x)"] {
            assert!(Expr::parse_poly(s).is_err(), "{s}");
        }
    }

    #[test]
    fn display_round_trip() {
        let e = Expr::parse_poly("0.5*x^3 - y + 7").unwrap();
        let back = Expr::parse_poly(&e.to_string()).unwrap();
        for (x, y) in [(0.3, -1.2), (2.0, 0.5)] {
            assert_eq!(e.eval(0.0, x, y), back.eval(0.0, x, y));
        }
    }
}
