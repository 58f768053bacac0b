//! Recursive-descent parser.
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' exponent)?
//! exponent:= '-'? digits | '(' '-'? digits ')'
//! atom    := number | 'pi' | 't' digits | func '(' sum ')' | '(' sum ')'
//! ```

use thiserror::Error;

use super::{Expr, Func, Node};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown identifier `{name}` at {position}")]
    UnknownIdentifier { position: usize, name: String },
}

pub fn parse(source: &str) -> Result<Expr, ParseError> {
    let mut p = Parser { src: source.as_bytes(), pos: 0, dim: None };
    let e = p.sum()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.syntax("unexpected trailing input"));
    }
    Ok(e)
}

/// Like [`parse`] but rejects coordinates beyond `t{dim}`.
pub fn parse_with_dim(source: &str, dim: usize) -> Result<Expr, ParseError> {
    let mut p = Parser { src: source.as_bytes(), pos: 0, dim: Some(dim) };
    let e = p.sum()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.syntax("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    dim: Option<usize>,
}

impl Parser<'_> {
    fn syntax(&self, message: &str) -> ParseError {
        ParseError::Syntax { position: self.pos, message: message.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.syntax(&format!("expected `{}`", c as char)))
        }
    }

    fn sum(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.product()?;
        loop {
            if self.eat(b'+') {
                lhs = Expr::raw(Node::Add(lhs, self.product()?));
            } else if self.eat(b'-') {
                lhs = Expr::raw(Node::Sub(lhs, self.product()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn product(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Expr::raw(Node::Mul(lhs, self.unary()?));
            } else if self.eat(b'/') {
                lhs = Expr::raw(Node::Div(lhs, self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat(b'-') {
            let inner = self.unary()?;
            return Ok(match inner.node() {
                Node::Const(c) => Expr::constant(-c),
                _ => Expr::raw(Node::Neg(inner)),
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if !self.eat(b'^') {
            return Ok(base);
        }
        let paren = self.eat(b'(');
        let neg = self.eat(b'-');
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.syntax("expected integer exponent"));
        }
        let digits = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or_default();
        let mut k: i32 = digits.parse().map_err(|_| ParseError::Syntax {
            position: start,
            message: "exponent out of range".into(),
        })?;
        if neg {
            k = -k;
        }
        if paren {
            self.expect(b')')?;
        }
        Ok(Expr::raw(Node::Pow(base, k)))
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.sum()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.identifier(),
            Some(_) => Err(self.syntax("unexpected character")),
            None => Err(self.syntax("unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let bytes = self.src;
        let digits = |p: &mut usize| {
            let s = *p;
            while *p < bytes.len() && bytes[*p].is_ascii_digit() {
                *p += 1;
            }
            *p > s
        };
        let mut p = self.pos;
        let mut any = digits(&mut p);
        if p < bytes.len() && bytes[p] == b'.' {
            p += 1;
            any |= digits(&mut p);
        }
        if !any {
            return Err(self.syntax("malformed number"));
        }
        if p < bytes.len() && (bytes[p] == b'e' || bytes[p] == b'E') {
            let mut q = p + 1;
            if q < bytes.len() && (bytes[q] == b'+' || bytes[q] == b'-') {
                q += 1;
            }
            if digits(&mut q) {
                p = q;
            }
        }
        self.pos = p;
        let text = std::str::from_utf8(&bytes[start..p]).unwrap_or_default();
        let value: f64 = text.parse().map_err(|_| ParseError::Syntax {
            position: start,
            message: format!("malformed number `{text}`"),
        })?;
        if !value.is_finite() {
            return Err(ParseError::Syntax { position: start, message: "number overflows".into() });
        }
        Ok(Expr::constant(value))
    }

    fn identifier(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or_default();
        if name == "pi" {
            return Ok(Expr::constant(std::f64::consts::PI));
        }
        if let Some(f) = Func::from_name(name) {
            self.expect(b'(')?;
            let arg = self.sum()?;
            self.expect(b')')?;
            return Ok(Expr::raw(Node::Call(f, arg)));
        }
        let unknown = || ParseError::UnknownIdentifier { position: start, name: name.to_string() };
        let index = name
            .strip_prefix('t')
            .filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()) && !d.starts_with('0'))
            .and_then(|d| d.parse::<usize>().ok())
            .ok_or_else(unknown)?;
        if self.dim.is_some_and(|n| index > n) {
            return Err(unknown());
        }
        Ok(Expr::var(index - 1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn errors_carry_positions() {
        assert_eq!(
            parse("t1 + foo"),
            Err(ParseError::UnknownIdentifier { position: 5, name: "foo".into() })
        );
        assert!(matches!(parse("t1 +"), Err(ParseError::Syntax { position: 4, .. })));
        assert!(matches!(parse("(t1"), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse("t1 t2"), Err(ParseError::Syntax { position: 3, .. })));
        assert!(matches!(parse("t1^x"), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse("t0"), Err(ParseError::UnknownIdentifier { .. })));
        assert!(matches!(parse_with_dim("t3", 2), Err(ParseError::UnknownIdentifier { .. })));
    }

    #[test]
    fn numbers() {
        assert_eq!(parse("1.5e-3").unwrap().as_const(), Some(1.5e-3));
        assert_eq!(parse(".25").unwrap().as_const(), Some(0.25));
        assert_eq!(parse("2.").unwrap().as_const(), Some(2.0));
        assert!(parse("1e999").is_err());
    }

    #[test]
    fn parse_is_reproducible() {
        let s = "cos(2*pi*t1) + 3*t2^2/(1+t1*t1)";
        assert_eq!(parse(s).unwrap(), parse(s).unwrap());
    }
}
