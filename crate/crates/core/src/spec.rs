//! Parser for `name(arg, ...)` specifiers used for charts, map families and profiles.
//!
//! Arguments are either nested specifiers or arithmetic over numbers and `pi`
//! with `+ - * /` and parentheses.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Call {
    pub name: String,
    pub args: Vec<Arg>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Arg {
    Number(f64),
    Call(Call),
}

impl Arg {
    pub fn number(&self) -> Result<f64> {
        match self {
            Arg::Number(v) => Ok(*v),
            Arg::Call(c) => Err(Error::Parse(format!("expected a number, found `{c}`"))),
        }
    }

    pub fn call(&self) -> Result<&Call> {
        match self {
            Arg::Call(c) => Ok(c),
            Arg::Number(v) => Err(Error::Parse(format!("expected a specifier, found {v}"))),
        }
    }
}

impl fmt::Display for Call {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)?;
        if !self.args.is_empty() {
            write!(f, "(")?;
            for (i, a) in self.args.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                match a {
                    Arg::Number(v) => write!(f, "{v}")?,
                    Arg::Call(c) => write!(f, "{c}")?,
                }
            }
            write!(f, ")")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

fn tokenize(text: &str) -> Result<Vec<Tok>> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let save = i;
                i += 1;
                if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                    i += 1;
                }
                if i < chars.len() && chars[i].is_ascii_digit() {
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                } else {
                    i = save;
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v = s.parse::<f64>().map_err(|_| Error::Parse(format!("bad number `{s}`")))?;
            out.push(Tok::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if "()+-*/,".contains(c) {
            out.push(Tok::Sym(c));
            i += 1;
        } else {
            return Err(Error::Parse(format!("unexpected character `{c}` in `{text}`")));
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(Error::Parse(format!("expected `{c}` at token {}", self.pos)))
        }
    }

    fn expr(&mut self) -> Result<Arg> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+') {
                '+'
            } else if self.eat('-') {
                '-'
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Arg::Number(match op {
                '+' => lhs.number()? + rhs.number()?,
                _ => lhs.number()? - rhs.number()?,
            });
        }
    }

    fn term(&mut self) -> Result<Arg> {
        let mut lhs = self.factor()?;
        loop {
            let op = if self.eat('*') {
                '*'
            } else if self.eat('/') {
                '/'
            } else {
                return Ok(lhs);
            };
            let rhs = self.factor()?;
            lhs = Arg::Number(match op {
                '*' => lhs.number()? * rhs.number()?,
                _ => lhs.number()? / rhs.number()?,
            });
        }
    }

    fn factor(&mut self) -> Result<Arg> {
        if self.eat('-') {
            return Ok(Arg::Number(-self.factor()?.number()?));
        }
        if self.eat('+') {
            return Ok(Arg::Number(self.factor()?.number()?));
        }
        if self.eat('(') {
            let v = self.expr()?;
            self.expect(')')?;
            return Ok(v);
        }
        match self.toks.get(self.pos).cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Arg::Number(v))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if name == "pi" {
                    return Ok(Arg::Number(std::f64::consts::PI));
                }
                let mut args = Vec::new();
                if self.eat('(') {
                    if !self.eat(')') {
                        loop {
                            args.push(self.expr()?);
                            if self.eat(')') {
                                break;
                            }
                            self.expect(',')?;
                        }
                    }
                }
                Ok(Arg::Call(Call { name, args }))
            }
            other => Err(Error::Parse(format!("unexpected token {other:?}"))),
        }
    }
}

/// Parses a full specifier such as `alpha_join(arccos_cos2, 2, 1)`.
pub fn parse_specifier(text: &str) -> Result<Call> {
    let toks = tokenize(text)?;
    let mut p = Parser { toks, pos: 0 };
    let arg = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(Error::Parse(format!("trailing input in `{text}`")));
    }
    match arg {
        Arg::Call(c) => Ok(c),
        Arg::Number(_) => Err(Error::Parse(format!("`{text}` is a number, not a specifier"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_with_arithmetic() {
        let c = parse_specifier("gamma_hopf(affine(pi/2, -2), 2)").unwrap();
        assert_eq!(c.name, "gamma_hopf");
        let inner = c.args[0].call().unwrap();
        assert_eq!(inner.name, "affine");
        assert!((inner.args[0].number().unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert_eq!(inner.args[1].number().unwrap(), -2.0);
        assert_eq!(c.args[1].number().unwrap(), 2.0);
    }

    #[test]
    fn bare_names_and_precedence() {
        let c = parse_specifier("f(arccos_cos2, 1 + 2*3, (1+2)*3, 1e-3, 2/4)").unwrap();
        assert_eq!(c.args[0].call().unwrap().name, "arccos_cos2");
        let n: Vec<f64> = c.args[1..].iter().map(|a| a.number().unwrap()).collect();
        assert_eq!(n, vec![7.0, 9.0, 1e-3, 0.5]);
    }

    #[test]
    fn errors() {
        assert!(parse_specifier("f(1,").is_err());
        assert!(parse_specifier("3").is_err());
        assert!(parse_specifier("f(g + 1)").is_err());
        assert!(parse_specifier("f(1) x").is_err());
        assert!(parse_specifier("f(#)").is_err());
    }
}
