//! A small arithmetic expression language in one variable `x`, evaluated as
//! truncated Taylor series so coefficient derivatives come for free.
//!
//! Grammar: `+ - * / ^`, unary minus, parentheses, numbers, `pi`, `e`, `x`,
//! and the functions `sin cos tan tanh exp log sqrt`.

use crate::error::{Error, Result};

/// Number of Taylor coefficients carried (derivatives up to order 4).
pub const JET: usize = 5;

/// Truncated Taylor series: `t[k] = f^(k)(x) / k!`.
pub type Jet = [f64; JET];

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Tanh,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "tanh" => Func::Tanh,
            "exp" => Func::Exp,
            "log" | "ln" => Func::Log,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>> {
    let mut out = Vec::new();
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].1.is_ascii_digit() || chars[i].1 == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i].1 == 'e' || chars[i].1 == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j].1 == '+' || chars[j].1 == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].1.is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].1.is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().map(|c| c.1).collect();
            let v = text
                .parse::<f64>()
                .map_err(|_| Error::Parse { pos, msg: format!("bad number '{text}'") })?;
            out.push((pos, Tok::Num(v)));
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].1.is_alphanumeric() || chars[i].1 == '_') {
                i += 1;
            }
            let text: String = chars[start..i].iter().map(|c| c.1).collect();
            out.push((pos, Tok::Ident(text)));
            continue;
        }
        let tok = match c {
            '+' => Tok::Op('+'),
            '-' | '\u{2212}' => Tok::Op('-'),
            '*' | '\u{b7}' | '\u{d7}' => Tok::Op('*'),
            '/' => Tok::Op('/'),
            '^' => Tok::Op('^'),
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            _ => return Err(Error::Parse { pos, msg: format!("unexpected character '{c}'") }),
        };
        out.push((pos, tok));
        i += 1;
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|t| &t.1)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map(|t| t.0).unwrap_or(self.end)
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(op @ ('+' | '-'))) = self.peek().cloned() {
            self.at += 1;
            let rhs = self.term()?;
            lhs = if op == '+' {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(op @ ('*' | '/'))) = self.peek().cloned() {
            self.at += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' {
                Expr::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(Tok::Op('-')) => {
                self.at += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Some(Tok::Op('+')) => {
                self.at += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.at += 1;
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let pos = self.pos();
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.at += 1;
                Ok(Expr::Num(v))
            }
            Some(Tok::Ident(name)) => {
                self.at += 1;
                match name.as_str() {
                    "x" => return Ok(Expr::Var),
                    "pi" => return Ok(Expr::Num(std::f64::consts::PI)),
                    "e" => return Ok(Expr::Num(std::f64::consts::E)),
                    _ => {}
                }
                let func = Func::from_name(&name)
                    .ok_or_else(|| Error::Parse { pos, msg: format!("unknown name '{name}'") })?;
                if self.peek() != Some(&Tok::LParen) {
                    return Err(Error::Parse { pos: self.pos(), msg: format!("expected '(' after {name}") });
                }
                self.at += 1;
                let arg = self.expr()?;
                self.expect_rparen()?;
                Ok(Expr::Call(func, Box::new(arg)))
            }
            Some(Tok::LParen) => {
                self.at += 1;
                let e = self.expr()?;
                self.expect_rparen()?;
                Ok(e)
            }
            Some(t) => Err(Error::Parse { pos, msg: format!("unexpected token {t:?}") }),
            None => Err(Error::Parse { pos, msg: "unexpected end of input".into() }),
        }
    }

    fn expect_rparen(&mut self) -> Result<()> {
        if self.peek() == Some(&Tok::RParen) {
            self.at += 1;
            Ok(())
        } else {
            Err(Error::Parse { pos: self.pos(), msg: "expected ')'".into() })
        }
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let toks = tokenize(src)?;
        let mut p = Parser { toks, at: 0, end: src.len() };
        let e = p.expr()?;
        if p.at != p.toks.len() {
            return Err(Error::Parse { pos: p.pos(), msg: "trailing input".into() });
        }
        Ok(e)
    }

    /// Taylor coefficients of the expression around `x`.
    pub fn jet(&self, x: f64) -> Jet {
        match self {
            Expr::Num(v) => constant(*v),
            Expr::Var => {
                let mut j = constant(x);
                j[1] = 1.0;
                j
            }
            Expr::Neg(a) => a.jet(x).map(|v| -v),
            Expr::Add(a, b) => zip(a.jet(x), b.jet(x), |u, v| u + v),
            Expr::Sub(a, b) => zip(a.jet(x), b.jet(x), |u, v| u - v),
            Expr::Mul(a, b) => mul(&a.jet(x), &b.jet(x)),
            Expr::Div(a, b) => div(&a.jet(x), &b.jet(x)),
            Expr::Pow(a, b) => {
                let base = a.jet(x);
                let e = b.jet(x);
                let constant = e[1..].iter().all(|v| *v == 0.0);
                if constant && e[0].fract() == 0.0 && e[0].abs() <= 64.0 {
                    powi(&base, e[0] as i32)
                } else if constant {
                    exp(&log(&base).map(|v| v * e[0]))
                } else {
                    exp(&mul(&e, &log(&base)))
                }
            }
            Expr::Call(f, a) => {
                let u = a.jet(x);
                match f {
                    Func::Sin => sin_cos(&u).0,
                    Func::Cos => sin_cos(&u).1,
                    Func::Tan => {
                        let (s, c) = sin_cos(&u);
                        div(&s, &c)
                    }
                    Func::Tanh => tanh(&u),
                    Func::Exp => exp(&u),
                    Func::Log => log(&u),
                    Func::Sqrt => exp(&log(&u).map(|v| 0.5 * v)),
                }
            }
        }
    }

    /// Value and derivatives `[f, f', f'', f''', f'''']` at `x`.
    pub fn derivatives(&self, x: f64) -> [f64; JET] {
        let t = self.jet(x);
        let mut out = [0.0; JET];
        let mut fact = 1.0;
        for k in 0..JET {
            if k > 0 {
                fact *= k as f64;
            }
            out[k] = t[k] * fact;
        }
        out
    }
}

fn constant(v: f64) -> Jet {
    let mut j = [0.0; JET];
    j[0] = v;
    j
}

fn zip(a: Jet, b: Jet, f: impl Fn(f64, f64) -> f64) -> Jet {
    let mut out = [0.0; JET];
    for k in 0..JET {
        out[k] = f(a[k], b[k]);
    }
    out
}

fn mul(a: &Jet, b: &Jet) -> Jet {
    let mut out = [0.0; JET];
    for k in 0..JET {
        for j in 0..=k {
            out[k] += a[j] * b[k - j];
        }
    }
    out
}

fn div(a: &Jet, b: &Jet) -> Jet {
    let mut q = [0.0; JET];
    for k in 0..JET {
        let mut acc = a[k];
        for j in 1..=k {
            acc -= b[j] * q[k - j];
        }
        q[k] = acc / b[0];
    }
    q
}

fn powi(a: &Jet, n: i32) -> Jet {
    let mut out = constant(1.0);
    for _ in 0..n.unsigned_abs() {
        out = mul(&out, a);
    }
    if n < 0 {
        div(&constant(1.0), &out)
    } else {
        out
    }
}

fn exp(a: &Jet) -> Jet {
    let mut e = [0.0; JET];
    e[0] = a[0].exp();
    for k in 1..JET {
        let mut acc = 0.0;
        for j in 1..=k {
            acc += j as f64 * a[j] * e[k - j];
        }
        e[k] = acc / k as f64;
    }
    e
}

fn log(a: &Jet) -> Jet {
    let mut l = [0.0; JET];
    l[0] = a[0].ln();
    for k in 1..JET {
        let mut acc = 0.0;
        for j in 1..k {
            acc += j as f64 * l[j] * a[k - j];
        }
        l[k] = (a[k] - acc / k as f64) / a[0];
    }
    l
}

fn sin_cos(a: &Jet) -> (Jet, Jet) {
    let mut s = [0.0; JET];
    let mut c = [0.0; JET];
    s[0] = a[0].sin();
    c[0] = a[0].cos();
    for k in 1..JET {
        let (mut ss, mut cc) = (0.0, 0.0);
        for j in 1..=k {
            ss += j as f64 * a[j] * c[k - j];
            cc += j as f64 * a[j] * s[k - j];
        }
        s[k] = ss / k as f64;
        c[k] = -cc / k as f64;
    }
    (s, c)
}

fn tanh(a: &Jet) -> Jet {
    // t' = (1 - t^2) a'
    let mut t = [0.0; JET];
    let mut u = [0.0; JET];
    t[0] = a[0].tanh();
    u[0] = 1.0 - t[0] * t[0];
    for k in 1..JET {
        let mut acc = 0.0;
        for j in 1..=k {
            acc += j as f64 * a[j] * u[k - j];
        }
        t[k] = acc / k as f64;
        let mut sq = 0.0;
        for i in 0..=k {
            sq += t[i] * t[k - i];
        }
        u[k] = -sq;
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn parses_precedence() {
        let e = Expr::parse("1 + 2*x^2 - -3").unwrap();
        assert_eq!(e.derivatives(2.0)[0], 12.0);
        let e = Expr::parse("-x^2").unwrap();
        assert_eq!(e.derivatives(3.0)[0], -9.0);
        let e = Expr::parse("2^3^2").unwrap();
        assert_eq!(e.derivatives(0.0)[0], 512.0);
        let e = Expr::parse("1.5e-1 * x").unwrap();
        assert!(close(e.derivatives(2.0)[0], 0.3, 1e-15));
    }

    #[test]
    fn reports_errors_with_position() {
        assert!(matches!(Expr::parse("1 + "), Err(Error::Parse { .. })));
        assert!(matches!(Expr::parse("foo(x)"), Err(Error::Parse { pos: 0, .. })));
        assert!(matches!(Expr::parse("(x"), Err(Error::Parse { .. })));
        assert!(matches!(Expr::parse("x $"), Err(Error::Parse { pos: 2, .. })));
    }

    #[test]
    fn tanh_volatility_derivatives() {
        let e = Expr::parse("1 + 0.25*tanh(x)").unwrap();
        let x: f64 = 0.7;
        let t = x.tanh();
        let s = 1.0 - t * t;
        let d = e.derivatives(x);
        assert!(close(d[0], 1.0 + 0.25 * t, 1e-14));
        assert!(close(d[1], 0.25 * s, 1e-14));
        assert!(close(d[2], -0.5 * t * s, 1e-13));
        assert!(close(d[3], 0.25 * (-2.0 * s * s + 4.0 * t * t * s), 1e-12));
        assert!(close(d[4], 0.25 * (16.0 * t * s * s - 8.0 * t * t * t * s), 1e-12));
    }

    proptest! {
        #[test]
        fn jets_match_closed_forms(x in -2.0f64..2.0) {
            let d = Expr::parse("exp(sin(x)) / (2 + cos(x))").unwrap().derivatives(x);
            let h = 1e-4;
            let f = |y: f64| y.sin().exp() / (2.0 + y.cos());
            let fd1 = (f(x + h) - f(x - h)) / (2.0 * h);
            let fd2 = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
            prop_assert!(close(d[0], f(x), 1e-14));
            prop_assert!(close(d[1], fd1, 1e-7));
            prop_assert!(close(d[2], fd2, 1e-5));
        }

        #[test]
        fn powers_and_roots(x in 0.2f64..3.0) {
            let d = Expr::parse("sqrt(x) * x^1.5 + log(x)").unwrap().derivatives(x);
            // x^2 + ln x
            prop_assert!(close(d[0], x * x + x.ln(), 1e-13));
            prop_assert!(close(d[1], 2.0 * x + 1.0 / x, 1e-12));
            prop_assert!(close(d[2], 2.0 - 1.0 / (x * x), 1e-11));
            prop_assert!(close(d[3], 2.0 / x.powi(3), 1e-10));
            prop_assert!(close(d[4], -6.0 / x.powi(4), 1e-10));
        }
    }
}
