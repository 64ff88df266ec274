//! Small arithmetic language for custom KPI definitions.
//!
//! Grammar: `+ - * /`, parentheses, unary minus, numeric literals, identifiers
//! and the functions `count("label")` and `has("label")`.

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Expr {
    Num(f64),
    Var(String),
    Count(String),
    Has(String),
    Neg(Box<Expr>),
    Bin(Box<Expr>, Op, Box<Expr>),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Op {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Str(String),
    Sym(char),
}

fn lex(src: &str) -> Result<Vec<Tok>, String> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.' || chars[i] == 'e') {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            out.push(Tok::Num(text.parse().map_err(|_| format!("bad number `{text}`"))?));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if c == '"' {
            let start = i + 1;
            i = start;
            while i < chars.len() && chars[i] != '"' {
                i += 1;
            }
            if i == chars.len() {
                return Err("unterminated string".into());
            }
            out.push(Tok::Str(chars[start..i].iter().collect()));
            i += 1;
        } else if "+-*/(),".contains(c) {
            out.push(Tok::Sym(c));
            i += 1;
        } else {
            return Err(format!("unexpected character `{c}`"));
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek_sym(&self, c: char) -> bool {
        matches!(self.toks.get(self.pos), Some(Tok::Sym(s)) if *s == c)
    }

    fn expect_sym(&mut self, c: char) -> Result<(), String> {
        if self.peek_sym(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(format!("expected `{c}`"))
        }
    }

    fn sum(&mut self) -> Result<Expr, String> {
        let mut lhs = self.product()?;
        loop {
            let op = if self.peek_sym('+') {
                Op::Add
            } else if self.peek_sym('-') {
                Op::Sub
            } else {
                return Ok(lhs);
            };
            self.pos += 1;
            lhs = Expr::Bin(Box::new(lhs), op, Box::new(self.product()?));
        }
    }

    fn product(&mut self) -> Result<Expr, String> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.peek_sym('*') {
                Op::Mul
            } else if self.peek_sym('/') {
                Op::Div
            } else {
                return Ok(lhs);
            };
            self.pos += 1;
            lhs = Expr::Bin(Box::new(lhs), op, Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Expr, String> {
        if self.peek_sym('-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, String> {
        let tok = self.toks.get(self.pos).cloned().ok_or("unexpected end of expression")?;
        self.pos += 1;
        match tok {
            Tok::Num(x) => Ok(Expr::Num(x)),
            Tok::Sym('(') => {
                let e = self.sum()?;
                self.expect_sym(')')?;
                Ok(e)
            }
            Tok::Ident(name) if self.peek_sym('(') => {
                self.pos += 1;
                let arg = match self.toks.get(self.pos).cloned() {
                    Some(Tok::Str(s)) => s,
                    _ => return Err(format!("`{name}` expects a quoted activity label")),
                };
                self.pos += 1;
                self.expect_sym(')')?;
                match name.as_str() {
                    "count" => Ok(Expr::Count(arg)),
                    "has" => Ok(Expr::Has(arg)),
                    _ => Err(format!("unknown function `{name}`")),
                }
            }
            Tok::Ident(name) => Ok(Expr::Var(name)),
            other => Err(format!("unexpected token {other:?}")),
        }
    }
}

pub(crate) fn parse(src: &str) -> Result<Expr, String> {
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
    };
    let e = p.sum()?;
    if p.pos != p.toks.len() {
        return Err("trailing input".into());
    }
    Ok(e)
}

/// Values an expression can read.
pub(crate) trait Scope {
    fn var(&self, name: &str) -> Option<f64>;
    fn count(&self, activity: &str) -> usize;
}

impl Expr {
    /// Evaluates; `Err` carries the name of an unresolved variable.
    pub(crate) fn eval(&self, scope: &dyn Scope) -> Result<f64, String> {
        Ok(match self {
            Expr::Num(x) => *x,
            Expr::Var(name) => scope.var(name).ok_or_else(|| name.clone())?,
            Expr::Count(a) => scope.count(a) as f64,
            Expr::Has(a) => f64::from(u8::from(scope.count(a) > 0)),
            Expr::Neg(e) => -e.eval(scope)?,
            Expr::Bin(l, op, r) => {
                let (l, r) = (l.eval(scope)?, r.eval(scope)?);
                match op {
                    Op::Add => l + r,
                    Op::Sub => l - r,
                    Op::Mul => l * r,
                    Op::Div => l / r,
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct S;
    impl Scope for S {
        fn var(&self, name: &str) -> Option<f64> {
            (name == "amount").then_some(1000.0)
        }
        fn count(&self, activity: &str) -> usize {
            usize::from(activity == "accept") * 2
        }
    }

    #[test]
    fn precedence_and_functions() {
        let e = parse("0.1 * amount * has(\"accept\") - 2 * (count(\"accept\") + 1)").unwrap();
        assert_eq!(e.eval(&S).unwrap(), 100.0 - 6.0);
        assert_eq!(parse("-amount / 4").unwrap().eval(&S).unwrap(), -250.0);
    }

    #[test]
    fn errors() {
        assert!(parse("1 +").is_err());
        assert!(parse("foo(\"x\")").is_err());
        assert!(parse("(1").is_err());
        assert_eq!(parse("missing + 1").unwrap().eval(&S).unwrap_err(), "missing");
    }
}
