//! Recursive-descent parser.
//!
//! ```text
//! expr     = term { ("+" | "-") term } ;
//! term     = unary { ("*" | "/") unary } ;
//! unary    = "-" unary | power ;
//! power    = primary [ "^" unary ] ;          (* exponent must fold to a constant *)
//! primary  = number | variable | func "(" expr ")" | "(" expr ")" ;
//! variable = ("x" | "u") digit { digit } ;    (* x1..xn, u1..um *)
//! func     = "sin" | "cos" | "exp" | "log" | "sqrt" | "tanh" | "smoothstep"
//!          | "smoothstep_d1" | ... | "smoothstep_d5" ;
//! number   = digit { digit } [ "." { digit } ] [ ("e" | "E") [ "+" | "-" ] digit { digit } ]
//!          | "." digit { digit } [ exponent ] ;
//! ```

use thiserror::Error;

use super::{Func, Node, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("empty expression")]
    Empty,
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("variable `{name}` at offset {offset} is out of range for n={n}, m={m}")]
    OutOfRange {
        name: String,
        offset: usize,
        n: usize,
        m: usize,
    },
    #[error("exponent at offset {offset} is not a constant")]
    NonConstantExponent { offset: usize },
}

impl ParseError {
    /// Byte offset of the error, when it has one.
    pub fn offset(&self) -> Option<usize> {
        match self {
            ParseError::Empty => None,
            ParseError::Syntax { offset, .. }
            | ParseError::UnknownIdentifier { offset, .. }
            | ParseError::OutOfRange { offset, .. }
            | ParseError::NonConstantExponent { offset } => Some(*offset),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<(Tok, usize)>, ParseError> {
        let mut lx = Lexer { src, pos: 0 };
        let mut out = Vec::new();
        loop {
            let (tok, at) = lx.next()?;
            let end = tok == Tok::End;
            out.push((tok, at));
            if end {
                return Ok(out);
            }
        }
    }

    fn next(&mut self) -> Result<(Tok, usize), ParseError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&c) = bytes.get(self.pos) else {
            return Ok((Tok::End, start));
        };
        let single = match c {
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            b'^' => Some(Tok::Caret),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(t) = single {
            self.pos += 1;
            return Ok((t, start));
        }
        if c.is_ascii_digit() || c == b'.' {
            return self.number(start);
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while self.pos < bytes.len()
                && (bytes[self.pos].is_ascii_alphanumeric() || bytes[self.pos] == b'_')
            {
                self.pos += 1;
            }
            return Ok((Tok::Ident(self.src[start..self.pos].to_string()), start));
        }
        Err(ParseError::Syntax {
            offset: start,
            message: format!("unexpected character `{}`", self.src[start..].chars().next().unwrap_or('?')),
        })
    }

    fn number(&mut self, start: usize) -> Result<(Tok, usize), ParseError> {
        let bytes = self.src.as_bytes();
        let digits = |pos: &mut usize| {
            let s = *pos;
            while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
                *pos += 1;
            }
            *pos - s
        };
        let mut n = digits(&mut self.pos);
        if self.pos < bytes.len() && bytes[self.pos] == b'.' {
            self.pos += 1;
            n += digits(&mut self.pos);
        }
        if n == 0 {
            return Err(ParseError::Syntax {
                offset: start,
                message: "malformed number".into(),
            });
        }
        if self.pos < bytes.len() && (bytes[self.pos] == b'e' || bytes[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < bytes.len() && (bytes[self.pos] == b'+' || bytes[self.pos] == b'-') {
                self.pos += 1;
            }
            if digits(&mut self.pos) == 0 {
                self.pos = save;
                return Err(ParseError::Syntax {
                    offset: save,
                    message: "malformed exponent".into(),
                });
            }
        }
        let text = &self.src[start..self.pos];
        text.parse::<f64>()
            .map(|v| (Tok::Num(v), start))
            .map_err(|_| ParseError::Syntax {
                offset: start,
                message: format!("malformed number `{text}`"),
            })
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    i: usize,
    n: usize,
    m: usize,
}

pub(super) fn parse_node(text: &str, n: usize, m: usize) -> Result<Node, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let mut p = Parser {
        toks: Lexer::tokens(text)?,
        i: 0,
        n,
        m,
    };
    let node = p.expr()?;
    match p.peek() {
        Tok::End => Ok(node),
        t => Err(p.syntax(format!("unexpected {}", describe(t)))),
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident(s) => format!("identifier `{s}`"),
        Tok::End => "end of input".into(),
        Tok::Plus => "`+`".into(),
        Tok::Minus => "`-`".into(),
        Tok::Star => "`*`".into(),
        Tok::Slash => "`/`".into(),
        Tok::Caret => "`^`".into(),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
    }
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].0
    }

    fn offset(&self) -> usize {
        self.toks[self.i].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.i].0.clone();
        if t != Tok::End {
            self.i += 1;
        }
        t
    }

    fn syntax(&self, message: String) -> ParseError {
        ParseError::Syntax {
            offset: self.offset(),
            message,
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => super::BinOp::Add,
                Tok::Minus => super::BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => super::BinOp::Mul,
                Tok::Slash => super::BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.primary()?;
        if *self.peek() != Tok::Caret {
            return Ok(base);
        }
        self.bump();
        let at = self.offset();
        let exponent = self.unary()?;
        if exponent.var_extent() != (0, 0) {
            return Err(ParseError::NonConstantExponent { offset: at });
        }
        exponent
            .eval(&[], &[])
            .map(|c| Node::Pow(Box::new(base), c))
            .map_err(|_| ParseError::NonConstantExponent { offset: at })
    }

    fn primary(&mut self) -> Result<Node, ParseError> {
        let at = self.offset();
        match self.bump() {
            Tok::Num(v) => Ok(Node::Const(v)),
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if *self.peek() == Tok::LParen {
                    let func = Func::from_name(&name).ok_or(ParseError::UnknownIdentifier {
                        name: name.clone(),
                        offset: at,
                    })?;
                    self.bump();
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    return Ok(Node::Call(func, Box::new(arg)));
                }
                self.variable(name, at)
            }
            Tok::End => Err(ParseError::Syntax {
                offset: at,
                message: "expected an operand, found end of input".into(),
            }),
            t => Err(ParseError::Syntax {
                offset: at,
                message: format!("expected an operand, found {}", describe(&t)),
            }),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        match self.peek() {
            Tok::RParen => {
                self.bump();
                Ok(())
            }
            t => Err(self.syntax(format!("expected `)`, found {}", describe(t)))),
        }
    }

    fn variable(&self, name: String, at: usize) -> Result<Node, ParseError> {
        let (kind, digits) = name.split_at(1);
        let index = if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
            digits.parse::<usize>().ok()
        } else {
            None
        };
        let var = match (kind, index) {
            ("x", Some(i)) => (i >= 1 && i <= self.n).then(|| Var::State(i - 1)),
            ("u", Some(j)) => (j >= 1 && j <= self.m).then(|| Var::Control(j - 1)),
            _ => {
                return Err(ParseError::UnknownIdentifier { name, offset: at });
            }
        };
        var.map(Node::Var).ok_or(ParseError::OutOfRange {
            name,
            offset: at,
            n: self.n,
            m: self.m,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::{BinOp, Expression};
    use super::*;

    #[test]
    fn parses_exa_cost() {
        let e = Expression::parse("(x1-1)^2 + (x2-2)^2 + u1^2", 2, 1).unwrap();
        assert_eq!(e.eval(&[1.0, 2.0], &[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn trailing_operator_reports_offset() {
        let err = Expression::parse("x1 +", 1, 0).unwrap_err();
        assert!(matches!(err, ParseError::Syntax { offset: 4, .. }), "{err}");
    }

    #[test]
    fn out_of_range_variable() {
        let err = Expression::parse("x3", 2, 1).unwrap_err();
        assert!(matches!(err, ParseError::OutOfRange { offset: 0, .. }));
        assert!(matches!(
            Expression::parse("u2", 2, 1),
            Err(ParseError::OutOfRange { .. })
        ));
        assert!(matches!(
            Expression::parse("x0", 2, 1),
            Err(ParseError::OutOfRange { .. })
        ));
    }

    #[test]
    fn unknown_identifier() {
        assert!(matches!(
            Expression::parse("y + 1", 1, 0),
            Err(ParseError::UnknownIdentifier { offset: 0, .. })
        ));
        assert!(matches!(
            Expression::parse("1 + foo(x1)", 1, 0),
            Err(ParseError::UnknownIdentifier { offset: 4, .. })
        ));
    }

    #[test]
    fn implicit_multiplication_is_rejected() {
        assert!(matches!(
            Expression::parse("2x1", 1, 0),
            Err(ParseError::Syntax { offset: 1, .. })
        ));
    }

    #[test]
    fn precedence_and_associativity() {
        let ev = |s: &str| Expression::parse(s, 1, 0).unwrap().eval(&[2.0], &[]).unwrap();
        assert_eq!(ev("-x1^2"), -4.0);
        assert_eq!(ev("(-x1)^2"), 4.0);
        assert_eq!(ev("8 - 3 - 2"), 3.0);
        assert_eq!(ev("8 / 4 / 2"), 1.0);
        assert_eq!(ev("1 + 2 * 3"), 7.0);
        assert_eq!(ev("2^3^2"), 512.0);
        assert_eq!(ev("x1^-1"), 0.5);
        assert_eq!(ev("  x1 *\t3 "), 6.0);
        assert_eq!(ev("1.5e1 + .5"), 15.5);
    }

    #[test]
    fn unary_minus_binds_tighter_than_product() {
        let e = Expression::parse("-4*x1", 1, 0).unwrap();
        match e.node() {
            Node::Binary(BinOp::Mul, a, _) => assert!(matches!(**a, Node::Neg(_))),
            other => panic!("unexpected tree {other:?}"),
        }
    }

    #[test]
    fn exponent_must_be_constant() {
        assert!(matches!(
            Expression::parse("x1^x1", 1, 0),
            Err(ParseError::NonConstantExponent { offset: 3 })
        ));
        assert!(Expression::parse("x1^(1/2)", 1, 0).is_ok());
    }

    #[test]
    fn unbalanced_parentheses() {
        assert!(matches!(
            Expression::parse("(x1 + 1", 1, 0),
            Err(ParseError::Syntax { offset: 7, .. })
        ));
        assert!(matches!(
            Expression::parse("x1)", 1, 0),
            Err(ParseError::Syntax { offset: 2, .. })
        ));
        assert_eq!(Expression::parse("   ", 1, 0), Err(ParseError::Empty));
    }
}
