use std::collections::{BTreeMap, HashMap};

use super::lexer::{lex, Pos, Tok};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Gt,
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// `s.rval("name")`
    Rval(String, Pos),
    /// Bare identifier, resolved against model constants such as `mu_tot`.
    Const(String, Pos),
    Call(String, Pos),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Cmp(CmpOp, Box<Expr>, Box<Expr>),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Def {
    pub name: String,
    pub body: Expr,
    pub pos: Pos,
}

/// `S [ f(), "clock" ] < threshold;`
#[derive(Debug, Clone, PartialEq)]
pub struct Assertion {
    pub func: String,
    pub clock: String,
    pub threshold: f64,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Program {
    pub defs: Vec<Def>,
    pub assertions: Vec<Assertion>,
}

impl Program {
    pub fn def(&self, name: &str) -> Option<&Def> {
        self.defs.iter().find(|d| d.name == name)
    }
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    i: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.i].1
    }

    fn bump(&mut self) -> (Tok, Pos) {
        let t = self.toks[self.i].clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn fail<T>(&self, want: &str) -> Result<T> {
        let p = self.pos();
        Err(Error::Syntax {
            line: p.line,
            col: p.col,
            msg: format!("expected {want}, found {}", self.peek().describe()),
        })
    }

    fn expect(&mut self, t: Tok, want: &str) -> Result<Pos> {
        if *self.peek() == t {
            Ok(self.bump().1)
        } else {
            self.fail(want)
        }
    }

    fn ident(&mut self) -> Result<(String, Pos)> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                let p = self.bump().1;
                Ok((s, p))
            }
            _ => self.fail("an identifier"),
        }
    }

    fn program(&mut self) -> Result<Program> {
        let mut prog = Program::default();
        loop {
            match self.peek() {
                Tok::Eof => break,
                Tok::Ident(s) if s == "S" && self.toks[self.i + 1].0 == Tok::LBrack => {
                    prog.assertions.push(self.assertion()?);
                }
                Tok::Ident(_) => {
                    if !prog.assertions.is_empty() {
                        return self.fail("an assertion (definitions come first)");
                    }
                    prog.defs.push(self.def()?);
                }
                _ => return self.fail("a definition or an assertion"),
            }
        }
        Ok(prog)
    }

    fn def(&mut self) -> Result<Def> {
        let (name, pos) = self.ident()?;
        self.expect(Tok::LParen, "`(`")?;
        self.expect(Tok::RParen, "`)`")?;
        self.expect(Tok::Assign, "`=`")?;
        let body = self.expr()?;
        self.expect(Tok::Semi, "`;`")?;
        Ok(Def { name, body, pos })
    }

    fn assertion(&mut self) -> Result<Assertion> {
        let pos = self.bump().1;
        self.expect(Tok::LBrack, "`[`")?;
        let (func, _) = self.ident()?;
        self.expect(Tok::LParen, "`(`")?;
        self.expect(Tok::RParen, "`)`")?;
        self.expect(Tok::Comma, "`,`")?;
        let clock = match self.peek().clone() {
            Tok::Str(s) => {
                self.bump();
                s
            }
            _ => return self.fail("a clock name string"),
        };
        self.expect(Tok::RBrack, "`]`")?;
        self.expect(Tok::Lt, "`<`")?;
        let neg = if *self.peek() == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        let threshold = match self.peek() {
            Tok::Num(v) => {
                let v = *v;
                self.bump();
                if neg {
                    -v
                } else {
                    v
                }
            }
            _ => return self.fail("a numeric threshold"),
        };
        self.expect(Tok::Semi, "`;`")?;
        Ok(Assertion {
            func,
            clock,
            threshold,
            pos,
        })
    }

    fn expr(&mut self) -> Result<Expr> {
        let lhs = self.arith()?;
        let op = match self.peek() {
            Tok::Lt => CmpOp::Lt,
            Tok::Gt => CmpOp::Gt,
            Tok::Le => CmpOp::Le,
            Tok::Ge => CmpOp::Ge,
            Tok::EqEq => CmpOp::Eq,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.arith()?;
        Ok(Expr::Cmp(op, Box::new(lhs), Box::new(rhs)))
    }

    fn arith(&mut self) -> Result<Expr> {
        let mut e = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(e),
            };
            self.bump();
            e = Expr::Bin(op, Box::new(e), Box::new(self.term()?));
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut e = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(e),
            };
            self.bump();
            e = Expr::Bin(op, Box::new(e), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if *self.peek() == Tok::Minus {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Num(v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::If => {
                self.bump();
                self.expect(Tok::LBrace, "`{`")?;
                let c = self.expr()?;
                self.expect(Tok::RBrace, "`}`")?;
                self.expect(Tok::Then, "`then`")?;
                let a = self.expr()?;
                self.expect(Tok::Else, "`else`")?;
                let b = self.expr()?;
                self.expect(Tok::Fi, "`fi`")?;
                Ok(Expr::If(Box::new(c), Box::new(a), Box::new(b)))
            }
            Tok::Ident(name) => {
                let pos = self.bump().1;
                if name == "s" && *self.peek() == Tok::Dot {
                    self.bump();
                    match self.ident()?.0.as_str() {
                        "rval" => {}
                        _ => return self.fail("`rval`"),
                    }
                    self.expect(Tok::LParen, "`(`")?;
                    let var = match self.peek().clone() {
                        Tok::Str(s) => {
                            self.bump();
                            s
                        }
                        _ => return self.fail("a state variable name string"),
                    };
                    self.expect(Tok::RParen, "`)`")?;
                    return Ok(Expr::Rval(var, pos));
                }
                if *self.peek() == Tok::LParen {
                    self.bump();
                    self.expect(Tok::RParen, "`)`")?;
                    return Ok(Expr::Call(name, pos));
                }
                Ok(Expr::Const(name, pos))
            }
            _ => self.fail("an expression"),
        }
    }
}

fn calls(e: &Expr, out: &mut Vec<(String, Pos)>) {
    match e {
        Expr::Call(n, p) => out.push((n.clone(), *p)),
        Expr::Num(_) | Expr::Rval(..) | Expr::Const(..) => {}
        Expr::Neg(a) => calls(a, out),
        Expr::Bin(_, a, b) | Expr::Cmp(_, a, b) => {
            calls(a, out);
            calls(b, out);
        }
        Expr::If(c, a, b) => {
            calls(c, out);
            calls(a, out);
            calls(b, out);
        }
    }
}

fn semantic(msg: String, p: Pos) -> Error {
    Error::Syntax {
        line: p.line,
        col: p.col,
        msg,
    }
}

/// Undefined or duplicate functions and recursive definitions.
fn validate(prog: &Program) -> Result<()> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, d) in prog.defs.iter().enumerate() {
        if index.insert(&d.name, i).is_some() {
            return Err(semantic(
                format!("function `{}` defined twice", d.name),
                d.pos,
            ));
        }
    }
    let mut edges: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, d) in prog.defs.iter().enumerate() {
        let mut cs = Vec::new();
        calls(&d.body, &mut cs);
        for (c, p) in cs {
            let j = *index
                .get(c.as_str())
                .ok_or_else(|| semantic(format!("undefined function `{c}`"), p))?;
            edges.entry(i).or_default().push(j);
        }
    }
    // Depth-first search for a cycle: 0 unvisited, 1 on stack, 2 done.
    fn visit(v: usize, edges: &BTreeMap<usize, Vec<usize>>, mark: &mut [u8]) -> Option<usize> {
        mark[v] = 1;
        for &w in edges.get(&v).map(Vec::as_slice).unwrap_or(&[]) {
            if mark[w] == 1 {
                return Some(w);
            }
            if mark[w] == 0 {
                if let Some(c) = visit(w, edges, mark) {
                    return Some(c);
                }
            }
        }
        mark[v] = 2;
        None
    }
    let mut mark = vec![0u8; prog.defs.len()];
    for v in 0..prog.defs.len() {
        if mark[v] == 0 {
            if let Some(c) = visit(v, &edges, &mut mark) {
                let d = &prog.defs[c];
                return Err(semantic(
                    format!("recursive definition of `{}`", d.name),
                    d.pos,
                ));
            }
        }
    }
    for a in &prog.assertions {
        if !index.contains_key(a.func.as_str()) {
            return Err(semantic(
                format!("assertion uses undefined function `{}`", a.func),
                a.pos,
            ));
        }
    }
    Ok(())
}

pub fn parse_quatex(text: &str) -> Result<Program> {
    let mut p = Parser {
        toks: lex(text)?,
        i: 0,
    };
    let prog = p.program()?;
    validate(&prog)?;
    Ok(prog)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ewt_definition_and_assertion() {
        let p = parse_quatex(
            "ewt() = 0.5 * (s.rval(\"y_j\") - mu_tot) * (s.rval(\"y_j\") - mu_tot) / mu_tot;\n\
             S [ ewt(), \"c_j\" ] < 75;",
        )
        .unwrap();
        assert_eq!(p.defs.len(), 1);
        assert_eq!(p.assertions.len(), 1);
        assert_eq!(p.assertions[0].clock, "c_j");
        assert_eq!(p.assertions[0].threshold, 75.0);
        // Left-associative: ((0.5 * a) * a) / mu_tot.
        assert!(matches!(p.defs[0].body, Expr::Bin(BinOp::Div, _, _)));
    }

    #[test]
    fn if_then_else() {
        let p = parse_quatex("f() = if {s.rval(\"Y\") > 5} then 1 else 0 fi;").unwrap();
        assert!(matches!(p.defs[0].body, Expr::If(..)));
    }

    #[test]
    fn comparison_binds_loosest() {
        let p = parse_quatex("f() = 1 + 2 < 2 * 3;").unwrap();
        assert!(matches!(p.defs[0].body, Expr::Cmp(CmpOp::Lt, _, _)));
    }

    #[test]
    fn missing_fi_reports_position() {
        let e = parse_quatex("f() = if {1 > 0} then 1 else 0;").unwrap_err();
        match e {
            Error::Syntax { line, col, msg } => {
                assert_eq!((line, col), (1, 31));
                assert!(msg.contains("`fi`"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn semantic_errors() {
        assert!(parse_quatex("f() = g();").is_err());
        assert!(parse_quatex("f() = g(); g() = f();").is_err());
        assert!(parse_quatex("f() = f() + 1;").is_err());
        assert!(parse_quatex("f() = 1; S [ g(), \"time\" ] < 1;").is_err());
        assert!(parse_quatex("f() = 1; g() = f() * f(); S [ g(), \"time\" ] < 1;").is_ok());
    }
}
