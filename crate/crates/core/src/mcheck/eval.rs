use std::collections::HashMap;

use super::ast::{BinOp, CmpOp, Expr, Program};
use crate::error::{Error, Result};

/// An expression with calls inlined and names resolved to variables `V`.
#[derive(Debug, Clone, PartialEq)]
pub enum Compiled<V> {
    Num(f64),
    Var(V),
    Neg(Box<Compiled<V>>),
    Bin(BinOp, Box<Compiled<V>>, Box<Compiled<V>>),
    Cmp(CmpOp, Box<Compiled<V>>, Box<Compiled<V>>),
    If(Box<Compiled<V>>, Box<Compiled<V>>, Box<Compiled<V>>),
}

/// Compiles function `name`, resolving `s.rval` names with `rval` and bare
/// identifiers against `constants`. The program must be validated
/// (acyclic), which [`super::parse_quatex`] guarantees.
pub fn compile<V: Clone>(
    prog: &Program,
    name: &str,
    rval: &dyn Fn(&str) -> Result<V>,
    constants: &HashMap<String, f64>,
) -> Result<Compiled<V>> {
    let def = prog
        .def(name)
        .ok_or_else(|| Error::Eval(format!("undefined function `{name}`")))?;
    lower(prog, &def.body, rval, constants)
}

fn lower<V: Clone>(
    prog: &Program,
    e: &Expr,
    rval: &dyn Fn(&str) -> Result<V>,
    constants: &HashMap<String, f64>,
) -> Result<Compiled<V>> {
    let go = |e: &Expr| lower(prog, e, rval, constants).map(Box::new);
    Ok(match e {
        Expr::Num(v) => Compiled::Num(*v),
        Expr::Rval(n, _) => Compiled::Var(rval(n)?),
        Expr::Const(n, _) => Compiled::Num(
            *constants
                .get(n)
                .ok_or_else(|| Error::Eval(format!("unknown identifier `{n}`")))?,
        ),
        Expr::Call(n, _) => compile(prog, n, rval, constants)?,
        Expr::Neg(a) => Compiled::Neg(go(a)?),
        Expr::Bin(op, a, b) => Compiled::Bin(*op, go(a)?, go(b)?),
        Expr::Cmp(op, a, b) => Compiled::Cmp(*op, go(a)?, go(b)?),
        Expr::If(c, a, b) => Compiled::If(go(c)?, go(a)?, go(b)?),
    })
}

impl<V> Compiled<V> {
    /// Evaluates with variable values from `env`. `Ok(None)` means some
    /// variable was undefined (infinite), so the sample is skipped.
    pub fn eval(&self, env: &dyn Fn(&V) -> f64) -> Result<Option<f64>> {
        Ok(match self {
            Compiled::Num(v) => Some(*v),
            Compiled::Var(v) => {
                let x = env(v);
                x.is_finite().then_some(x)
            }
            Compiled::Neg(a) => a.eval(env)?.map(|x| -x),
            Compiled::Bin(op, a, b) => {
                let (Some(x), Some(y)) = (a.eval(env)?, b.eval(env)?) else {
                    return Ok(None);
                };
                Some(match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => {
                        if y == 0.0 {
                            return Err(Error::Eval("division by zero".into()));
                        }
                        x / y
                    }
                })
            }
            Compiled::Cmp(op, a, b) => {
                let (Some(x), Some(y)) = (a.eval(env)?, b.eval(env)?) else {
                    return Ok(None);
                };
                let r = match op {
                    CmpOp::Lt => x < y,
                    CmpOp::Gt => x > y,
                    CmpOp::Le => x <= y,
                    CmpOp::Ge => x >= y,
                    CmpOp::Eq => x == y,
                };
                Some(r as u8 as f64)
            }
            Compiled::If(c, a, b) => match c.eval(env)? {
                None => None,
                Some(v) if v != 0.0 => a.eval(env)?,
                Some(_) => b.eval(env)?,
            },
        })
    }

    /// Variables referenced anywhere in the expression.
    pub fn vars(&self) -> Vec<&V> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out
    }

    fn collect<'a>(&'a self, out: &mut Vec<&'a V>) {
        match self {
            Compiled::Num(_) => {}
            Compiled::Var(v) => out.push(v),
            Compiled::Neg(a) => a.collect(out),
            Compiled::Bin(_, a, b) | Compiled::Cmp(_, a, b) => {
                a.collect(out);
                b.collect(out);
            }
            Compiled::If(c, a, b) => {
                c.collect(out);
                a.collect(out);
                b.collect(out);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcheck::parse_quatex;

    fn names(n: &str) -> Result<String> {
        if n == "Y" {
            Ok(n.to_string())
        } else {
            Err(Error::Eval(format!("unknown state variable `{n}`")))
        }
    }

    fn run(src: &str, y: f64) -> Result<Option<f64>> {
        let p = parse_quatex(src)?;
        let c = compile(&p, &p.defs[0].name, &names, &HashMap::new())?;
        c.eval(&|_: &String| y)
    }

    #[test]
    fn constants_only() {
        assert_eq!(run("f() = 2*3+1;", 0.0).unwrap(), Some(7.0));
        assert_eq!(run("f() = -2*-3 - 1;", 0.0).unwrap(), Some(5.0));
    }

    #[test]
    fn strict_comparison_in_if() {
        let src = "f() = if {s.rval(\"Y\") > 5} then 1 else 0 fi;";
        assert_eq!(run(src, 6.0).unwrap(), Some(1.0));
        assert_eq!(run(src, 5.0).unwrap(), Some(0.0));
    }

    #[test]
    fn errors_and_skips() {
        let e = run("f() = s.rval(\"Q\");", 0.0).unwrap_err().to_string();
        assert!(e.contains("`Q`"), "{e}");
        assert!(run("f() = 1 / (s.rval(\"Y\") - 2);", 2.0).is_err());
        assert_eq!(
            run("f() = s.rval(\"Y\") * 0;", f64::INFINITY).unwrap(),
            None
        );
        assert!(run("f() = nope;", 0.0).is_err());
    }

    #[test]
    fn calls_are_inlined() {
        let p = parse_quatex("g() = 4; f() = g() * g() + k;").unwrap();
        let mut k = HashMap::new();
        k.insert("k".to_string(), 0.5);
        let c = compile(&p, "f", &names, &k).unwrap();
        assert_eq!(c.eval(&|_: &String| 0.0).unwrap(), Some(16.5));
    }
}
