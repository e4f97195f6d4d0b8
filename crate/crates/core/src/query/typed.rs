//! Name resolution and type checking against a relation schema.
//!
//! Every value is an unsigned integer in stored units: decimals are scaled,
//! dates count days, enums are dictionary codes. Arithmetic operands must
//! share a scale; numeric literals are rescaled to the scale of the other
//! operand and may not carry more fraction digits than it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::schema::parse_date;
use crate::layout::{LogicalType, RelationSchema, Value};

use super::ast::{Aggregate, CmpOp, Expr, Literal, Pred, Query, Select};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TExpr {
    /// Attribute by schema index.
    Attr(usize),
    Const(u128),
    Add(Box<TExpr>, Box<TExpr>),
    Mul(Box<TExpr>, Box<TExpr>),
}

/// A predicate in negation normal form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TPred {
    Const(bool),
    Cmp(TExpr, CmpOp, TExpr),
    And(Vec<TPred>),
    Or(Vec<TPred>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueKind {
    Number { scale: u32 },
    Date,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TAgg {
    Count,
    Sum(TExpr, u32),
    Avg(TExpr, u32),
    Min(usize, ValueKind),
    Max(usize, ValueKind),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypedQuery {
    /// `None` for `SELECT *`.
    pub aggregates: Option<Vec<TAgg>>,
    pub filter: Option<TPred>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Ty {
    /// A number whose scale is fixed by an attribute.
    Num(u32),
    /// A constant number: `Const(v)` at scale `s` may be rescaled upwards.
    Lit(u32),
    Date,
    Enum(usize),
    Str(String),
}

fn type_err<T>(msg: String) -> Result<T> {
    Err(Error::Type(msg))
}

fn pow10(k: u32) -> Result<u128> {
    10u128
        .checked_pow(k)
        .ok_or_else(|| Error::Width("constant overflows 128 bits".into()))
}

fn rescale(e: TExpr, by: u32) -> Result<TExpr> {
    match e {
        TExpr::Const(v) => Ok(TExpr::Const(
            v.checked_mul(pow10(by)?)
                .ok_or_else(|| Error::Width("constant overflows 128 bits".into()))?,
        )),
        _ => unreachable!("only constants are rescaled"),
    }
}

fn literal_number(text: &str) -> Result<(u128, u32)> {
    let scale = text.split_once('.').map_or(0, |(_, f)| f.len() as u32);
    let digits: String = text.chars().filter(|c| *c != '.').collect();
    let v: u128 = digits
        .parse()
        .map_err(|_| Error::Width(format!("literal {text} overflows 128 bits")))?;
    Ok((v, scale))
}

struct Checker<'a> {
    rel: &'a RelationSchema,
}

impl Checker<'_> {
    fn expr(&self, e: &Expr) -> Result<(TExpr, Ty)> {
        match e {
            Expr::Attr(name) => {
                let (idx, a) = self.rel.attribute(name).ok_or_else(|| {
                    Error::Schema(format!(
                        "relation {} has no attribute {name}",
                        self.rel.name
                    ))
                })?;
                let ty = match a.logical_type {
                    LogicalType::Integer => Ty::Num(0),
                    LogicalType::Decimal => Ty::Num(a.scale),
                    LogicalType::Date => Ty::Date,
                    LogicalType::Enum => Ty::Enum(idx),
                };
                Ok((TExpr::Attr(idx), ty))
            }
            Expr::Lit(Literal::Number(t)) => {
                let (v, s) = literal_number(t)?;
                Ok((TExpr::Const(v), Ty::Lit(s)))
            }
            Expr::Lit(Literal::Date(d)) => Ok((TExpr::Const(parse_date(d)? as u128), Ty::Date)),
            Expr::Lit(Literal::Str(s)) => Ok((TExpr::Const(0), Ty::Str(s.clone()))),
            Expr::Add(a, b) | Expr::Mul(a, b) => {
                let is_add = matches!(e, Expr::Add(..));
                let (ea, ta) = self.expr(a)?;
                let (eb, tb) = self.expr(b)?;
                let (sa, sb) = match (&ta, &tb) {
                    (Ty::Num(x) | Ty::Lit(x), Ty::Num(y) | Ty::Lit(y)) => (*x, *y),
                    _ => return type_err(format!("arithmetic needs numeric operands: {e}")),
                };
                let lit_a = matches!(ta, Ty::Lit(_));
                let lit_b = matches!(tb, Ty::Lit(_));
                let (ea, eb, scale) = if is_add {
                    // Align scales, rescaling whichever side is constant.
                    if sa == sb {
                        (ea, eb, sa)
                    } else if sa < sb && lit_a {
                        (rescale(ea, sb - sa)?, eb, sb)
                    } else if sb < sa && lit_b {
                        (ea, rescale(eb, sa - sb)?, sa)
                    } else {
                        return type_err(format!("operands of {e} have scales {sa} and {sb}"));
                    }
                } else {
                    (ea, eb, sa + sb)
                };
                let ty = if lit_a && lit_b {
                    Ty::Lit(scale)
                } else {
                    Ty::Num(scale)
                };
                Ok((fold(is_add, ea, eb)?, ty))
            }
        }
    }

    fn cmp(&self, a: &Expr, op: CmpOp, b: &Expr) -> Result<TPred> {
        let (ea, ta) = self.expr(a)?;
        let (eb, tb) = self.expr(b)?;
        let shown = || format!("{a} {op} {b}");
        let (ea, eb) = match (ta, tb) {
            (Ty::Num(x) | Ty::Lit(x), Ty::Num(y) | Ty::Lit(y)) if x == y => (ea, eb),
            (Ty::Lit(x), Ty::Num(y) | Ty::Lit(y)) if x < y => (rescale(ea, y - x)?, eb),
            (Ty::Num(x) | Ty::Lit(x), Ty::Lit(y)) if y < x => (ea, rescale(eb, x - y)?),
            (Ty::Num(x), Ty::Lit(y)) | (Ty::Lit(y), Ty::Num(x)) => {
                return type_err(format!(
                    "{}: literal has {y} fraction digits, attribute scale is {x}",
                    shown()
                ))
            }
            (Ty::Num(x), Ty::Num(y)) => {
                return type_err(format!("{}: scales {x} and {y} differ", shown()))
            }
            (Ty::Date, Ty::Date) => (ea, eb),
            (Ty::Enum(i), Ty::Str(s)) | (Ty::Str(s), Ty::Enum(i)) => {
                if !matches!(op, CmpOp::Eq | CmpOp::Ne) {
                    return type_err(format!(
                        "{}: enum attributes support only = and <>",
                        shown()
                    ));
                }
                let code = self.rel.attributes[i].encode(&Value::Str(s))?;
                return Ok(TPred::Cmp(TExpr::Attr(i), op, TExpr::Const(code as u128)));
            }
            _ => return type_err(format!("{}: incompatible operand types", shown())),
        };
        Ok(match (ea, eb) {
            (TExpr::Const(x), TExpr::Const(y)) => TPred::Const(op.eval(x, y)),
            (c @ TExpr::Const(_), e) => TPred::Cmp(e, op.flip(), c),
            (e, c) => TPred::Cmp(e, op, c),
        })
    }

    fn pred(&self, p: &Pred) -> Result<TPred> {
        Ok(match p {
            Pred::Cmp(a, op, b) => self.cmp(a, *op, b)?,
            Pred::And(ps) => TPred::And(ps.iter().map(|p| self.pred(p)).collect::<Result<_>>()?),
            Pred::Or(ps) => TPred::Or(ps.iter().map(|p| self.pred(p)).collect::<Result<_>>()?),
            Pred::Not(_) => unreachable!("predicates are in negation normal form"),
        })
    }

    fn value_attr(&self, name: &str, what: &str) -> Result<(usize, ValueKind)> {
        let (e, ty) = self.expr(&Expr::Attr(name.to_string()))?;
        let TExpr::Attr(i) = e else { unreachable!() };
        match ty {
            Ty::Num(s) => Ok((i, ValueKind::Number { scale: s })),
            Ty::Date => Ok((i, ValueKind::Date)),
            _ => type_err(format!(
                "{what}({name}): enum attributes cannot be aggregated"
            )),
        }
    }

    fn numeric(&self, e: &Expr, what: &str) -> Result<(TExpr, u32)> {
        match self.expr(e)? {
            (te, Ty::Num(s)) => Ok((te, s)),
            (_, Ty::Lit(_)) => type_err(format!("{what}({e}) aggregates a constant")),
            _ => type_err(format!("{what}({e}) needs a numeric expression")),
        }
    }
}

/// Builds `a + b` or `a * b`, folding constants and keeping a constant
/// operand on the right.
fn fold(is_add: bool, a: TExpr, b: TExpr) -> Result<TExpr> {
    let overflow = || Error::Width("constant expression overflows 128 bits".into());
    let build = |a, b| {
        if is_add {
            TExpr::Add(Box::new(a), Box::new(b))
        } else {
            TExpr::Mul(Box::new(a), Box::new(b))
        }
    };
    Ok(match (a, b) {
        (TExpr::Const(x), TExpr::Const(y)) => TExpr::Const(
            if is_add {
                x.checked_add(y)
            } else {
                x.checked_mul(y)
            }
            .ok_or_else(overflow)?,
        ),
        (c @ TExpr::Const(_), e) => build(e, c),
        (a, b) => build(a, b),
    })
}

/// Type-checks `q` against `rel`. The relation name is not checked.
pub fn check(q: &Query, rel: &RelationSchema) -> Result<TypedQuery> {
    let c = Checker { rel };
    let filter = q.filter.as_ref().map(|p| c.pred(&p.nnf())).transpose()?;
    let aggregates = match &q.select {
        Select::Ids => None,
        Select::Aggregates(aggs) => Some(
            aggs.iter()
                .map(|a| {
                    Ok(match a {
                        Aggregate::Count => TAgg::Count,
                        Aggregate::Sum(e) => {
                            let (te, s) = c.numeric(e, "SUM")?;
                            TAgg::Sum(te, s)
                        }
                        Aggregate::Avg(e) => {
                            let (te, s) = c.numeric(e, "AVG")?;
                            TAgg::Avg(te, s)
                        }
                        Aggregate::Min(n) => {
                            let (i, k) = c.value_attr(n, "MIN")?;
                            TAgg::Min(i, k)
                        }
                        Aggregate::Max(n) => {
                            let (i, k) = c.value_attr(n, "MAX")?;
                            TAgg::Max(i, k)
                        }
                    })
                })
                .collect::<Result<_>>()?,
        ),
    };
    Ok(TypedQuery { aggregates, filter })
}

impl TExpr {
    /// Evaluates against a record's stored codes. `None` on overflow.
    pub fn eval(&self, codes: &[u64]) -> Option<u128> {
        match self {
            TExpr::Attr(i) => Some(codes[*i] as u128),
            TExpr::Const(c) => Some(*c),
            TExpr::Add(a, b) => a.eval(codes)?.checked_add(b.eval(codes)?),
            TExpr::Mul(a, b) => a.eval(codes)?.checked_mul(b.eval(codes)?),
        }
    }

    /// Attributes referenced, in order of first use.
    pub fn attributes(&self, out: &mut Vec<usize>) {
        match self {
            TExpr::Attr(i) => {
                if !out.contains(i) {
                    out.push(*i)
                }
            }
            TExpr::Const(_) => {}
            TExpr::Add(a, b) | TExpr::Mul(a, b) => {
                a.attributes(out);
                b.attributes(out);
            }
        }
    }
}

impl TPred {
    pub fn eval(&self, codes: &[u64]) -> Option<bool> {
        Some(match self {
            TPred::Const(b) => *b,
            TPred::Cmp(a, op, b) => op.eval(a.eval(codes)?, b.eval(codes)?),
            TPred::And(ps) => {
                let mut r = true;
                for p in ps {
                    r &= p.eval(codes)?;
                }
                r
            }
            TPred::Or(ps) => {
                let mut r = false;
                for p in ps {
                    r |= p.eval(codes)?;
                }
                r
            }
        })
    }
}
