use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Literal {
    /// Digits with an optional fraction, kept as written so the attribute's
    /// scale decides its stored value.
    Number(String),
    Date(String),
    Str(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Expr {
    Attr(String),
    Lit(Literal),
    Add(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Gt,
    Le,
    Ge,
}

impl CmpOp {
    pub fn negate(self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Ne,
            CmpOp::Ne => CmpOp::Eq,
            CmpOp::Lt => CmpOp::Ge,
            CmpOp::Ge => CmpOp::Lt,
            CmpOp::Gt => CmpOp::Le,
            CmpOp::Le => CmpOp::Gt,
        }
    }

    /// The operator with its operands swapped.
    pub fn flip(self) -> CmpOp {
        match self {
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Ge => CmpOp::Le,
            op => op,
        }
    }

    pub fn eval<T: Ord>(self, a: T, b: T) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Lt => a < b,
            CmpOp::Gt => a > b,
            CmpOp::Le => a <= b,
            CmpOp::Ge => a >= b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pred {
    Cmp(Expr, CmpOp, Expr),
    And(Vec<Pred>),
    Or(Vec<Pred>),
    Not(Box<Pred>),
}

impl Pred {
    /// Negation normal form with nested AND/OR flattened. Negated
    /// comparisons become the opposite comparison.
    pub fn nnf(&self) -> Pred {
        fn go(p: &Pred, neg: bool) -> Pred {
            match p {
                Pred::Cmp(a, op, b) => {
                    Pred::Cmp(a.clone(), if neg { op.negate() } else { *op }, b.clone())
                }
                Pred::Not(inner) => go(inner, !neg),
                Pred::And(ps) | Pred::Or(ps) => {
                    let is_and = matches!(p, Pred::And(_)) != neg;
                    let mut out = Vec::new();
                    for c in ps {
                        match (go(c, neg), is_and) {
                            (Pred::And(cs), true) | (Pred::Or(cs), false) => out.extend(cs),
                            (c, _) => out.push(c),
                        }
                    }
                    if out.len() == 1 {
                        return out.pop().unwrap();
                    }
                    if is_and {
                        Pred::And(out)
                    } else {
                        Pred::Or(out)
                    }
                }
            }
        }
        go(self, false)
    }

    /// Comparisons in source order.
    pub fn comparisons(&self) -> Vec<&Pred> {
        match self {
            Pred::Cmp(..) => vec![self],
            Pred::Not(p) => p.comparisons(),
            Pred::And(ps) | Pred::Or(ps) => ps.iter().flat_map(|p| p.comparisons()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Aggregate {
    Count,
    Sum(Expr),
    Avg(Expr),
    Min(String),
    Max(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Select {
    /// Ids of matching records.
    Ids,
    Aggregates(Vec<Aggregate>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Query {
    pub select: Select,
    pub relation: String,
    pub filter: Option<Pred>,
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Number(n) => write!(f, "{n}"),
            Literal::Date(d) => write!(f, "DATE '{d}'"),
            Literal::Str(s) => write!(f, "'{}'", s.replace('\'', "''")),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Attr(a) => write!(f, "{a}"),
            Expr::Lit(l) => write!(f, "{l}"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
        }
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "<>",
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
            CmpOp::Le => "<=",
            CmpOp::Ge => ">=",
        })
    }
}

impl fmt::Display for Pred {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |f: &mut fmt::Formatter<'_>, ps: &[Pred], sep: &str| -> fmt::Result {
            write!(f, "(")?;
            for (i, p) in ps.iter().enumerate() {
                if i > 0 {
                    write!(f, " {sep} ")?;
                }
                write!(f, "{p}")?;
            }
            write!(f, ")")
        };
        match self {
            Pred::Cmp(a, op, b) => write!(f, "{a} {op} {b}"),
            Pred::And(ps) => join(f, ps, "AND"),
            Pred::Or(ps) => join(f, ps, "OR"),
            Pred::Not(p) => write!(f, "NOT ({p})"),
        }
    }
}

impl fmt::Display for Aggregate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Aggregate::Count => write!(f, "COUNT(*)"),
            Aggregate::Sum(e) => write!(f, "SUM({e})"),
            Aggregate::Avg(e) => write!(f, "AVG({e})"),
            Aggregate::Min(a) => write!(f, "MIN({a})"),
            Aggregate::Max(a) => write!(f, "MAX({a})"),
        }
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SELECT ")?;
        match &self.select {
            Select::Ids => write!(f, "*")?,
            Select::Aggregates(aggs) => {
                for (i, a) in aggs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
            }
        }
        write!(f, " FROM {}", self.relation)?;
        if let Some(p) = &self.filter {
            write!(f, " WHERE {p}")?;
        }
        Ok(())
    }
}
