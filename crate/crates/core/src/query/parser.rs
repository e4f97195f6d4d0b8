//! Recursive-descent parser for the query language. Keywords are case
//! insensitive; identifiers keep their case.

use crate::error::{Error, Result};

use super::ast::{Aggregate, CmpOp, Expr, Literal, Pred, Query, Select};

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Number(String),
    Str(String),
    Sym(&'static str),
    End,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

const SYMS: [&str; 13] = [
    "<>", "!=", "<=", ">=", "=", "<", ">", "(", ")", ",", "*", "+", ";",
];

fn lex(text: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let err = |line, col, msg: String| Error::Parse { line, col, msg };
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let start = i;
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '-' && chars.get(i + 1) == Some(&'-') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            Tok::Ident(chars[start..i].iter().collect())
        } else if c.is_ascii_digit() {
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if chars.get(i) == Some(&'.') {
                i += 1;
                if !chars.get(i).is_some_and(|c| c.is_ascii_digit()) {
                    return Err(err(tl, tc + i - start, "expected digits after '.'".into()));
                }
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            Tok::Number(chars[start..i].iter().collect())
        } else if c == '\'' {
            i += 1;
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None => return Err(err(tl, tc, "unterminated string".into())),
                    Some('\'') if chars.get(i + 1) == Some(&'\'') => {
                        s.push('\'');
                        i += 2;
                    }
                    Some('\'') => {
                        i += 1;
                        break;
                    }
                    Some('\n') => return Err(err(tl, tc, "newline in string".into())),
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                    }
                }
            }
            Tok::Str(s)
        } else {
            let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
            match SYMS.iter().find(|s| rest.starts_with(**s)) {
                Some(s) => {
                    i += s.len();
                    Tok::Sym(s)
                }
                None => return Err(err(tl, tc, format!("unexpected character {c:?}"))),
            }
        };
        col += i - start;
        out.push(Token {
            tok,
            line: tl,
            col: tc,
        });
    }
    out.push(Token {
        tok: Tok::End,
        line,
        col,
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn error<T>(&self, msg: impl Into<String>) -> Result<T> {
        let t = &self.toks[self.pos];
        Err(Error::Parse {
            line: t.line,
            col: t.col,
            msg: msg.into(),
        })
    }

    fn describe(&self) -> String {
        match self.peek() {
            Tok::Ident(s) => format!("'{s}'"),
            Tok::Number(n) => n.clone(),
            Tok::Str(s) => format!("string '{s}'"),
            Tok::Sym(s) => format!("'{s}'"),
            Tok::End => "end of input".into(),
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s.eq_ignore_ascii_case(kw))
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        let hit = self.is_kw(kw);
        if hit {
            self.pos += 1;
        }
        hit
    }

    fn expect_kw(&mut self, kw: &str) -> Result<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.error(format!("expected {kw}, found {}", self.describe()))
        }
    }

    fn eat_sym(&mut self, sym: &str) -> bool {
        let hit = matches!(self.peek(), Tok::Sym(s) if *s == sym);
        if hit {
            self.pos += 1;
        }
        hit
    }

    fn expect_sym(&mut self, sym: &str) -> Result<()> {
        if self.eat_sym(sym) {
            Ok(())
        } else {
            self.error(format!("expected '{sym}', found {}", self.describe()))
        }
    }

    fn ident(&mut self) -> Result<String> {
        match self.peek().clone() {
            Tok::Ident(s) if !is_reserved(&s) => {
                self.pos += 1;
                Ok(s)
            }
            _ => self.error(format!("expected identifier, found {}", self.describe())),
        }
    }

    fn query(&mut self) -> Result<Query> {
        self.expect_kw("SELECT")?;
        let select = if self.eat_sym("*") {
            Select::Ids
        } else {
            let mut aggs = vec![self.aggregate()?];
            while self.eat_sym(",") {
                aggs.push(self.aggregate()?);
            }
            Select::Aggregates(aggs)
        };
        self.expect_kw("FROM")?;
        let relation = self.ident()?;
        let filter = if self.eat_kw("WHERE") {
            Some(self.pred()?)
        } else {
            None
        };
        self.eat_sym(";");
        if *self.peek() != Tok::End {
            return self.error(format!("unexpected {} after query", self.describe()));
        }
        Ok(Query {
            select,
            relation,
            filter,
        })
    }

    fn aggregate(&mut self) -> Result<Aggregate> {
        let Tok::Ident(name) = self.peek().clone() else {
            return self.error(format!(
                "expected * or an aggregate, found {}",
                self.describe()
            ));
        };
        let name = name.to_ascii_uppercase();
        if !["COUNT", "SUM", "AVG", "MIN", "MAX"].contains(&name.as_str()) {
            return self.error(format!(
                "expected * or an aggregate, found {}",
                self.describe()
            ));
        }
        self.pos += 1;
        self.expect_sym("(")?;
        let agg = match name.as_str() {
            "COUNT" => {
                self.expect_sym("*")?;
                Aggregate::Count
            }
            "SUM" => Aggregate::Sum(self.expr()?),
            "AVG" => Aggregate::Avg(self.expr()?),
            "MIN" => Aggregate::Min(self.ident()?),
            _ => Aggregate::Max(self.ident()?),
        };
        self.expect_sym(")")?;
        Ok(agg)
    }

    fn pred(&mut self) -> Result<Pred> {
        let mut terms = vec![self.conj()?];
        while self.eat_kw("OR") {
            terms.push(self.conj()?);
        }
        Ok(if terms.len() == 1 {
            terms.pop().unwrap()
        } else {
            Pred::Or(terms)
        })
    }

    fn conj(&mut self) -> Result<Pred> {
        let mut terms = vec![self.unary()?];
        while self.eat_kw("AND") {
            terms.push(self.unary()?);
        }
        Ok(if terms.len() == 1 {
            terms.pop().unwrap()
        } else {
            Pred::And(terms)
        })
    }

    fn unary(&mut self) -> Result<Pred> {
        if self.eat_kw("NOT") {
            return Ok(Pred::Not(Box::new(self.unary()?)));
        }
        if matches!(self.peek(), Tok::Sym("(")) {
            // A parenthesis opens either a predicate or an arithmetic
            // operand; try the predicate first.
            let save = self.pos;
            self.pos += 1;
            if let Ok(p) = self.pred() {
                if self.eat_sym(")") && !self.at_operator() {
                    return Ok(p);
                }
            }
            self.pos = save;
        }
        self.comparison()
    }

    fn at_operator(&self) -> bool {
        matches!(self.peek(), Tok::Sym(s) if ["+", "*", "=", "<>", "!=", "<", ">", "<=", ">="].contains(s))
    }

    fn comparison(&mut self) -> Result<Pred> {
        let lhs = self.expr()?;
        let op = match self.peek() {
            Tok::Sym("=") => CmpOp::Eq,
            Tok::Sym("<>") | Tok::Sym("!=") => CmpOp::Ne,
            Tok::Sym("<") => CmpOp::Lt,
            Tok::Sym(">") => CmpOp::Gt,
            Tok::Sym("<=") => CmpOp::Le,
            Tok::Sym(">=") => CmpOp::Ge,
            _ => {
                return self.error(format!(
                    "expected a comparison operator, found {}",
                    self.describe()
                ))
            }
        };
        self.pos += 1;
        let rhs = self.expr()?;
        Ok(Pred::Cmp(lhs, op, rhs))
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut e = self.term()?;
        while self.eat_sym("+") {
            e = Expr::Add(Box::new(e), Box::new(self.term()?));
        }
        Ok(e)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut e = self.factor()?;
        while self.eat_sym("*") {
            e = Expr::Mul(Box::new(e), Box::new(self.factor()?));
        }
        Ok(e)
    }

    fn factor(&mut self) -> Result<Expr> {
        match self.peek().clone() {
            Tok::Number(n) => {
                self.pos += 1;
                Ok(Expr::Lit(Literal::Number(n)))
            }
            Tok::Str(s) => {
                self.pos += 1;
                Ok(Expr::Lit(Literal::Str(s)))
            }
            Tok::Sym("(") => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Ident(s) if s.eq_ignore_ascii_case("DATE") => {
                self.pos += 1;
                match self.peek().clone() {
                    Tok::Str(d) => {
                        self.pos += 1;
                        Ok(Expr::Lit(Literal::Date(d)))
                    }
                    _ => self.error(format!("expected a date string, found {}", self.describe())),
                }
            }
            Tok::Ident(_) => Ok(Expr::Attr(self.ident()?)),
            _ => self.error(format!("expected an operand, found {}", self.describe())),
        }
    }
}

fn is_reserved(s: &str) -> bool {
    ["SELECT", "FROM", "WHERE", "AND", "OR", "NOT", "DATE"]
        .iter()
        .any(|k| s.eq_ignore_ascii_case(k))
}

pub fn parse_query(text: &str) -> Result<Query> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    p.query()
}
