//! Query language, compilation to PIM plans and execution.
//!
//! ```text
//! query     = "SELECT" ( "*" | aggregate { "," aggregate } ) "FROM" ident [ "WHERE" pred ] [ ";" ] ;
//! aggregate = "COUNT" "(" "*" ")" | ( "SUM" | "AVG" ) "(" expr ")" | ( "MIN" | "MAX" ) "(" ident ")" ;
//! pred      = conj { "OR" conj } ;
//! conj      = unary { "AND" unary } ;
//! unary     = "NOT" unary | "(" pred ")" | expr cmp expr ;
//! cmp       = "=" | "<>" | "!=" | "<" | ">" | "<=" | ">=" ;
//! expr      = term { "+" term } ;
//! term      = factor { "*" factor } ;
//! factor    = ident | number | string | "DATE" string | "(" expr ")" ;
//! ```

pub mod ast;
mod compile;
mod execute;
mod parser;
pub mod typed;

pub use ast::Query;
pub use compile::{compile, AggOutput, Combine, ExecutionPlan, HostExpr, Output, Phase, ReadOp};
pub use execute::{execute, AggValue, QueryResult};
pub use parser::parse_query;

use crate::error::{Error, Result};
use crate::layout::Database;
use crate::memsys::PimModule;

/// Parses, type-checks and compiles `text` against a loaded database.
pub fn plan(text: &str, db: &Database, module: &PimModule) -> Result<ExecutionPlan> {
    let q = parse_query(text)?;
    let layout = db
        .relation(&q.relation)
        .ok_or_else(|| Error::Schema(format!("no loaded relation {}", q.relation)))?;
    let rel = db
        .schema
        .relation(&layout.name)
        .expect("loaded relations are in the schema");
    let typed = typed::check(&q, rel)?;
    compile(&q, &typed, layout, module.geometry())
}

/// Splits a query file at semicolons outside string literals and comments,
/// dropping empty pieces.
pub fn split_queries(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut chars = text.chars().peekable();
    let mut in_str = false;
    while let Some(c) = chars.next() {
        match c {
            '\'' => in_str = !in_str,
            '-' if !in_str && chars.peek() == Some(&'-') => {
                // Comment to end of line.
                for d in chars.by_ref() {
                    if d == '\n' {
                        cur.push('\n');
                        break;
                    }
                }
                continue;
            }
            ';' if !in_str => {
                out.push(std::mem::take(&mut cur));
                continue;
            }
            _ => {}
        }
        cur.push(c);
    }
    out.push(cur);
    out.into_iter()
        .map(|q| q.trim().to_string())
        .filter(|q| !q.is_empty())
        .collect()
}

/// Plans and runs `text`.
pub fn run(text: &str, db: &Database, module: &mut PimModule) -> Result<QueryResult> {
    let p = plan(text, db, module)?;
    let layout = db
        .relation(&p.relation)
        .expect("planned relation is loaded");
    execute(&p, layout, module)
}
