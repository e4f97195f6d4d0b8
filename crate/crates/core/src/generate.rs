//! Seeded synthetic data for a schema.
//!
//! Every attribute is drawn uniformly from its domain: the dictionary for
//! enums, otherwise `min..=max` in stored units (the full stored width when
//! unbounded). Relations are generated in schema order from one ChaCha8
//! stream, so a seed fixes the whole data set.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layout::{AttributeSpec, Schema, Value};

/// LINEITEM-like and CUSTOMER-like relations.
pub const DEFAULT_SCHEMA: &str = include_str!("default_schema.toml");

pub fn default_schema() -> Schema {
    Schema::from_toml(DEFAULT_SCHEMA).expect("built-in schema is valid")
}

fn domain(a: &AttributeSpec) -> Result<(u64, u64)> {
    let w = a.bit_width();
    let top = if w >= 64 { u64::MAX } else { (1u64 << w) - 1 };
    let (lo, hi) = (a.min.unwrap_or(0), a.max.unwrap_or(top).min(top));
    if lo > hi {
        return Err(Error::Schema(format!(
            "attribute {}: empty domain {lo}..={hi}",
            a.name
        )));
    }
    Ok((lo, hi))
}

fn value<R: Rng>(rng: &mut R, a: &AttributeSpec) -> Result<Value> {
    if a.is_dictionary() {
        return Ok(Value::Str(
            a.values[rng.gen_range(0..a.values.len())].clone(),
        ));
    }
    let (lo, hi) = domain(a)?;
    Ok(Value::Int(rng.gen_range(lo..=hi)))
}

/// Records of every relation with a nonzero row count, keyed by name.
pub fn generate(schema: &Schema, seed: u64) -> Result<BTreeMap<String, Vec<Vec<Value>>>> {
    schema.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = BTreeMap::new();
    for r in schema.relations.iter().filter(|r| r.rows > 0) {
        let records = (0..r.rows)
            .map(|_| r.attributes.iter().map(|a| value(&mut rng, a)).collect())
            .collect::<Result<Vec<_>>>()?;
        out.insert(r.name.clone(), records);
    }
    Ok(out)
}
