#![no_main]

use std::sync::OnceLock;

use libfuzzer_sys::fuzz_target;
use pimdb::generate::{generate, DEFAULT_SCHEMA};
use pimdb::image;
use pimdb::layout::{Database, Schema};
use pimdb::memsys::{PimModule, SimConfig};
use pimdb::oracle::{self, OracleTable};
use pimdb::query;

/// A small loaded database, kept as an image so each run starts fresh.
fn fixture() -> &'static (Schema, Vec<u8>) {
    static DB: OnceLock<(Schema, Vec<u8>)> = OnceLock::new();
    DB.get_or_init(|| {
        let text = DEFAULT_SCHEMA
            .replace("rows = 8192", "rows = 90")
            .replace("rows = 1500", "rows = 40");
        let schema = Schema::from_toml(&text).unwrap();
        let data = generate(&schema, 1).unwrap();
        let mut m = PimModule::new(SimConfig::with_geometry(16, 512, 16, 8)).unwrap();
        let db = Database::load(&schema, &data, &mut m).unwrap();
        (schema, image::encode(&m, &db))
    })
}

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let (schema, bytes) = fixture();
    let (mut m, db) = image::decode(bytes).unwrap();
    let Ok(plan) = query::plan(text, &db, &m) else {
        return;
    };
    for i in plan.instructions() {
        i.validate(m.geometry())
            .expect("planned instructions are valid");
    }
    let layout = db.relation(&plan.relation).unwrap();
    let rel = schema.relation(&plan.relation).unwrap().clone();
    let table = OracleTable::new(rel, layout.peek_records(&m).unwrap()).unwrap();
    let Ok(reference) = oracle::execute(&plan.query, &table) else {
        return;
    };
    let pim = query::execute(&plan, layout, &mut m).expect("planned queries execute");
    let v = oracle::compare(&pim, &reference);
    assert!(v.pass, "{text}: {:?}", v.detail);
});
