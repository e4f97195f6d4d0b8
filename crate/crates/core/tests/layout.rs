mod common;

use std::collections::BTreeSet;

use common::*;
use pimdb::layout::{plan_layout, Value};
use pimdb::memsys::{Location, PimModule, SimConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bits_at(m: &PimModule, page: u32, x: usize, row: usize, start: usize, len: usize) -> u64 {
    let xb = m.crossbar(page, x).unwrap();
    (0..len).fold(0, |acc, i| acc | (xb.peek(row, start + i) as u64) << i)
}

#[test]
fn three_records_in_an_eight_row_crossbar() {
    let rel = int_relation("t", &[4, 8, 3]);
    let recs = vec![
        vec![Value::Int(9), Value::Int(200), Value::Int(5)],
        vec![Value::Int(0), Value::Int(1), Value::Int(7)],
        vec![Value::Int(15), Value::Int(0), Value::Int(0)],
    ];
    let (mut m, db) = load(SimConfig::with_geometry(8, 64, 8, 1), &rel, &recs);
    let r = db.relation("t").unwrap();
    assert_eq!((r.valid_col, r.record_bits), (15, 16));
    assert_eq!((r.free.start, r.free.len), (16, 48));
    assert_eq!(r.pages, vec![0]);
    for (row, rec) in recs.iter().enumerate() {
        assert_eq!(r.read_record(&mut m, row).unwrap().as_ref(), Some(rec));
        let Value::Int(a1) = rec[1] else {
            unreachable!()
        };
        assert_eq!(bits_at(&m, 0, 0, row, 4, 8), a1);
        assert_eq!(bits_at(&m, 0, 0, row, 15, 1), 1);
    }
    for row in 3..8 {
        assert_eq!(bits_at(&m, 0, 0, row, 0, 16), 0);
        assert_eq!(r.read_record(&mut m, row).unwrap(), None);
    }
    assert!(r.read_record(&mut m, 8).is_err());
}

#[test]
fn random_records_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut total = 0;
    while total < 10_000 {
        let rel = random_schema(&mut rng);
        let recs = random_records(&mut rng, &rel, 1250);
        let (mut m, db) = load(small_config(&mut rng), &rel, &recs);
        let r = db.relation("r").unwrap();
        for (id, rec) in recs.iter().enumerate() {
            assert_eq!(
                r.read_record(&mut m, id).unwrap().as_ref(),
                Some(rec),
                "record {id}"
            );
        }
        total += recs.len();
    }
}

#[test]
fn loading_writes_only_the_lines_holding_records() {
    // A 64-byte line covers one 16-bit unit in 32 crossbars.
    let cfg = SimConfig::with_geometry(64, 256, 16, 64);
    let rel = int_relation("t", &[12, 7, 20]);
    let per_page = 64 * 64;
    for n in [per_page, 3 * per_page, 100, 64 * 33 + 5] {
        let recs: Vec<Vec<Value>> = (0..n)
            .map(|i| {
                vec![
                    Value::Int(i as u64 % 4096),
                    Value::Int(3),
                    Value::Int(i as u64),
                ]
            })
            .collect();
        let (m, _) = load(cfg.clone(), &rel, &recs);
        let units = 40usize.div_ceil(16);
        if n % per_page == 0 {
            let pages = n / per_page;
            assert_eq!(m.stats().line_writes as usize, pages * 64 * units * 64 / 32);
        }
        // Lines touched by the occupied rows' record columns.
        let map = m.address_map();
        let mut lines = BTreeSet::new();
        for id in 0..n {
            let (page, x, row) = (id / per_page, (id % per_page) / 64, id % 64);
            for byte in 0..40usize.div_ceil(8) {
                let off = map
                    .encode(Location {
                        crossbar: x,
                        row,
                        byte_in_row: byte,
                    })
                    .unwrap();
                lines.insert((page, off / 64));
            }
        }
        assert_eq!(m.stats().line_writes as usize, lines.len(), "{n} records");
    }
}

#[test]
fn attributes_are_aligned_across_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..20 {
        let rel = random_schema(&mut rng);
        let recs = random_records(&mut rng, &rel, 70);
        let cfg = small_config(&mut rng);
        let (m, db) = load(cfg.clone(), &rel, &recs);
        let r = db.relation("r").unwrap();
        let planned = plan_layout(&rel, m.geometry(), cfg.topology.crossbars_per_page).unwrap();
        assert_eq!(planned.attributes, r.attributes);
        let mut next = 0;
        for a in &r.attributes {
            assert_eq!(a.field.start as usize, next);
            next += a.field.len as usize;
        }
        assert_eq!(r.valid_col as usize, next);
        for (id, rec) in recs.iter().enumerate() {
            let s = r.slot(id).unwrap();
            for (a, v) in r.attributes.iter().zip(rec) {
                let got = bits_at(
                    &m,
                    s.page,
                    s.crossbar,
                    s.row,
                    a.field.start as usize,
                    a.field.len as usize,
                );
                assert_eq!(got, a.spec.encode(v).unwrap());
            }
        }
    }
}

#[test]
fn oversized_records_are_rejected() {
    let rel = int_relation("t", &[40, 24]);
    let g = SimConfig::with_geometry(8, 64, 8, 1).geometry().unwrap();
    assert!(plan_layout(&rel, &g, 1).is_err());
    let rel = int_relation("t", &[40, 23]);
    assert_eq!(plan_layout(&rel, &g, 1).unwrap().free.len, 0);
}

#[test]
fn peeking_records_leaves_counters_alone() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let rel = random_schema(&mut rng);
    let recs = random_records(&mut rng, &rel, 90);
    let (m, db) = load(SimConfig::with_geometry(16, 256, 8, 2), &rel, &recs);
    let before = m.stats().clone();
    assert_eq!(db.relation("r").unwrap().peek_records(&m).unwrap(), recs);
    assert_eq!(m.stats(), &before);
}
