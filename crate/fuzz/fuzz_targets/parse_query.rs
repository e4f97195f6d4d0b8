#![no_main]

use libfuzzer_sys::fuzz_target;
use pimdb::query::{parse_query, split_queries};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(q) = parse_query(text) {
        assert_eq!(parse_query(text).unwrap(), q);
    }
    for part in split_queries(text) {
        let _ = parse_query(&part);
    }
});
