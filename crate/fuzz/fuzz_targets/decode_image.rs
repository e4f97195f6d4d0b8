#![no_main]

use libfuzzer_sys::fuzz_target;
use pimdb::image::{decode, encode};

fuzz_target!(|data: &[u8]| {
    let Ok((module, db)) = decode(data) else {
        return;
    };
    let bytes = encode(&module, &db);
    let (m2, db2) = decode(&bytes).expect("re-encoded image decodes");
    assert_eq!(encode(&m2, &db2), bytes);
});
