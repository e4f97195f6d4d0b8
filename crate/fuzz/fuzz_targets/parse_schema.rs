#![no_main]

use libfuzzer_sys::fuzz_target;
use pimdb::layout::Schema;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(schema) = Schema::from_toml(text) else {
        return;
    };
    assert_eq!(Schema::from_toml(&schema.to_toml()).unwrap(), schema);
});
