#![no_main]

use libfuzzer_sys::fuzz_target;
use pimdb::memsys::trace::{format_trace, parse_trace};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(records) = parse_trace(text) else {
        return;
    };
    assert_eq!(parse_trace(&format_trace(&records)).unwrap(), records);
});
