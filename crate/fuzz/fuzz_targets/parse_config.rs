#![no_main]

use libfuzzer_sys::fuzz_target;
use pimdb::memsys::SimConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(cfg) = SimConfig::from_toml(text) else {
        return;
    };
    cfg.geometry().expect("validated geometry");
    cfg.address_map().expect("validated address map");
    assert_eq!(SimConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
});
