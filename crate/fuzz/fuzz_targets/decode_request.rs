#![no_main]

use libfuzzer_sys::fuzz_target;
use pimdb::isa::expand;
use pimdb::memsys::{codec, PimRequest, SimConfig};

fuzz_target!(|data: &[u8]| {
    if data.len() < 16 {
        return;
    }
    let word = |i: usize| u64::from_le_bytes(data[i..i + 8].try_into().unwrap());
    let cfg = SimConfig::default();
    let (map, g) = (cfg.address_map().unwrap(), cfg.geometry().unwrap());
    let ext = (data.len() >= 24).then(|| word(16));
    let req = PimRequest {
        page: 0,
        offset: word(0) % map.page_bytes(),
        data: word(8),
        ext,
    };
    let Ok(instr) = codec::decode(&req, &map, &g) else {
        return;
    };
    let again = codec::encode(&instr, 0, &map).expect("decoded instructions re-encode");
    assert_eq!(codec::decode(&again, &map, &g).unwrap(), instr);
    let _ = expand(&instr, &g);
});
