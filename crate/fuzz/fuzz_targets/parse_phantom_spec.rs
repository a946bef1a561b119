#![no_main]

use libfuzzer_sys::fuzz_target;
use seco_inr::io::{parse_phantom_spec, phantom_spec_to_toml};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(spec) = parse_phantom_spec(text) {
        assert_eq!(parse_phantom_spec(&phantom_spec_to_toml(&spec)).unwrap(), spec);
        let _ = seco_inr::phantom::render(&spec, 8, 8);
    }
});
