#![no_main]

use libfuzzer_sys::fuzz_target;
use seco_inr::io::{decode_image, encode_raw, Precision, INRD_MAGIC};

// INRF/INRD: anything that decodes must re-encode to the same bytes.
fuzz_target!(|data: &[u8]| {
    if let Ok(image) = decode_image(data) {
        let precision = if data.starts_with(INRD_MAGIC) {
            Precision::Double
        } else {
            Precision::Single
        };
        if data.starts_with(b"INR") {
            assert_eq!(encode_raw(&image, precision).unwrap(), data);
        }
    }
});
