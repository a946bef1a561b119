#![no_main]

use libfuzzer_sys::fuzz_target;
use seco_inr::io::{decode_image, decode_labels};

fuzz_target!(|data: &[u8]| {
    if let Ok(image) = decode_image(data) {
        assert!(image.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
    let _ = decode_labels(data);
});
