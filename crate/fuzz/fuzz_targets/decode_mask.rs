#![no_main]

use libfuzzer_sys::fuzz_target;
use seco_inr::io::{decode_labels, decode_mask};

// The first byte picks the class count; the rest is the mask file.
fuzz_target!(|data: &[u8]| {
    let Some((&classes, file)) = data.split_first() else {
        return;
    };
    let classes = classes as usize + 1;
    let Ok((h, w, labels)) = decode_labels(file) else {
        return;
    };
    if h * w * classes > 1 << 22 {
        return;
    }
    match decode_mask(file, classes) {
        Ok(mask) => assert_eq!(mask.argmax(), labels),
        Err(_) => assert!(labels.iter().any(|&l| l >= classes)),
    }
});
