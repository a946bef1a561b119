//! Replays the checked-in fuzz seeds, plus truncated and bit-flipped
//! variants of each, through the same checks the fuzz targets make.

use std::fs;
use std::path::PathBuf;

use seco_inr::io::{
    decode_image, decode_labels, decode_mask, encode_raw, parse_phantom_spec, phantom_spec_to_toml, Checkpoint,
    Precision, RunConfig, INRD_MAGIC,
};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let path = e.unwrap().path();
            (path.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&path).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

/// Every prefix and every single-bit flip of `seed`.
fn variants(seed: &[u8]) -> impl Iterator<Item = Vec<u8>> + '_ {
    let prefixes = (0..seed.len()).map(|n| seed[..n].to_vec());
    let flips = (0..seed.len() * 8).map(|bit| {
        let mut v = seed.to_vec();
        v[bit / 8] ^= 1 << (bit % 8);
        v
    });
    prefixes.chain(flips)
}

fn check_raw(data: &[u8]) -> bool {
    let Ok(image) = decode_image(data) else {
        return false;
    };
    let precision = if data.starts_with(INRD_MAGIC) {
        Precision::Double
    } else {
        Precision::Single
    };
    if data.starts_with(b"INR") {
        assert_eq!(encode_raw(&image, precision).unwrap(), data);
    }
    true
}

fn check_gray(data: &[u8]) -> bool {
    let ok = match decode_image(data) {
        Ok(image) => {
            assert!(image.data().iter().all(|v| (0.0..=1.0).contains(v)));
            true
        }
        Err(_) => false,
    };
    decode_labels(data).is_ok() || ok
}

fn check_mask(data: &[u8]) -> bool {
    let Some((&classes, file)) = data.split_first() else {
        return false;
    };
    let classes = classes as usize + 1;
    let Ok((h, w, labels)) = decode_labels(file) else {
        return false;
    };
    if h * w * classes > 1 << 22 {
        return false;
    }
    match decode_mask(file, classes) {
        Ok(mask) => {
            assert_eq!(mask.argmax(), labels);
            true
        }
        Err(_) => {
            assert!(labels.iter().any(|&l| l >= classes));
            false
        }
    }
}

fn check_config(data: &[u8]) -> bool {
    let Ok(text) = std::str::from_utf8(data) else {
        return false;
    };
    match RunConfig::parse(text) {
        Ok(cfg) => {
            assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg);
            true
        }
        Err(_) => false,
    }
}

fn check_spec(data: &[u8]) -> bool {
    let Ok(text) = std::str::from_utf8(data) else {
        return false;
    };
    match parse_phantom_spec(text) {
        Ok(spec) => {
            assert_eq!(parse_phantom_spec(&phantom_spec_to_toml(&spec)).unwrap(), spec);
            let _ = seco_inr::phantom::render(&spec, 8, 8);
            true
        }
        Err(_) => false,
    }
}

fn check_checkpoint(data: &[u8]) -> bool {
    let Ok(ckpt) = Checkpoint::decode(data) else {
        return false;
    };
    assert_eq!(Checkpoint::decode(&ckpt.encode()).unwrap(), ckpt);
    let c = &ckpt.config;
    if [c.layers, c.hidden_width, c.classes, c.classnet_width, c.conditioner_width, c.pe_frequencies]
        .iter()
        .all(|&k| k <= 64)
    {
        let _ = ckpt.model();
    }
    true
}

fn replay(target: &str, check: fn(&[u8]) -> bool) {
    for (name, seed) in seeds(target) {
        assert!(check(&seed), "seed {target}/{name} should be accepted");
        for v in variants(&seed) {
            check(&v);
        }
    }
}

#[test]
fn raw_float_seeds() {
    replay("decode_raw", check_raw);
}

#[test]
fn png_seeds() {
    replay("decode_png", check_gray);
}

#[test]
fn pgm_seeds() {
    replay("decode_pgm", check_gray);
}

#[test]
fn mask_seeds() {
    replay("decode_mask", check_mask);
}

#[test]
fn config_seeds() {
    replay("parse_config", check_config);
}

#[test]
fn phantom_spec_seeds() {
    replay("parse_phantom_spec", check_spec);
}

#[test]
fn checkpoint_seeds() {
    replay("decode_checkpoint", check_checkpoint);
    let (_, seed) = &seeds("decode_checkpoint")[0];
    assert!(Checkpoint::decode(seed).unwrap().model().is_ok());
}
