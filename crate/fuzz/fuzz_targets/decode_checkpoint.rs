#![no_main]

use libfuzzer_sys::fuzz_target;
use seco_inr::io::Checkpoint;

fuzz_target!(|data: &[u8]| {
    if let Ok(ckpt) = Checkpoint::decode(data) {
        assert_eq!(Checkpoint::decode(&ckpt.encode()).unwrap(), ckpt);
        // Rebuilding allocates the configured network before comparing
        // tensors, so only small architectures are worth trying.
        let c = &ckpt.config;
        let knobs = [
            c.layers,
            c.hidden_width,
            c.classes,
            c.classnet_layers,
            c.classnet_width,
            c.conditioner_layers,
            c.conditioner_width,
            c.pe_frequencies,
        ];
        if knobs.iter().all(|&k| k <= 64) {
            let _ = ckpt.model();
        }
    }
});
