#![no_main]

use libfuzzer_sys::fuzz_target;
use ris_icedd::harness::{expand_sweep, parse_experiment};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(file) = parse_experiment(text) {
        let _ = expand_sweep(&file);
    }
});
