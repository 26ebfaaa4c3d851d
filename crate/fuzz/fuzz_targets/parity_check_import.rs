#![no_main]

use libfuzzer_sys::fuzz_target;
use ris_icedd::ldpc::{parse_parity_text, LdpcCode};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if parse_parity_text(text).is_err() {
        return;
    }
    // building runs the elimination; keep it to small codes
    if text.len() < 4096 {
        if let Ok(code) = LdpcCode::from_text(text) {
            let msg = vec![0u8; code.k()];
            let cw = code.encode(&msg).unwrap();
            assert!(code.syndrome_ok(&cw));
            assert_eq!(LdpcCode::from_text(&code.to_text()).unwrap(), code);
        }
    }
});
