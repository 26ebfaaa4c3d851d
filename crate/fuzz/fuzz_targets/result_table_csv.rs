#![no_main]

use libfuzzer_sys::fuzz_target;
use ris_icedd::harness::ResultTable;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = ResultTable::read_csv(data) {
        let _ = t.summary();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = ResultTable::read_csv(&buf[..]).unwrap();
        assert_eq!(back.rows.len(), t.rows.len());
    }
});
