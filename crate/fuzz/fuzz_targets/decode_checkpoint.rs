#![no_main]

use libfuzzer_sys::fuzz_target;
use mno_core::io::{decode_checkpoint, encode_checkpoint};

fuzz_target!(|bytes: &[u8]| {
    if let Ok(ck) = decode_checkpoint(bytes) {
        let again = encode_checkpoint(&ck);
        let back = decode_checkpoint(&again).expect("re-encoded checkpoint decodes");
        assert_eq!(encode_checkpoint(&back), again);
    }
});
