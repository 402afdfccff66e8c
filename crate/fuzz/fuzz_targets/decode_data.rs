#![no_main]

use libfuzzer_sys::fuzz_target;
use mno_core::io::{decode_data, encode_pairs, encode_trajectory, DataFile};

fuzz_target!(|bytes: &[u8]| {
    let again = match decode_data(bytes) {
        Ok(DataFile::Pairs(p)) => encode_pairs(&p),
        Ok(DataFile::Trajectory(t)) => encode_trajectory(&t),
        Err(_) => return,
    };
    let back = decode_data(&again).expect("re-encoded file decodes");
    let twice = match back {
        DataFile::Pairs(p) => encode_pairs(&p),
        DataFile::Trajectory(t) => encode_trajectory(&t),
    };
    assert_eq!(again, twice);
});
