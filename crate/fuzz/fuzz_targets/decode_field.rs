#![no_main]

use libfuzzer_sys::fuzz_target;
use rieszflow::meanfield::{decode_field, encode_field};

fuzz_target!(|data: &[u8]| {
    if let Ok(field) = decode_field(data) {
        // anything accepted re-encodes to a stable form
        let bytes = encode_field(&field);
        let again = decode_field(&bytes).expect("re-encoded field decodes");
        assert_eq!(encode_field(&again), bytes);
    }
});
