#![no_main]

use libfuzzer_sys::fuzz_target;
use rieszflow::balls::parse_points;

fuzz_target!(|data: &[u8]| {
    let Some((&first, rest)) = data.split_first() else { return };
    if let Ok(text) = std::str::from_utf8(rest) {
        // any dimension, including invalid ones
        let _ = parse_points(text, (first % 4) as usize);
    }
});
