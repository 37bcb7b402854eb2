#![no_main]

use libfuzzer_sys::fuzz_target;
use rieszflow::balls::parse_balls_json;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_balls_json(text);
    }
});
