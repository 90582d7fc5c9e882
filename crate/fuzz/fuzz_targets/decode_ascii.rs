#![no_main]

use hexplane::cloud::{decode_ascii, encode_ascii};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cloud) = decode_ascii(text) {
        assert_eq!(decode_ascii(&encode_ascii(&cloud)).unwrap(), cloud);
    }
});
