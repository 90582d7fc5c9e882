#![no_main]

use hexplane::cloud::{decode_binary, encode_binary};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cloud) = decode_binary(data) {
        assert_eq!(encode_binary(&cloud), data);
    }
});
