#![no_main]

use hexplane::projection::decode_index_sidecar;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = decode_index_sidecar(data);
});
