#![no_main]

use hexplane::checkpoint::Checkpoint;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ckpt) = Checkpoint::decode(data) {
        let again = Checkpoint::decode(&ckpt.encode().unwrap()).unwrap();
        assert_eq!(again.metadata, ckpt.metadata);
    }
});
