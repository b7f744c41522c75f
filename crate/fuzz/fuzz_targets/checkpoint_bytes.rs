#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // must reject or parse, never panic or abort
    let _ = aplr::model::checkpoint_from_bytes(data);
});
