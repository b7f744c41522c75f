#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = aplr::pipeline::RunConfig::from_json_str(text) {
        // configs that parse must also survive validation
        let _ = cfg.validate(10);
    }
});
