#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // first line is the sidecar JSON, the rest is the dataset CSV
    let (sidecar, csv) = match text.split_once('\n') {
        Some(pair) => pair,
        None => (text, ""),
    };
    let _ = aplr::data::dataset_from_csv_str(csv, sidecar);
});
