#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(manifest) = rlm::io::parse_manifest(text) {
            // An accepted manifest must survive a write cycle.
            let json = serde_json::to_string(&manifest).expect("serialize");
            rlm::io::parse_manifest(&json).expect("reaccept own output");
        }
    }
});
