#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        // Parse errors are fine; we only care about panics.
        if let Ok((file, _)) = rlm::io::parse_model_file(text) {
            // Accepted files must stay accepted after a write cycle.
            let json = serde_json::to_string(&file).expect("serialize");
            rlm::io::parse_model_file(&json).expect("reaccept own output");
        }
    }
});
