#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(file) = rlm::io::parse_suite_file(text) {
            // Accepted scenarios must evaluate to finite voltages.
            for sc in &file.scenarios {
                for t in [0.0, sc.t_fault_on, sc.t_clear, sc.t_clear + 1.0] {
                    assert!(sc.voltage_at(t).is_finite());
                }
            }
        }
    }
});
