#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok((ids, matrix)) = rlm::io::parse_matrix_csv(text) {
            // Export and reparse must round-trip exactly.
            let csv = rlm::io::matrix_to_csv(&ids, &matrix);
            let (ids2, matrix2) = rlm::io::parse_matrix_csv(&csv).expect("roundtrip");
            assert_eq!(ids, ids2);
            assert_eq!(matrix, matrix2);
        }
    }
});
