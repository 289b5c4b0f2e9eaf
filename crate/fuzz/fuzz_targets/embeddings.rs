#![no_main]

use libfuzzer_sys::fuzz_target;
use patentscope::textvec::parse_embeddings;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = parse_embeddings(data) {
        if let Some((_, first)) = rows.first() {
            let dim = first.len();
            assert!(rows
                .iter()
                .all(|(_, v)| v.len() == dim && v.iter().all(|x| x.is_finite())));
        }
    }
});
