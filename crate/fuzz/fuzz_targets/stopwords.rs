#![no_main]

use libfuzzer_sys::fuzz_target;
use patentscope::textvec::{tokenize, Stopwords};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let stop = Stopwords::parse(text);
        let tokens = tokenize(text, &stop);
        assert!(tokens.iter().all(|t| !stop.contains(t)));
    }
});
