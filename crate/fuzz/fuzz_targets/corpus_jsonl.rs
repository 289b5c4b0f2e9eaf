#![no_main]

use libfuzzer_sys::fuzz_target;
use patentscope::ingest::{build_edge_list, parse_corpus_bytes, InputFormat, SchemaMap};

fuzz_target!(|data: &[u8]| {
    let schema = SchemaMap::default();
    if let Ok(parsed) = parse_corpus_bytes(data, InputFormat::JsonLines, &schema) {
        let _ = build_edge_list(&parsed.records);
    }
});
