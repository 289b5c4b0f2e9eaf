#![no_main]

use libfuzzer_sys::fuzz_target;
use patentscope::ingest::{build_edge_list, parse_corpus_bytes, yearly_series, InputFormat, SchemaMap};

fuzz_target!(|data: &[u8]| {
    let schema = SchemaMap::default();
    if let Ok(parsed) = parse_corpus_bytes(data, InputFormat::Csv, &schema) {
        // Whatever parses must feed the downstream builders without panicking.
        let edges = build_edge_list(&parsed.records);
        for e in &edges {
            assert!(e.source < e.target && e.weight > 0);
        }
        let _ = yearly_series(&parsed.records, None);
    }
});
