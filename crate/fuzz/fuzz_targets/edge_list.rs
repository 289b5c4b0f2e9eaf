#![no_main]

use libfuzzer_sys::fuzz_target;
use patentscope::export::parse_edges_csv;
use patentscope::graph::build_network;

fuzz_target!(|data: &[u8]| {
    if let Ok(edges) = parse_edges_csv(data) {
        let _ = build_network(&edges);
    }
});
