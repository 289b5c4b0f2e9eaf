#![no_main]

use libfuzzer_sys::fuzz_target;
use patentscope::export::parse_clusters_csv;

fuzz_target!(|data: &[u8]| {
    let _ = parse_clusters_csv(data);
});
