#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use patentscope::config::PipelineConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = PipelineConfig::parse(text, Path::new("base")) {
            // A config that parsed is valid and always echoes.
            assert!(cfg.validate().is_ok());
            let _ = serde_json::to_string(&cfg.echo());
        }
    }
});
