#![no_main]

use libfuzzer_sys::fuzz_target;
use patentscope::export::parse_series_csv;
use patentscope::lifecycle::{fit_logistic, SolverConfig};

fuzz_target!(|data: &[u8]| {
    if let Ok(series) = parse_series_csv(data) {
        let cfg = SolverConfig {
            max_iter: 50,
            ..SolverConfig::default()
        };
        for (_, s) in series.iter().take(2) {
            if s.counts.len() <= 200 {
                let _ = fit_logistic(s, &cfg);
            }
        }
    }
});
