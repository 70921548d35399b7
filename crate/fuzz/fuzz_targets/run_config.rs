#![no_main]

use libfuzzer_sys::fuzz_target;
use repgeom::pipeline::{parse_ranks, RunConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    // first line doubles as a `--set` override, the rest is the config body
    let (first, body) = text.split_once('\n').unwrap_or((text, ""));
    if let Ok(cfg) = RunConfig::from_toml(body, &[first.to_string()]) {
        let _ = cfg.validate();
        let _ = cfg.hash();
    }
    let _ = RunConfig::from_toml(text, &[]);
    let _ = parse_ranks(first);
});
