#![no_main]

use feti_sqp::config::RunConfig;
use libfuzzer_sys::fuzz_target;

// The run-config parser is the only entry point fed untrusted bytes. A
// successful parse implies full validation, so every accepted config must
// survive a serialize/reparse round trip unchanged, and rejected input must
// fail with an error value instead of a panic.
fuzz_target!(|data: &[u8]| {
    let Ok(cfg) = RunConfig::from_json_bytes(data) else {
        return;
    };
    let json = serde_json::to_vec(&cfg).expect("accepted config serializes");
    let again = RunConfig::from_json_bytes(&json).expect("serialized config reparses");
    assert_eq!(cfg, again, "round trip must be lossless");
});
