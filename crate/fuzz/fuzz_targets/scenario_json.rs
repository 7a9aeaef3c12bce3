#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(loaded) = klplan::scenario::parse_scenario(text) {
        // accepted scenarios must survive a write/reload cycle unchanged
        let again = klplan::scenario::parse_scenario(&loaded.scenario.to_json()).expect("reload");
        assert_eq!(again.scenario, loaded.scenario);
        assert_eq!(again.scenario.config_hash(), loaded.scenario.config_hash());
    }
});
