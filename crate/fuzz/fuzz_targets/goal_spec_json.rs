#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(goal) = klplan::scenario::parse_goal_spec(text) {
        let json = klplan::scenario::goal_spec_to_json(&goal);
        let again = klplan::scenario::parse_goal_spec(&json).expect("reload");
        assert_eq!(again.kind(), goal.kind());
        assert_eq!(again.dim(), goal.dim());
    }
});
