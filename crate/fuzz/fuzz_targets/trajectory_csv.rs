#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(table) = klplan::trajectory::parse_trajectory_csv(text) {
        let again = klplan::trajectory::parse_trajectory_csv(&table.to_csv()).expect("reload");
        assert_eq!(again.rows.len(), table.rows.len());
        assert_eq!(again.state_dim, table.state_dim);
    }
});
