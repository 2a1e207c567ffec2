#![no_main]

use libfuzzer_sys::fuzz_target;
use lifted_filter::scenario::Scenario;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(sc) = Scenario::from_json(text) {
        let again = Scenario::from_json(&sc.to_json()).expect("written scenario reloads");
        assert_eq!(sc, again);
    }
});
