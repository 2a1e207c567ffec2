#![no_main]

use libfuzzer_sys::fuzz_target;
use lifted_filter::scenario::Trace;

fuzz_target!(|data: &[u8]| {
    // non-UTF-8 input must surface as an error, not a panic
    if let Ok(trace) = Trace::read(data) {
        let again = Trace::parse(&trace.to_jsonl()).expect("written trace reloads");
        assert_eq!(trace, again);
    }
});
