#![no_main]

use libfuzzer_sys::fuzz_target;
use quadinv::trace::{from_bytes, to_bytes, TraceFormat};

fuzz_target!(|data: &[u8]| {
    // whatever parses must write out and read back to the same bytes
    if let Ok(trace) = from_bytes(data, TraceFormat::Json) {
        let bytes = to_bytes(&trace, TraceFormat::Json).expect("write parsed trace");
        let again = from_bytes(&bytes, TraceFormat::Json).expect("reparse");
        assert_eq!(bytes, to_bytes(&again, TraceFormat::Json).unwrap());
    }
});
