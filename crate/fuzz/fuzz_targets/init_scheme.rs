#![no_main]

use libfuzzer_sys::fuzz_target;
use quadinv::problem::InitScheme;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(scheme) = s.parse::<InitScheme>() {
        let shown = scheme.to_string();
        assert_eq!(shown.parse::<InitScheme>().ok(), Some(scheme));
    }
});
