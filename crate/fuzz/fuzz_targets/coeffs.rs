#![no_main]

use libfuzzer_sys::fuzz_target;
use quadinv::problem::parse_coeffs;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cs) = parse_coeffs(s) {
        assert!(!cs.is_empty());
        assert!(cs.iter().all(|c| c.is_finite()));
    }
});
