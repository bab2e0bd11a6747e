#![no_main]

use coversynth::alignment::AlignmentPath;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok((path, onsets_a, onsets_b)) = AlignmentPath::parse(text) {
        assert!(path.is_valid());
        assert_eq!(path.pairs.len(), onsets_a.len());
        assert_eq!(path.pairs.len(), onsets_b.len());
        assert!(onsets_a.iter().chain(&onsets_b).all(|t| t.is_finite()));
    }
});
