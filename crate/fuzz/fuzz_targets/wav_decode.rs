#![no_main]

use coversynth::audio::decode_wav;
use coversynth::SAMPLE_RATE;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(clip) = decode_wav(data) {
        assert_eq!(clip.sample_rate(), SAMPLE_RATE);
        assert!(clip.samples().iter().all(|s| s.is_finite()));
    }
});
