#![no_main]
use cagkit_core::classify::{parse_response_line, FramePrediction};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else { return };
    if let Ok(resp) = parse_response_line(line) {
        let _ = FramePrediction::from_raw(&resp.video_id, resp.frame_index, &resp.probs);
    }
});
