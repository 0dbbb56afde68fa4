#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = cagkit_core::ingest::decode_png(data) {
        assert_eq!(img.pixels.len(), img.width as usize * img.height as usize);
    }
    // Sniffing dispatches to one of the decoders above.
    let _ = cagkit_core::ingest::decode_image(data);
});
