#![no_main]

use libfuzzer_sys::fuzz_target;
use qfiae::fourier::FourierSeries2D;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(series) = FourierSeries2D::from_text(text) {
        let again = FourierSeries2D::from_text(&series.to_text()).expect("written series parses");
        assert_eq!(again.to_text(), series.to_text());
    }
});
