#![no_main]

use libfuzzer_sys::fuzz_target;
use qfiae::artifact::{read_csv, write_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = read_csv(data) {
        let mut out = Vec::new();
        write_csv(&mut out, &rows).expect("rows write");
        assert_eq!(read_csv(out.as_slice()).expect("written rows parse").len(), rows.len());
    }
});
