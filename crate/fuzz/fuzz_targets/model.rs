#![no_main]

use libfuzzer_sys::fuzz_target;
use qfiae::artifact::ModelArtifact;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(artifact) = ModelArtifact::from_toml(text) {
        let written = artifact.to_toml().expect("parsed artifact serializes");
        ModelArtifact::from_toml(&written).expect("written artifact parses");
    }
});
