use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use guides_core::pipeline::{run_pipeline, PipelineConfig, Stage};

pub fn campus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/campus")
}

pub fn config(out: &Path) -> PipelineConfig {
    let text = fs::read_to_string(campus().join("pipeline.json")).unwrap();
    let mut c: PipelineConfig = serde_json::from_str(&text).unwrap();
    c.output_dir = Some(out.to_path_buf());
    c
}

pub fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}

/// Two runs per stage with the same config write the same bytes.
pub fn identical_runs_write_identical_bytes() {
    for stage in [Stage::Convert, Stage::Detect, Stage::Repair] {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let sa = run_pipeline(&config(a.path()), &campus(), stage).unwrap();
        let sb = run_pipeline(&config(b.path()), &campus(), stage).unwrap();
        assert_eq!(sa, sb);
        let (ta, tb) = (read_tree(a.path()), read_tree(b.path()));
        assert_eq!(ta.keys().collect::<Vec<_>>(), sa.artifacts.iter().collect::<Vec<_>>());
        assert_eq!(ta, tb, "{stage:?}");
    }
}
