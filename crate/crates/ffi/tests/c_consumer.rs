//! Builds a small C program against the generated header and the static
//! library. Skipped when no C compiler is on the path.

use std::path::PathBuf;
use std::process::Command;

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "carryover.h"

int main(int argc, char **argv) {
    CarryoverEmbeddings *emb = NULL;
    if (carryover_embeddings_load(argv[1], &emb) != CARRYOVER_STATUS_OK) return 10;
    size_t dim = carryover_embeddings_dim(emb);
    double v[16];
    if (dim != 4 || carryover_embeddings_embed_phrase(emb, "la taqueria", v, dim) != CARRYOVER_STATUS_OK) return 11;
    carryover_embeddings_free(emb);
    char *report = NULL;
    if (carryover_score_json("[[{\"key\":\"A\",\"value\":\"x\"}]]", "[[{\"key\":\"A\",\"value\":\"X\"}]]", &report) != CARRYOVER_STATUS_OK) return 12;
    if (strstr(report, "\"f1\":1.0") == NULL) return 13;
    carryover_string_free(report);
    if (carryover_embeddings_load("/nonexistent", &emb) != CARRYOVER_STATUS_IO) return 14;
    if (carryover_last_error() == NULL) return 15;
    printf("%s %.3f\n", carryover_version(), v[3]);
    return 0;
}
"#;

#[test]
fn c_program_links_and_runs() {
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping");
        return;
    }
    let lib = target_dir().join("libcarryover_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let exe = dir.path().join("consumer");
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C build failed");
    let emb = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/demo_emb.txt");
    let out = Command::new(&exe).arg(&emb).output().unwrap();
    assert!(out.status.success(), "consumer exited with {:?}", out.status.code());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.trim(), format!("{} 0.850", env!("CARGO_PKG_VERSION")));
}
