//! Compiles and runs a small C program against the generated header and the
//! static library.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "maya.h"

int main(void) {
    MayaModel *model = NULL;
    if (maya_model_new(3, &model) != MAYA_STATUS_OK) return 10;
    double pts[2 * MAYA_NUM_POINTS];
    for (int i = 0; i < MAYA_NUM_POINTS; i++) {
        pts[2 * i] = 100.0 + (i % 17) * 5.0;
        pts[2 * i + 1] = 100.0 + (i / 17) * 12.0 + (i % 5);
    }
    double probs[MAYA_NUM_CLASSES];
    uint8_t top = 0;
    if (maya_model_predict(model, pts, MAYA_NUM_POINTS, probs, &top, NULL) != MAYA_STATUS_OK) {
        fprintf(stderr, "%s\n", maya_last_error());
        return 11;
    }
    double sum = 0;
    for (int i = 0; i < MAYA_NUM_CLASSES; i++) sum += probs[i];
    if (sum < 0.999999999 || sum > 1.000000001) return 12;
    if (maya_model_predict(model, pts, 67, probs, &top, NULL) != MAYA_STATUS_INVALID_LANDMARKS) return 13;
    if (strlen(maya_last_error()) == 0) return 14;
    maya_model_free(model);

    MayaGame *game = NULL;
    if (maya_game_new(NULL, 7, &game) != MAYA_STATUS_OK) return 20;
    if (maya_game_command(game, "{\"command\":\"roll\"}", NULL) != MAYA_STATUS_PHASE) return 21;
    char *log = NULL;
    if (maya_game_events(game, &log) != MAYA_STATUS_OK) return 22;
    maya_string_free(log);
    maya_game_free(game);
    printf("ok %s %s\n", maya_version(), maya_emotion_name(top));
    return 0;
}
"#;

#[test]
fn header_compiles_and_links() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping");
        return;
    }
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // target/<profile>/deps/<test> -> target/<profile>
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libmaya_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let exe = dir.path().join("main");
    let out = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&exe)
        .arg(&src)
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "exit {:?}: {}", run.status.code(), String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ok "));
}
