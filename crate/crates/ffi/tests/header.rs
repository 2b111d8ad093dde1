use std::path::{Path, PathBuf};
use std::process::Command;

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn exported_names() -> Vec<String> {
    let src = std::fs::read_to_string(crate_dir().join("src/lib.rs")).unwrap();
    src.lines()
        .filter_map(|l| l.trim().strip_prefix("pub unsafe extern \"C\" fn "))
        .map(|rest| rest.split('(').next().unwrap().to_string())
        .collect()
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(crate_dir().join("include/e3b.h")).unwrap();
    let names = exported_names();
    assert!(names.len() >= 12);
    for n in &names {
        assert!(header.contains(&format!("{n}(")), "{n} missing from header");
    }
    for item in [
        "E3B_STATUS_OK = 0",
        "E3B_STATUS_PANIC = 9",
        "typedef struct E3bTracker E3bTracker",
        "#ifndef E3B_H",
    ] {
        assert!(header.contains(item), "{item} missing from header");
    }
}

fn static_lib() -> Option<PathBuf> {
    // tests live in target/<profile>/deps; the archive sits one level up
    let exe = std::env::current_exe().ok()?;
    let lib = exe.parent()?.parent()?.join("libe3b_ffi.a");
    lib.exists().then_some(lib)
}

const SMOKE: &str = r#"
#include <stdio.h>
#include "e3b.h"

int main(void) {
    E3bTracker *t = NULL;
    if (e3b_tracker_new(2, 0.5, &t) != E3B_STATUS_OK) return 1;
    double phi[2] = {1.0, 0.0};
    double b = 0.0;
    if (e3b_tracker_update(t, phi, 2, &b) != E3B_STATUS_OK || b != 2.0) return 2;
    if (e3b_tracker_update(t, phi, 1, &b) != E3B_STATUS_INVALID_ARGUMENT) return 3;
    char msg[128];
    if (e3b_last_error(msg, sizeof msg) == 0) return 4;
    e3b_tracker_free(t);

    E3bEnv *env = NULL;
    E3bObservation obs;
    if (e3b_env_new("multiroom-r2-s7", 0, &env) != E3B_STATUS_OK) return 5;
    if (e3b_env_reset(env, 3, &obs) != E3B_STATUS_OK || obs.t != 0) return 6;
    double r = 0.0;
    bool done = false;
    if (e3b_env_step(env, 4, &obs, &r, &done) != E3B_STATUS_OK || obs.t != 1) return 7;
    e3b_env_free(env);
    printf("ok\n");
    return 0;
}
"#;

fn compile_and_run(cc: &str, lib: &Path) -> Option<String> {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    let exe = dir.path().join("smoke");
    std::fs::write(&src, SMOKE).unwrap();
    let status = Command::new(cc)
        .arg(&src)
        .arg("-I")
        .arg(crate_dir().join("include"))
        .arg(lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .ok()?;
    assert!(status.success(), "C smoke program failed to build");
    let out = Command::new(&exe).output().unwrap();
    assert!(
        out.status.success(),
        "C smoke program exited with {:?}",
        out.status.code()
    );
    Some(String::from_utf8_lossy(&out.stdout).into_owned())
}

#[test]
fn header_compiles_and_links_from_c() {
    let Some(lib) = static_lib() else {
        eprintln!("static library not found next to the test binary; skipping");
        return;
    };
    match compile_and_run("cc", &lib) {
        Some(out) => assert_eq!(out.trim(), "ok"),
        None => eprintln!("no C compiler on PATH; skipping"),
    }
}
