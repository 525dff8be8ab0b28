//! Compiles and runs a small C program against the generated header and the
//! static library. Skipped when no C compiler is on the path.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "sac.h"

int main(void) {
    double j = 0.0;
    if (sac_resolvent(0.5, 1.0, &j) != SAC_STATUS_OK) return 1;
    if (j < 0.4787 || j > 0.4788) return 2;
    if (sac_resolvent(2.0, 1.0, &j) != SAC_STATUS_INVALID_CONFIG) return 3;
    if (strlen(sac_last_error()) == 0) return 4;
    SacConfig *cfg = NULL;
    if (sac_config_from_json("{\"grid\": {\"extent\": [1.0], \"cells\": [8]}}", &cfg) != SAC_STATUS_OK) return 5;
    size_t n = 0;
    if (sac_config_field_len(cfg, &n) != SAC_STATUS_OK || n != 8) return 6;
    sac_config_free(cfg);
    printf("ok %s\n", sac_version());
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
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libsac_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());

    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("main.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let bin = tmp.path().join("main");
    let status = Command::new(&cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status.code());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
