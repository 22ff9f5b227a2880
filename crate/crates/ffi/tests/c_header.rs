//! Compiles and runs a small C program against the generated header and the
//! static library.

use std::path::{Path, PathBuf};
use std::process::Command;

const EXPORTS: &[&str] = &[
    "lrp_version",
    "lrp_last_error",
    "lrp_operator_new",
    "lrp_operator_free",
    "lrp_operator_dims",
    "lrp_operator_apply",
    "lrp_operator_adjoint",
    "lrp_operator_estimate_rip",
    "lrp_instance_new",
    "lrp_instance_free",
    "lrp_instance_truth",
    "lrp_instance_loss",
    "lrp_instance_gradient",
    "lrp_instance_test_error",
    "lrp_solver_options_default",
    "lrp_run_gd",
    "lrp_trajectory_free",
    "lrp_trajectory_len",
    "lrp_trajectory_iterations",
    "lrp_trajectory_row",
    "lrp_trajectory_stop_reason",
    "lrp_trajectory_final_factor",
];

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/lowrank_phases.h")
}

#[test]
fn header_declares_every_export() {
    let text = std::fs::read_to_string(header()).expect("header is generated by the build script");
    for name in EXPORTS {
        assert!(text.contains(&format!("{name}(")), "{name} missing from header");
    }
    for ty in ["LrpStatus", "LrpStopReason", "LrpSolverOptions", "LrpTrajectoryRow"] {
        assert!(text.contains(&format!("typedef struct {ty}")) || text.contains(&format!("typedef enum {ty}")));
    }
    for opaque in ["LrpOperator", "LrpInstance", "LrpTrajectory"] {
        assert!(text.contains(&format!("typedef struct {opaque} {opaque};")));
    }
    assert!(text.contains("LRP_STATUS_OK = 0"));
}

const PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include "lowrank_phases.h"

int main(void) {
    LrpInstance *inst = NULL;
    if (lrp_instance_new(6, 1, 80, 1, 2, 1.0, &inst) != LRP_STATUS_OK) {
        fprintf(stderr, "%s\n", lrp_last_error());
        return 1;
    }
    LrpSolverOptions opts = lrp_solver_options_default();
    opts.r = 2;
    opts.alpha = 1e-3;
    opts.max_iters = 3000;
    opts.stop_test_error = 1e-4;
    LrpTrajectory *traj = NULL;
    if (lrp_run_gd(inst, &opts, &traj) != LRP_STATUS_OK) return 2;
    LrpTrajectoryRow last;
    if (lrp_trajectory_row(traj, lrp_trajectory_len(traj) - 1, &last) != LRP_STATUS_OK) return 3;
    LrpStopReason reason;
    lrp_trajectory_stop_reason(traj, &reason);
    if (reason != LRP_STOP_REASON_TEST_ERROR_THRESHOLD || !(last.test_error_rel <= 1e-4)) return 4;
    if (lrp_instance_loss(inst, NULL, 12, 2, NULL) != LRP_STATUS_NULL_POINTER) return 5;
    printf("%s %zu %.3e\n", lrp_version(), last.t, last.test_error_rel);
    lrp_trajectory_free(traj);
    lrp_instance_free(inst);
    return 0;
}
"#;

/// Directory holding the static library: the parent of `deps/`.
fn artifact_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let lib = artifact_dir().join("liblowrank_phases_ffi.a");
    assert!(lib.exists(), "static library not found at {}", lib.display());
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    let bin = dir.path().join("smoke");
    std::fs::write(&src, PROGRAM).unwrap();

    let status = Command::new(&cc)
        .arg("-std=c11")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap_or_else(|e| panic!("failed to launch C compiler '{cc}': {e}"));
    assert!(status.success(), "C compilation failed");

    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}: {}", out.status, String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with(env!("CARGO_PKG_VERSION")), "{stdout}");
}
