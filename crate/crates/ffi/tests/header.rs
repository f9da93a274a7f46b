use std::path::Path;
use std::process::Command;

fn header() -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/jgap.h");
    std::fs::read_to_string(path).expect("header generated by build script")
}

#[test]
fn header_declares_the_api() {
    let h = header();
    assert!(h.starts_with("#ifndef JGAP_H"));
    for name in [
        "jgap_last_error",
        "jgap_kernel_new",
        "jgap_kernel_free",
        "jgap_kernel_moments",
        "jgap_grid_sample",
        "jgap_grid_from_values",
        "jgap_grid_len",
        "jgap_grid_values",
        "jgap_grid_free",
        "jgap_gap",
        "jgap_limit_functional",
        "jgap_ladder",
        "jgap_bilayer_solve",
        "jgap_solution_info",
        "jgap_solution_values",
        "jgap_solution_certify",
        "jgap_solution_free",
        "typedef struct JgapKernel JgapKernel;",
        "typedef struct JgapGrid JgapGrid;",
        "typedef struct JgapSolution JgapSolution;",
        "JGAP_STATUS_OK = 0",
        "JGAP_STATUS_PANIC",
    ] {
        assert!(h.contains(name), "{name} missing");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(probe) = Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler, skipping");
        return;
    };
    assert!(probe.status.success());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"jgap.h\"\nint main(void) { JgapKernel *k = 0; \
         return jgap_kernel_new(\"box:1:1\", &k) == JGAP_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let o = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(Path::new(env!("CARGO_MANIFEST_DIR")).join("include"))
        .arg(&src)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}
