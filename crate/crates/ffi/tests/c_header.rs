//! Compiles the C example against the generated header and the shared
//! library, then runs it.

use std::path::PathBuf;
use std::process::Command;

fn target_dir() -> PathBuf {
    // <target>/<profile>/deps/<test binary>
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_builds_and_runs() {
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let lib_dir = target_dir();
    assert!(
        lib_dir.join("libaru_ffi.so").exists() || lib_dir.join("libaru_ffi.dylib").exists(),
        "shared library not found in {}",
        lib_dir.display()
    );
    let out_dir = tempfile::tempdir().unwrap();
    let exe = out_dir.path().join("stream");
    let status = Command::new(std::env::var("CC").unwrap_or_else(|_| "cc".into()))
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(crate_dir.join("examples/c/stream.c"))
        .arg("-o")
        .arg(&exe)
        .arg("-L")
        .arg(&lib_dir)
        .arg(format!("-Wl,-rpath,{}", lib_dir.display()))
        .arg("-laru_ffi")
        .arg("-lm")
        .status()
        .expect("C compiler available");
    assert!(status.success(), "C example failed to compile");

    let out = Command::new(&exe).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "C example failed: {stdout}{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.contains("shape error -> shape mismatch"), "{stdout}");
    assert!(stdout.contains("restored steps 200"), "{stdout}");
}
