use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::ptr;

use semrec_ffi::*;

const SCHEMA: &str = "ENTITY user\nENTITY item\nREL like user item unweighted asymmetric\n";
const DATA: &str = "like\tu1\ti1\nlike\tu2\ti1\nlike\tu2\ti2\nlike\tu3\ti3\n";

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn toy(dir: &Path) -> (CString, CString) {
    std::fs::write(dir.join("toy.schema"), SCHEMA).unwrap();
    std::fs::write(dir.join("toy.tsv"), DATA).unwrap();
    (
        c(dir.join("toy.schema").to_str().unwrap()),
        c(dir.join("toy.tsv").to_str().unwrap()),
    )
}

fn last_error() -> String {
    let p = semrec_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn load_build_query_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (schema, data) = toy(dir.path());
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(semrec_dataset_load(schema.as_ptr(), data.as_ptr(), &mut ds), SemrecStatus::Ok);
        assert!(semrec_last_error_message().is_null());

        let mut model = ptr::null_mut();
        assert_eq!(semrec_model_build(ds, 2, 5, &mut model), SemrecStatus::Ok);
        assert_eq!(semrec_model_k(model), 2);
        assert_eq!(semrec_model_n(model), 6);

        let mut score = 0.0;
        let (u, i) = (c("user"), c("item"));
        let (u1, i2) = (c("u1"), c("i2"));
        assert_eq!(
            semrec_model_predict(model, u.as_ptr(), u1.as_ptr(), i.as_ptr(), i2.as_ptr(), &mut score),
            SemrecStatus::Ok
        );
        assert!(score > 0.0);

        let mut index = ptr::null_mut();
        assert_eq!(semrec_index_build(model, 2, 2, 1, &mut index), SemrecStatus::Ok);
        let mut rows = [0usize; 10];
        let mut scores = [0.0f64; 10];
        let (mut len, mut truncated) = (0usize, false);
        let st = semrec_index_query(
            index, model, u.as_ptr(), u1.as_ptr(), 10, 10,
            rows.as_mut_ptr(), scores.as_mut_ptr(), &mut len, &mut truncated,
        );
        assert_eq!(st, SemrecStatus::Ok);
        assert_eq!(len, 5);
        assert!(truncated);
        assert!(scores[..len].windows(2).all(|w| w[0] >= w[1]));
        let (mut t, mut id): (*const c_char, *const c_char) = (ptr::null(), ptr::null());
        assert_eq!(semrec_model_entity(model, rows[0], &mut t, &mut id), SemrecStatus::Ok);
        let top = (CStr::from_ptr(t).to_str().unwrap(), CStr::from_ptr(id).to_str().unwrap());
        assert!(top == ("item", "i1") || top == ("user", "u2"), "{top:?}");

        // Save and reload give the same predictions.
        let path = c(dir.path().join("m.tsv").to_str().unwrap());
        assert_eq!(semrec_model_save(model, path.as_ptr()), SemrecStatus::Ok);
        let mut again = ptr::null_mut();
        assert_eq!(semrec_model_load(path.as_ptr(), &mut again), SemrecStatus::Ok);
        let mut score2 = 0.0;
        semrec_model_predict(again, u.as_ptr(), u1.as_ptr(), i.as_ptr(), i2.as_ptr(), &mut score2);
        assert_eq!(score, score2);

        semrec_index_free(index);
        semrec_model_free(again);
        semrec_model_free(model);
        semrec_dataset_free(ds);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (schema, _) = toy(dir.path());
    unsafe {
        let mut ds = ptr::null_mut();
        let missing = c(dir.path().join("nope.tsv").to_str().unwrap());
        assert_eq!(semrec_dataset_load(schema.as_ptr(), missing.as_ptr(), &mut ds), SemrecStatus::Io);
        assert!(last_error().contains("nope.tsv"));
        assert!(ds.is_null());

        assert_eq!(semrec_dataset_load(ptr::null(), missing.as_ptr(), &mut ds), SemrecStatus::NullPointer);
        assert_eq!(semrec_model_build(ptr::null(), 2, 0, &mut ptr::null_mut()), SemrecStatus::NullPointer);

        std::fs::write(dir.path().join("bad.tsv"), "like\tu1\ti1\t3\n").unwrap();
        let bad = c(dir.path().join("bad.tsv").to_str().unwrap());
        assert_eq!(semrec_dataset_load(schema.as_ptr(), bad.as_ptr(), &mut ds), SemrecStatus::Invalid);
        assert!(last_error().contains("bad.tsv:1"), "{}", last_error());

        let (_, data) = toy(dir.path());
        assert_eq!(semrec_dataset_load(schema.as_ptr(), data.as_ptr(), &mut ds), SemrecStatus::Ok);
        let mut model = ptr::null_mut();
        assert_eq!(semrec_model_build(ds, 0, 0, &mut model), SemrecStatus::Invalid);
        assert_eq!(semrec_model_build(ds, 2, 0, &mut model), SemrecStatus::Ok);
        let (mut t, mut id) = (ptr::null(), ptr::null());
        assert_eq!(semrec_model_entity(model, 99, &mut t, &mut id), SemrecStatus::Invalid);
        let mut s = 0.0;
        let (u, nobody) = (c("user"), c("u9"));
        assert_eq!(
            semrec_model_predict(model, u.as_ptr(), nobody.as_ptr(), u.as_ptr(), nobody.as_ptr(), &mut s),
            SemrecStatus::Invalid
        );
        semrec_model_free(model);
        semrec_dataset_free(ds);
        // Freeing null is a no-op.
        semrec_dataset_free(ptr::null_mut());
        semrec_model_free(ptr::null_mut());
        semrec_index_free(ptr::null_mut());
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(semrec_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/semrec.h")
}

#[test]
fn header_declares_every_export() {
    let h = std::fs::read_to_string(header()).unwrap();
    let src = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 12);
    for f in exports {
        assert!(h.contains(&format!("{f}(")), "{f} missing from header");
    }
}

/// Compiles and runs a C program against the header and the static
/// library, when a C compiler is available.
#[test]
fn c_program_links_and_runs() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let target = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = target.join("libsemrec_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let (schema, data) = toy(dir.path());
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "semrec.h"
int main(int argc, char **argv) {
    SemrecDataset *ds = NULL;
    SemrecModel *m = NULL;
    SemrecIndex *ix = NULL;
    if (semrec_dataset_load(argv[1], argv[2], &ds) != SEMREC_STATUS_OK) return 10;
    if (semrec_model_build(ds, 2, 1, &m) != SEMREC_STATUS_OK) return 11;
    if (semrec_index_build(m, 4, 4, 1, &ix) != SEMREC_STATUS_OK) return 12;
    size_t rows[3]; double scores[3]; size_t len = 0; bool trunc = false;
    if (semrec_index_query(ix, m, "user", "u1", 3, 3, rows, scores, &len, &trunc) != SEMREC_STATUS_OK) return 13;
    const char *t, *id;
    semrec_model_entity(m, rows[0], &t, &id);
    printf("%zu %s:%s\n", len, t, id);
    if (semrec_model_build(ds, 0, 1, &m) != SEMREC_STATUS_INVALID) return 14;
    if (semrec_last_error_message() == NULL) return 15;
    semrec_index_free(ix);
    semrec_model_free(m);
    semrec_dataset_free(ds);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("main");
    let status = std::process::Command::new(cc)
        .arg(&src)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = std::process::Command::new(&exe)
        .arg(schema.to_str().unwrap())
        .arg(data.to_str().unwrap())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("3 "));
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| std::process::Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
        .ok_or(())
}
