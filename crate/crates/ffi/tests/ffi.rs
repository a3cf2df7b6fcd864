use std::ffi::{c_char, CStr, CString};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use image::{Rgb, RgbImage};
use vwsd_core::backend::decode_image;
use vwsd_core::config::{ConfigSource, RunConfig};
use vwsd_core::dataset::{load_dataset, SplitName};
use vwsd_core::eval::evaluate;
use vwsd_core::pipeline::predict;
use vwsd_ffi::*;

const CONFIG: &str = "backend = \"mock\"\nmock_dim = 32\nmock_resolution = 32\naugmentation = \"single-view\"\ntiming = false\n";

fn images(dir: &Path, n: usize) -> Vec<PathBuf> {
    (0..n)
        .map(|i| {
            let path = dir.join(format!("img{i}.png"));
            RgbImage::from_fn(40, 40, |x, y| Rgb([(x * 6 + i as u32 * 20) as u8, (y * 5) as u8, (i * 23) as u8]))
                .save(&path)
                .unwrap();
            path
        })
        .collect()
}

fn pipeline() -> *mut VwsdPipeline {
    let cfg = CString::new(CONFIG).unwrap();
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { vwsd_pipeline_new_from_toml(cfg.as_ptr(), &mut p) }, VwsdStatus::Ok);
    assert!(!p.is_null());
    p
}

fn last_error() -> String {
    let p = vwsd_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn c_paths(paths: &[PathBuf]) -> (Vec<CString>, Vec<*const c_char>) {
    let owned: Vec<CString> = paths.iter().map(|p| CString::new(p.to_str().unwrap()).unwrap()).collect();
    let ptrs = owned.iter().map(|c| c.as_ptr()).collect();
    (owned, ptrs)
}

#[test]
fn predict_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let paths = images(dir.path(), 10);
    let (_owned, ptrs) = c_paths(&paths);
    let p = pipeline();
    let (word, phrase) = (CString::new("bank").unwrap(), CString::new("river bank").unwrap());
    let mut scores = [0.0f64; 10];
    let mut order = [0usize; 10];
    let st = unsafe {
        vwsd_predict(p, word.as_ptr(), phrase.as_ptr(), ptrs.as_ptr(), 10, scores.as_mut_ptr(), order.as_mut_ptr())
    };
    assert_eq!(st, VwsdStatus::Ok);
    assert!(vwsd_last_error_message().is_null());

    let run = ConfigSource::parse(CONFIG, Path::new("")).unwrap().build().unwrap();
    let imgs: Vec<_> = paths
        .iter()
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), decode_image(p).unwrap()))
        .collect();
    let want = predict(
        "bank",
        "river bank",
        &imgs,
        &run.pipeline,
        run.backend().unwrap().as_ref(),
        &run.resources().unwrap(),
    )
    .unwrap();
    assert_eq!(scores.to_vec(), want.scores);
    assert_eq!(order.to_vec(), want.order);
    unsafe { vwsd_pipeline_free(p) };
}

#[test]
fn wrong_candidate_count_and_nulls() {
    let dir = tempfile::tempdir().unwrap();
    let paths = images(dir.path(), 10);
    let (_owned, ptrs) = c_paths(&paths);
    let p = pipeline();
    let word = CString::new("bank").unwrap();
    let mut scores = [0.0f64; 10];
    let mut order = [0usize; 10];
    let st = unsafe {
        vwsd_predict(p, word.as_ptr(), word.as_ptr(), ptrs.as_ptr(), 9, scores.as_mut_ptr(), order.as_mut_ptr())
    };
    assert_eq!(st, VwsdStatus::CandidateCount);
    assert!(last_error().contains("10"));

    let st = unsafe {
        vwsd_predict(ptr::null(), word.as_ptr(), word.as_ptr(), ptrs.as_ptr(), 10, scores.as_mut_ptr(), order.as_mut_ptr())
    };
    assert_eq!(st, VwsdStatus::NullPointer);
    let st = unsafe { vwsd_predict(p, ptr::null(), word.as_ptr(), ptrs.as_ptr(), 10, scores.as_mut_ptr(), order.as_mut_ptr()) };
    assert_eq!(st, VwsdStatus::NullPointer);
    assert!(last_error().contains("word"));
    let st = unsafe { vwsd_predict(p, word.as_ptr(), word.as_ptr(), ptrs.as_ptr(), 10, ptr::null_mut(), order.as_mut_ptr()) };
    assert_eq!(st, VwsdStatus::NullPointer);
    assert_eq!(unsafe { vwsd_pipeline_new_from_toml(ptr::null(), ptr::null_mut()) }, VwsdStatus::NullPointer);
    unsafe {
        vwsd_pipeline_free(p);
        vwsd_pipeline_free(ptr::null_mut());
        vwsd_string_free(ptr::null_mut());
    }
}

#[test]
fn config_errors_are_reported() {
    let bad = CString::new("mystery_key = 1\n").unwrap();
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { vwsd_pipeline_new_from_toml(bad.as_ptr(), &mut p) }, VwsdStatus::Config);
    assert!(p.is_null());
    assert!(last_error().contains("mystery_key"));

    let invalid = [0xffu8, 0xfe, 0];
    let st = unsafe { vwsd_pipeline_new_from_toml(invalid.as_ptr().cast(), &mut p) };
    assert_eq!(st, VwsdStatus::InvalidUtf8);

    let missing = CString::new("/nonexistent/vwsd.toml").unwrap();
    let st = unsafe { vwsd_pipeline_new(missing.as_ptr(), &mut p) };
    assert_ne!(st, VwsdStatus::Ok);

    let st = unsafe { vwsd_pipeline_new(ptr::null(), &mut p) };
    assert_eq!(st, VwsdStatus::Ok, "defaults build a pipeline");
    unsafe { vwsd_pipeline_free(p) };
}

#[test]
fn evaluate_json_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let paths = images(dir.path(), 10);
    let names: Vec<String> = paths.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    let data = dir.path().join("data.tsv");
    let gold = dir.path().join("gold.txt");
    fs::write(
        &data,
        format!("bank\triver bank\t{}\nbass\tbass fish\t{}\n", names.join("\t"), names.join("\t")),
    )
    .unwrap();
    fs::write(&gold, format!("{}\n{}\n", names[3], names[7])).unwrap();

    let p = pipeline();
    let (cd, cg) = (CString::new(data.to_str().unwrap()).unwrap(), CString::new(gold.to_str().unwrap()).unwrap());
    let mut json: *mut c_char = ptr::null_mut();
    let st = unsafe { vwsd_evaluate_json(p, cd.as_ptr(), cg.as_ptr(), ptr::null(), &mut json) };
    assert_eq!(st, VwsdStatus::Ok, "{}", last_error());
    let got = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_string();
    unsafe { vwsd_string_free(json) };

    let run: RunConfig = ConfigSource::parse(CONFIG, Path::new("")).unwrap().build().unwrap();
    let set = load_dataset(&data, Some(&gold), dir.path(), SplitName::Custom).unwrap();
    let want = evaluate(&set, &run.pipeline, run.backend().unwrap().as_ref(), &run.resources().unwrap()).unwrap();
    assert_eq!(got, want.to_json().unwrap());

    let missing = CString::new(dir.path().join("none.txt").to_str().unwrap()).unwrap();
    let st = unsafe { vwsd_evaluate_json(p, cd.as_ptr(), missing.as_ptr(), ptr::null(), &mut json) };
    assert_ne!(st, VwsdStatus::Ok);
    assert!(json.is_null());
    unsafe { vwsd_pipeline_free(p) };
}

#[test]
fn metrics() {
    let ranks = [1usize, 2, 4, 1];
    let mut out = 0.0;
    assert_eq!(unsafe { vwsd_compute_mrr(ranks.as_ptr(), 4, &mut out) }, VwsdStatus::Ok);
    assert_eq!(out, (1.0 + 0.5 + 0.25 + 1.0) / 4.0);
    assert_eq!(unsafe { vwsd_compute_hit_rate(ranks.as_ptr(), 4, &mut out) }, VwsdStatus::Ok);
    assert_eq!(out, 0.5);
    let bad = [0usize];
    assert_ne!(unsafe { vwsd_compute_mrr(bad.as_ptr(), 1, &mut out) }, VwsdStatus::Ok);
    assert_ne!(unsafe { vwsd_compute_mrr(ranks.as_ptr(), 0, &mut out) }, VwsdStatus::Ok);
    assert_eq!(unsafe { vwsd_compute_mrr(ptr::null(), 4, &mut out) }, VwsdStatus::NullPointer);
    assert_eq!(vwsd_candidate_count(), 10);
}

fn header() -> String {
    fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/vwsd.h")).unwrap()
}

#[test]
fn header_declares_every_export() {
    let h = header();
    for sym in [
        "vwsd_pipeline_new(",
        "vwsd_pipeline_new_from_toml(",
        "vwsd_pipeline_free(",
        "vwsd_predict(",
        "vwsd_evaluate_json(",
        "vwsd_compute_mrr(",
        "vwsd_compute_hit_rate(",
        "vwsd_last_error_message(",
        "vwsd_string_free(",
        "vwsd_candidate_count(",
        "typedef struct VwsdPipeline VwsdPipeline;",
        "VWSD_STATUS_PANIC = 10",
    ] {
        assert!(h.contains(sym), "header lacks {sym}");
    }
}

/// Compiles the C smoke program against the shared library and checks it
/// sees the same ranking as Rust.
#[test]
fn c_program_links_and_runs() {
    let exe = std::env::current_exe().unwrap();
    let lib_dir = exe.parent().unwrap().parent().unwrap().to_path_buf();
    let so = lib_dir.join(if cfg!(target_os = "macos") { "libvwsd_ffi.dylib" } else { "libvwsd_ffi.so" });
    assert!(so.is_file(), "{} not built", so.display());
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(&cc)
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg(format!("-I{}", manifest.join("include").display()))
        .arg(format!("-L{}", lib_dir.display()))
        .arg("-lvwsd_ffi")
        .arg(format!("-Wl,-rpath,{}", lib_dir.display()))
        .arg("-o")
        .arg(&bin)
        .status()
        .expect("running the C compiler");
    assert!(status.success());

    let paths = images(dir.path(), 10);
    let out = Command::new(&bin).args(&paths).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 11);
    assert_eq!(lines[10], format!("short={}", VwsdStatus::CandidateCount as i32));

    let (_owned, ptrs) = c_paths(&paths);
    let p = pipeline();
    let (w, ph) = (CString::new("bank").unwrap(), CString::new("river bank").unwrap());
    let mut scores = [0.0f64; 10];
    let mut order = [0usize; 10];
    unsafe { vwsd_predict(p, w.as_ptr(), ph.as_ptr(), ptrs.as_ptr(), 10, scores.as_mut_ptr(), order.as_mut_ptr()) };
    unsafe { vwsd_pipeline_free(p) };
    for (k, l) in lines[..10].iter().enumerate() {
        let mut parts = l.split(' ');
        let idx: usize = parts.next().unwrap().parse().unwrap();
        let score: f64 = parts.next().unwrap().parse().unwrap();
        assert_eq!(idx, order[k]);
        assert_eq!(score, scores[idx]);
    }
}
