use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use fuseconv_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(fc_last_error()) }.to_string_lossy().into_owned()
}

fn builtin(name: &str) -> *mut FcNetwork {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { fc_network_builtin(c(name).as_ptr(), &mut h) }, FcStatus::Ok);
    assert!(!h.is_null());
    h
}

#[test]
fn counts_match_the_library() {
    let h = builtin("mobilenet-v2");
    let net = fuseconv::netmodel::builtin("mobilenet-v2").unwrap();
    let (mut macs, mut params, mut layers) = (0u64, 0u64, 0usize);
    unsafe {
        assert_eq!(fc_network_macs(h, &mut macs), FcStatus::Ok);
        assert_eq!(fc_network_params(h, &mut params), FcStatus::Ok);
        assert_eq!(fc_network_layer_count(h, &mut layers), FcStatus::Ok);
        fc_network_free(h);
    }
    assert_eq!(macs, net.total_macs().unwrap());
    assert_eq!(params, net.total_params().unwrap());
    assert_eq!(layers, net.layers.len());
    assert_eq!(last_error(), "");
}

#[test]
fn transform_and_estimate() {
    let base = builtin("mobilenet-v1");
    let mut half = ptr::null_mut();
    let (mut b, mut h, mut hs) = (0u64, 0u64, 0u64);
    unsafe {
        assert_eq!(fc_network_transform(base, FC_VARIANT_HALF, &mut half), FcStatus::Ok);
        assert_eq!(fc_estimate_cycles(base, 64, 64, FC_MODE_ANALYTICAL, 0, &mut b), FcStatus::Ok);
        assert_eq!(fc_estimate_cycles(half, 64, 64, FC_MODE_ANALYTICAL, 0, &mut h), FcStatus::Ok);
        assert_eq!(fc_estimate_cycles(half, 16, 16, FC_MODE_SIMULATE, 1, &mut hs), FcStatus::Ok);
        let mut h16 = 0u64;
        assert_eq!(fc_estimate_cycles(half, 16, 16, FC_MODE_ANALYTICAL, 1, &mut h16), FcStatus::Ok);
        assert_eq!(hs, h16);
        fc_network_free(half);
        fc_network_free(base);
    }
    assert!(h < b);
}

#[test]
fn errors_carry_status_and_message() {
    let mut h = ptr::null_mut();
    let mut v = 0u64;
    unsafe {
        assert_eq!(fc_network_builtin(c("resnet").as_ptr(), &mut h), FcStatus::NotFound);
        assert!(h.is_null());
        assert!(last_error().contains("resnet"));
        assert_eq!(fc_network_builtin(ptr::null(), &mut h), FcStatus::NullPointer);
        assert_eq!(fc_network_macs(ptr::null(), &mut v), FcStatus::NullPointer);

        let net = builtin("mobilenet-v1");
        assert_eq!(fc_network_builtin(c("mobilenet-v1").as_ptr(), ptr::null_mut()), FcStatus::NullPointer);
        assert_eq!(fc_network_transform(net, 99, &mut h), FcStatus::InvalidArgument);
        assert_eq!(fc_estimate_cycles(net, 0, 64, FC_MODE_ANALYTICAL, 0, &mut v), FcStatus::InvalidArgument);
        assert_eq!(fc_estimate_cycles(net, 8, 8, 7, 0, &mut v), FcStatus::InvalidArgument);
        let mut fused = ptr::null_mut();
        assert_eq!(fc_network_transform(net, FC_VARIANT_FULL, &mut fused), FcStatus::Ok);
        assert_eq!(fc_network_transform(fused, FC_VARIANT_FULL, &mut h), FcStatus::Transform);
        fc_network_free(fused);
        fc_network_free(net);
        fc_network_free(ptr::null_mut());

        let bad = [0xffu8, 0];
        assert_eq!(fc_network_load(bad.as_ptr().cast(), &mut h), FcStatus::InvalidUtf8);
        assert_eq!(fc_network_load(c("/no/such/file.net").as_ptr(), &mut h), FcStatus::Parse);
    }
}

#[test]
fn ria_entry_points() {
    let mut r = -1;
    unsafe {
        for (name, want) in [("matmul", 1), ("conv1d", 1), ("conv2d_im2col", 1), ("conv2d_direct", 0)] {
            assert_eq!(fc_ria_check_builtin(c(name).as_ptr(), &mut r), FcStatus::Ok);
            assert_eq!(r, want, "{name}");
        }
        assert_eq!(fc_ria_check(c("Y[i] = Y[i-1] + X[i]\n").as_ptr(), &mut r), FcStatus::Ok);
        assert_eq!(r, 1);
        assert_eq!(fc_ria_check(c("Y[i] = \n").as_ptr(), &mut r), FcStatus::Parse);
        assert!(last_error().starts_with("line 1"));
        assert_eq!(fc_ria_check_builtin(c("fft").as_ptr(), &mut r), FcStatus::NotFound);
    }
}

#[test]
fn load_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiny.net");
    std::fs::write(
        &path,
        "network, tiny\ninput, 8, 8, 4\nb0.dw, dwsep, 8, 8, 4, 3, 8, 1, 1\nhead, fc, 8, 8, 8, 1, 10, 1, 0\n",
    )
    .unwrap();
    let mut h = ptr::null_mut();
    let mut n = 0usize;
    unsafe {
        assert_eq!(fc_network_load(c(path.to_str().unwrap()).as_ptr(), &mut h), FcStatus::Ok, "{}", last_error());
        assert_eq!(fc_network_layer_count(h, &mut n), FcStatus::Ok);
        fc_network_free(h);
    }
    assert_eq!(n, 2);
}

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(manifest_dir().join("include/fuseconv.h")).unwrap();
    for sym in [
        "fc_last_error",
        "fc_network_builtin",
        "fc_network_load",
        "fc_network_transform",
        "fc_network_layer_count",
        "fc_network_macs",
        "fc_network_params",
        "fc_estimate_cycles",
        "fc_ria_check",
        "fc_ria_check_builtin",
        "fc_network_free",
        "typedef struct FcNetwork FcNetwork;",
        "FC_STATUS_OK = 0",
        "FC_VARIANT_HALF50 3",
    ] {
        assert!(header.contains(sym), "header lacks {sym}");
    }
}

/// Directory holding the library artifacts next to this test binary.
fn artifact_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_the_static_library() {
    let lib = artifact_dir().join("libfuseconv_ffi.a");
    assert!(lib.is_file(), "missing {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(manifest_dir().join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest_dir().join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("a C compiler named cc");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("layers=15 "), "{stdout}");
    assert!(stdout.contains("conv2d_ria=0"), "{stdout}");
}
