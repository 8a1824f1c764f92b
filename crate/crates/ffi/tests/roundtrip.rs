use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use txfidelity::groundtruth::{generate_ground_truth_rows, ground_truth_schema};
use txfidelity_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(txf_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn baseline_and_evaluate_through_handles() {
    let dir = tempfile::tempdir().unwrap();
    let real_path = dir.path().join("real.csv");
    generate_ground_truth_rows(6000, 1).unwrap().write_csv(&real_path, &[]).unwrap();
    let schema_text = c(&ground_truth_schema().to_config_string());
    let real_c = c(real_path.to_str().unwrap());

    unsafe {
        let mut schema = ptr::null_mut();
        assert_eq!(txf_schema_parse(schema_text.as_ptr(), &mut schema), TxfStatus::Ok);
        let mut real = ptr::null_mut();
        assert_eq!(txf_table_load(real_c.as_ptr(), schema, &mut real), TxfStatus::Ok, "{}", last_error());
        assert!(txf_table_n_rows(real) > 5000);
        assert!(txf_table_has_entities(real));

        let mut base = ptr::null_mut();
        assert_eq!(txf_baseline_compute(real, 42, &mut base), TxfStatus::Ok, "{}", last_error());
        let base_path = c(dir.path().join("base.json").to_str().unwrap());
        assert_eq!(txf_baseline_save(base, base_path.as_ptr()), TxfStatus::Ok);
        let mut reloaded = ptr::null_mut();
        assert_eq!(txf_baseline_load(base_path.as_ptr(), &mut reloaded), TxfStatus::Ok);
        let (mut j1, mut j2): (*mut c_char, *mut c_char) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(txf_baseline_to_json(base, &mut j1), TxfStatus::Ok);
        assert_eq!(txf_baseline_to_json(reloaded, &mut j2), TxfStatus::Ok);
        assert_eq!(CStr::from_ptr(j1), CStr::from_ptr(j2));
        txf_string_free(j1);
        txf_string_free(j2);

        let mut syn = ptr::null_mut();
        assert_eq!(txf_oracle_generate(real, txf_table_n_rows(real), 3, &mut syn), TxfStatus::Ok);
        assert!(!txf_table_has_entities(syn));
        let mut report = ptr::null_mut();
        assert_eq!(txf_evaluate(real, syn, base, &mut report), TxfStatus::Incompatible);
        assert!(last_error().contains("entity column"));

        let mut labeled = ptr::null_mut();
        assert_eq!(txf_assign_entities(syn, real, 42, false, &mut labeled), TxfStatus::Ok, "{}", last_error());
        assert_eq!(txf_evaluate(real, labeled, base, &mut report), TxfStatus::Ok, "{}", last_error());
        let mut comp = 0.0;
        assert_eq!(txf_report_composite(report, &mut comp), TxfStatus::Ok);
        assert!(comp > 3.0, "composite {comp}");
        let mut ratio = 0.0;
        let id = c("p1_autocorr_gap");
        assert_eq!(txf_report_ratio(report, id.as_ptr(), &mut ratio), TxfStatus::Ok);
        assert!(ratio > 1.0);
        let bad = c("p9_nothing");
        assert_eq!(txf_report_ratio(report, bad.as_ptr(), &mut ratio), TxfStatus::Usage);
        let mut json = ptr::null_mut();
        assert_eq!(txf_report_to_json(report, &mut json), TxfStatus::Ok);
        assert!(CStr::from_ptr(json).to_str().unwrap().contains("\"composite\""));
        txf_string_free(json);

        // a different real table does not match the baseline
        let other_path = dir.path().join("other.csv");
        generate_ground_truth_rows(6000, 2).unwrap().write_csv(&other_path, &[]).unwrap();
        let other_c = c(other_path.to_str().unwrap());
        let mut other = ptr::null_mut();
        assert_eq!(txf_table_load(other_c.as_ptr(), schema, &mut other), TxfStatus::Ok);
        let mut r2 = ptr::null_mut();
        assert_eq!(txf_evaluate(other, labeled, base, &mut r2), TxfStatus::FingerprintMismatch);
        assert!(r2.is_null());

        txf_report_free(report);
        txf_table_free(other);
        txf_table_free(labeled);
        txf_table_free(syn);
        txf_baseline_free(reloaded);
        txf_baseline_free(base);
        txf_table_free(real);
        txf_schema_free(schema);
    }
}

#[test]
fn missing_file_is_usage_error() {
    let path = c("/nonexistent/real.csv");
    let text = c("timestamp_col = ts\nclass_col = y\n");
    unsafe {
        let mut schema = ptr::null_mut();
        assert_eq!(txf_schema_parse(text.as_ptr(), &mut schema), TxfStatus::Ok);
        let mut t = ptr::null_mut();
        assert_eq!(txf_table_load(path.as_ptr(), schema, &mut t), TxfStatus::Usage);
        assert!(last_error().contains("/nonexistent/real.csv"));
        assert!(t.is_null());
        txf_schema_free(schema);
        // freeing null is a no-op
        txf_table_free(ptr::null_mut());
        txf_string_free(ptr::null_mut());
    }
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(txf_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export_and_compiles_as_c() {
    let header_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/txfidelity.h");
    let header = std::fs::read_to_string(&header_path).unwrap();
    let src = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() > 20);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    // syntax check with the system C compiler when one is present
    let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"]).arg(&header_path).output()
    else {
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
