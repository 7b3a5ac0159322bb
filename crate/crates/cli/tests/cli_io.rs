use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as Process;

use clap::Parser;
use cssa::cdl::init_dictionary;
use cssa::{Dictionary, DictionarySet, Plane, RgbImage};
use cssa_cli::dictfile::{load_dict, save_dict, HEADER_LEN};
use cssa_cli::image_io::load_luma;
use cssa_cli::{load_image, run, save_image, Cli, CliError, ErrorClass, Image};
use ndarray::Array2;
use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn cli(args: &[&str]) -> Cli {
    Cli::try_parse_from(std::iter::once("cssa").chain(args.iter().copied())).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn levels(h: usize, w: usize, offset: usize) -> Plane {
    Plane::from_shape_fn((h, w), |(i, j)| ((i * 37 + j * 11 + offset) % 256) as f64 / 255.0)
}

#[test]
fn eight_bit_files_round_trip_exactly() {
    let dir = TempDir::new().unwrap();
    let gray = Image::Gray(levels(9, 13, 0));
    let rgb = Image::Rgb(RgbImage::new(levels(9, 13, 1), levels(9, 13, 50), levels(9, 13, 200)).unwrap());
    for (img, ext) in [(&gray, "png"), (&gray, "pgm"), (&rgb, "png"), (&rgb, "ppm")] {
        let path = dir.path().join(format!("a.{ext}"));
        save_image(img, &path).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(&back, img, "{ext}");
        let again = dir.path().join(format!("b.{ext}"));
        save_image(&back, &again).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&again).unwrap());
    }
}

#[test]
fn sixteen_bit_input_is_normalized_by_65535() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("deep.png");
    let buf = image::ImageBuffer::<image::Luma<u16>, _>::from_fn(4, 3, |x, y| image::Luma([(x * 1000 + y * 20000) as u16]));
    buf.save(&path).unwrap();
    match load_image(&path).unwrap() {
        Image::Gray(p) => {
            assert_eq!(p.dim(), (3, 4));
            assert_eq!(p[[2, 3]], 43000.0 / 65535.0);
        }
        other => panic!("expected a grayscale plane, got {other:?}"),
    }
}

#[test]
fn channel_count_selects_the_image_kind() {
    assert!(matches!(load_image(fixture("nir_crop0.png")).unwrap(), Image::Gray(_)));
    assert!(matches!(load_image(fixture("vl_crop0.png")).unwrap(), Image::Rgb(_)));
    let err = load_image(fixture("missing.png")).unwrap_err();
    assert_eq!(err.class(), ErrorClass::Io);
}

#[test]
fn dictionary_files_round_trip_and_have_the_documented_size() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("d.cssd");
    let set = DictionarySet::new(vec![init_dictionary(32, 8, 1).unwrap(), init_dictionary(32, 8, 2).unwrap()]).unwrap();
    save_dict(&set, &path).unwrap();
    let bytes = fs::read(&path).unwrap();
    assert_eq!(bytes.len(), HEADER_LEN + 2 * 32 * 64 * 8);
    assert_eq!(HEADER_LEN, 18);
    let back = load_dict(&path).unwrap();
    assert_eq!(back, set);
    save_dict(&back, &path).unwrap();
    assert_eq!(fs::read(&path).unwrap(), bytes);

    let mut bad = bytes.clone();
    bad[..4].copy_from_slice(b"NOPE");
    fs::write(&path, &bad).unwrap();
    let err = load_dict(&path).unwrap_err();
    assert!(matches!(err, CliError::DictFormat { .. }));
    assert!(err.to_string().contains("CSSD"));
}

fn impulse_dict(dir: &Path) -> PathBuf {
    let path = dir.join("impulse.cssd");
    let d = Dictionary::new(vec![Array2::from_elem((1, 1), 1.0)]).unwrap();
    save_dict(&DictionarySet::single(d), &path).unwrap();
    path
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn unregularized_encode_with_impulse_dictionary_is_exact() {
    let dir = TempDir::new().unwrap();
    let dict = impulse_dict(dir.path());
    let out = dir.path().join("enc.csv");
    let recon = dir.path().join("recon.png");
    let nir = fixture("nir_crop1.png");
    run(&cli(&[
        "encode", s(&nir), "--dict", s(&dict), "--structure", "l1", "--lambda", "0", "--raw", "--tol", "1e-8",
        "--out", s(&out), "--recon", s(&recon),
    ]))
    .unwrap();
    let (header, rows) = read_csv(&out);
    let col = header.iter().position(|h| h == "approx_error").unwrap();
    let err: f64 = rows[0][col].parse().unwrap();
    assert!(err < 1e-6, "approx_error {err}");
    assert_eq!(load_image(&recon).unwrap(), load_image(&nir).unwrap());
}

#[test]
fn l21_sweep_reports_full_common_support() {
    let dir = TempDir::new().unwrap();
    let dict = dir.path().join("d.cssd");
    save_dict(&DictionarySet::single(init_dictionary(8, 8, 3).unwrap()), &dict).unwrap();
    let out = dir.path().join("t1.csv");
    run(&cli(&[
        "report-table1", s(&fixture("vl_crop2.png")), s(&fixture("nir_crop2.png")), "--dict", s(&dict),
        "--structures", "l21", "--out", s(&out),
    ]))
    .unwrap();
    let (header, rows) = read_csv(&out);
    assert_eq!(
        header,
        ["structure", "lambda", "gamma1", "gamma2", "sparsity", "common_support_pct", "approx_error", "iterations"]
    );
    assert_eq!(rows.len(), 5);
    for r in &rows {
        assert_eq!(r.len(), 8);
        assert_eq!(r[0], "l21");
        assert_eq!(r[5].parse::<f64>().unwrap(), 100.0);
    }
}

#[test]
fn metrics_of_identical_files_report_inf_psnr() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("m.csv");
    let a = fixture("nir_crop3.png");
    run(&cli(&["metrics", "--fused", s(&a), s(&a), s(&a), "--out", s(&out)])).unwrap();
    let (header, rows) = read_csv(&out);
    assert_eq!(header, ["image", "en", "psnr", "ssim", "sf", "ei"]);
    assert_eq!(rows[0][2], "inf");
    assert_eq!(rows[0][3].parse::<f64>().unwrap(), 1.0);
}

#[test]
fn fusion_commands_write_images_and_reports() {
    let dir = TempDir::new().unwrap();
    let dict2 = dir.path().join("d2.cssd");
    save_dict(
        &DictionarySet::new(vec![init_dictionary(4, 6, 1).unwrap(), init_dictionary(4, 6, 2).unwrap()]).unwrap(),
        &dict2,
    )
    .unwrap();
    let fused = dir.path().join("f.png");
    let rep = dir.path().join("f.csv");
    run(&cli(&[
        "fuse-nirvl", "--vl", s(&fixture("vl_crop4.png")), "--nir", s(&fixture("nir_crop4.png")),
        "--dict", s(&dict2), "--out", s(&fused), "--report", s(&rep), "--max-iter", "30",
    ]))
    .unwrap();
    assert!(matches!(load_image(&fused).unwrap(), Image::Rgb(_)));
    let (_, rows) = read_csv(&rep);
    assert!(rows[0][1..].iter().all(|v| v.parse::<f64>().unwrap().is_finite()));

    let mf = dir.path().join("mf.png");
    let a = fixture("nir_crop0.png");
    let b = fixture("nir_crop1.png");
    run(&cli(&["fuse-mf", s(&a), s(&b), "--dict", s(&dict2), "--out", s(&mf), "--report", s(&rep), "--max-iter", "30"]))
        .unwrap();
    assert_eq!(load_luma(&mf).unwrap().dim(), (64, 64));
}

fn exit_code(args: &[&str]) -> (i32, String) {
    let out = Process::new(env!("CARGO_BIN_EXE_cssa")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stderr).unwrap())
}

#[test]
fn failures_exit_nonzero_with_one_line() {
    let dir = TempDir::new().unwrap();
    let dict = impulse_dict(dir.path());
    let missing = dir.path().join("nothing.png");

    let (code, err) = exit_code(&["metrics", "--fused", s(&missing), s(&missing)]);
    assert_eq!(code, 3);
    assert_eq!(err.lines().count(), 1, "{err}");

    let (code, err) = exit_code(&["metrics", "--fused", s(&fixture("nir_crop0.png")), s(&fixture("nir_256.png"))]);
    assert_eq!(code, 4);
    assert_eq!(err.lines().count(), 1, "{err}");

    let (code, err) = exit_code(&["encode", s(&fixture("nir_crop0.png")), "--dict", s(&dict), "--rho=-1"]);
    assert_eq!(code, 2);
    assert_eq!(err.lines().count(), 1, "{err}");
}
