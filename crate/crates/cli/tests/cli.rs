use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn despeckle(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_despeckle"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).trim().to_string()
}

fn write_p5(path: &Path, w: usize, h: usize, px: impl Fn(usize, usize) -> u8) {
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    for i in 0..h {
        for j in 0..w {
            bytes.push(px(i, j));
        }
    }
    fs::write(path, bytes).unwrap();
}

fn gradient_image(dir: &TempDir) -> PathBuf {
    let p = dir.path().join("clean.pgm");
    write_p5(&p, 32, 24, |i, j| (40 + 5 * i + 3 * j) as u8);
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn add_noise_with_huge_shape_is_nearly_clean_and_deterministic() {
    let dir = TempDir::new().unwrap();
    let clean = gradient_image(&dir);
    let a = dir.path().join("a.pgm");
    let b = dir.path().join("b.pgm");
    let out = despeckle(&["add-noise", s(&clean), s(&a), "--M", "1e6", "--seed", "5"]);
    assert!(out.status.success());
    let db: f64 = stdout(&out).parse().unwrap_or(f64::INFINITY);
    assert!(db > 55.0, "{db}");
    assert!(despeckle(&["add-noise", s(&clean), s(&b), "--M", "1e6", "--seed", "5"]).status.success());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn add_noise_on_cameraman_lands_in_expected_band() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let data = std::env::var_os("DESPECKLE_DATA").map(PathBuf::from).unwrap_or(root.join("data"));
    let cam = data.join("cameraman.pgm");
    if !cam.exists() {
        eprintln!("skipping: {} missing", cam.display());
        return;
    }
    let dir = TempDir::new().unwrap();
    let noisy = dir.path().join("noisy.pgm");
    let out = despeckle(&["add-noise", s(&cam), s(&noisy), "--M", "8", "--seed", "1"]);
    assert!(out.status.success());
    let db: f64 = stdout(&out).parse().unwrap();
    assert!((13.0..16.0).contains(&db), "{db}");
}

#[test]
fn psnr_command_formats() {
    let dir = TempDir::new().unwrap();
    let black = dir.path().join("black.pgm");
    let white = dir.path().join("white.pgm");
    write_p5(&black, 4, 3, |_, _| 0);
    write_p5(&white, 4, 3, |_, _| 255);
    assert_eq!(stdout(&despeckle(&["psnr", s(&black), s(&black)])), "identical");
    assert_eq!(stdout(&despeckle(&["psnr", s(&black), s(&white)])), "0.00");
}

#[test]
fn empty_case_file_writes_only_the_header() {
    let dir = TempDir::new().unwrap();
    let cases = dir.path().join("empty.cases");
    fs::write(&cases, "# nothing here\n\n").unwrap();
    let csv = dir.path().join("out.csv");
    let out = despeckle(&["bench", s(&cases), "--out", s(&csv)]);
    assert!(out.status.success());
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1);
    assert!(lines[0].starts_with("id,solver,model,M,seed,psnr,iterations"));
}

#[test]
fn strict_flag_reports_max_iter_stop() {
    let dir = TempDir::new().unwrap();
    let clean = gradient_image(&dir);
    let noisy = dir.path().join("noisy.pgm");
    let out_img = dir.path().join("out.pgm");
    assert!(despeckle(&["add-noise", s(&clean), s(&noisy), "--M", "4"]).status.success());
    let args = ["denoise", s(&noisy), s(&out_img), "--M", "4", "--max-iter", "1"];
    let loose = despeckle(&args);
    assert_eq!(loose.status.code(), Some(0));
    let mut strict = args.to_vec();
    strict.push("--strict");
    assert_eq!(despeckle(&strict).status.code(), Some(2));
}

#[test]
fn denoise_writes_trace_and_metrics() {
    let dir = TempDir::new().unwrap();
    let clean = gradient_image(&dir);
    let noisy = dir.path().join("noisy.pgm");
    let out_img = dir.path().join("out.pgm");
    let trace = dir.path().join("trace.csv");
    assert!(despeckle(&["add-noise", s(&clean), s(&noisy), "--M", "10"]).status.success());
    let out = despeckle(&[
        "denoise",
        s(&noisy),
        s(&out_img),
        "--M",
        "10",
        "--solver",
        "ldp-ladm",
        "--window",
        "5",
        "--reference",
        s(&clean),
        "--trace",
        s(&trace),
        "--header",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("id,solver"));
    assert!(lines.next().unwrap().starts_with("noisy,"));
    let trace = fs::read_to_string(&trace).unwrap();
    assert_eq!(trace.lines().next().unwrap(), "k,tau,rel_err,psnr,discrepancy,delta");
    assert!(trace.lines().count() > 2);
    assert!(out_img.exists());
}

#[test]
fn bad_arguments_fail() {
    let dir = TempDir::new().unwrap();
    let clean = gradient_image(&dir);
    let out = dir.path().join("o.pgm");
    assert!(!despeckle(&["denoise", s(&clean), s(&out), "--M", "4", "--window", "4"]).status.success());
    assert!(!despeckle(&["denoise", s(&clean), s(&out), "--M", "4", "--cbar", "bogus"]).status.success());
    assert!(!despeckle(&["add-noise", s(&clean), s(&out), "--M", "-1"]).status.success());
}
