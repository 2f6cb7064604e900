use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use atomlift::cli::{RunReport, EXIT_USAGE};
use atomlift::io::write_png;
use atomlift::Image;

fn atomlift(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_atomlift")).args(args).output().expect("spawn atomlift")
}

fn small_input(dir: &Path) -> PathBuf {
    let img = Image::<f64>::from_fn(30, 30, |i, j| if (i / 5 + j / 5) % 2 == 0 { 0.8 } else { 0.2 });
    let path = dir.join("in.png");
    write_png(&path, &img).unwrap();
    path
}

fn report(dir: &Path) -> RunReport {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn gen_writes_scene_and_sidecar() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("scene");
    let o = atomlift(&["gen", "--scene", "patches", "--seed", "3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    for f in ["scene.png", "cartoon.png", "texture.png", "atoms.png", "scene.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
}

#[test]
fn decompose_writes_outputs_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let input = small_input(tmp.path());
    let out = tmp.path().join("out");
    let o = atomlift(&["decompose", "--input", input.to_str().unwrap(), "--iterations", "20", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["recon.png", "cartoon.png", "texture.png", "atoms.png", "report.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let r = report(&out);
    assert_eq!(r.iterations, 20);
    assert_eq!(r.parameters.nu, 0.95);
    assert!(r.parameters.moment);
    assert!(r.moment_residual <= 1e-4);
    assert!(r.feasibility.worst() <= 1e-9);
}

#[test]
fn denoise_with_noise_reports_psnr() {
    let tmp = tempfile::tempdir().unwrap();
    let input = small_input(tmp.path());
    let out = tmp.path().join("out");
    let o = atomlift(&[
        "denoise", "--input", input.to_str().unwrap(), "--noise", "0.1", "--variant", "tgv", "--iterations", "50", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert!(r.psnr.is_some() && r.psnr_observed.is_some());
    assert_eq!(r.parameters.lambda, Some(10.0));
    assert!(out.join("observed.png").is_file());
}

#[test]
fn usage_errors_exit_with_usage_code() {
    let tmp = tempfile::tempdir().unwrap();
    let input = small_input(tmp.path());
    let input = input.to_str().unwrap();
    let out = tmp.path().join("out");
    let out = out.to_str().unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["decompose", "--input", input, "--eta", "4", "--out", out],
        vec!["inpaint", "--input", input, "--out", out],
        vec!["deconv", "--input", input, "--variant", "ct-scvx", "--out", out],
        vec!["denoise", "--input", input, "--nu", "1.0", "--out", out],
        vec!["denoise", "--input", input, "--step-factor", "1.5", "--out", out],
        vec!["denoise", "--input", input, "--relaxation", "2.5", "--out", out],
        vec!["inpaint", "--input", input, "--keep", "1.5", "--out", out],
        vec!["decompose", "--input", input, "--variant", "tgv", "--phi", "semiconvex", "--out", out],
    ];
    for args in cases {
        let o = atomlift(&args);
        assert_eq!(o.status.code(), Some(EXIT_USAGE), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stderr).contains("--"), "{args:?}");
    }
    assert!(!Path::new(out).join("report.json").exists());
}

#[test]
fn missing_input_fails() {
    let o = atomlift(&["denoise", "--input", "/nonexistent/x.png"]);
    assert!(!o.status.success());
}

#[test]
fn selftest_passes() {
    let o = atomlift(&["selftest", "--pairs", "5"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.lines().count() >= 8 && !text.contains("FAIL"), "{text}");
}
