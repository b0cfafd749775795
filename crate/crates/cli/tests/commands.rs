use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pwconvex"))
}

fn run(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Sine data with a deterministic pseudo-noise term.
fn write_data(dir: &Path, n: usize, noise: f64) -> PathBuf {
    let mut s = String::from("t,y\n");
    let mut state = 12345u64;
    for i in 0..n {
        let t = (i as f64 + 0.5) / n as f64;
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let u = (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
        s.push_str(&format!("{t},{}\n", (std::f64::consts::TAU * t).sin() + noise * u));
    }
    let p = dir.join("data.csv");
    fs::write(&p, s).unwrap();
    p
}

fn header(text: &str) -> &str {
    text.lines().next().unwrap()
}

#[test]
fn discrepancy_of_midpoints() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("points.csv");
    fs::write(&p, "t\n0.875\n0.125\n0.375\n0.625\n").unwrap();
    let text = stdout(&run(&["discrepancy", "--input", p.to_str().unwrap()]));
    assert_eq!(header(&text), "d_star,delta_bar,delta_min");
    let v: Vec<f64> = text.lines().nth(1).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert!((v[0] - 0.125).abs() < 1e-15);
    assert!((v[1] - 0.25).abs() < 1e-15 && (v[2] - 0.25).abs() < 1e-15);
}

#[test]
fn ksmooth_estimates_the_slope() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), 400, 0.0);
    let text = stdout(&run(&[
        "ksmooth",
        "--input",
        data.to_str().unwrap(),
        "--ell",
        "1",
        "--deriv",
        "1",
        "--h",
        "0.1",
        "--grid",
        "9",
    ]));
    assert_eq!(header(&text), "t,estimate");
    let rows: Vec<(f64, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 9);
    let tau = std::f64::consts::TAU;
    for (t, e) in rows {
        assert!((e - tau * (tau * t).cos()).abs() < 0.3, "t={t}: {e}");
    }
}

#[test]
fn changepoints_report_columns() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), 600, 0.1);
    let text = stdout(&run(&["changepoints", "--input", data.to_str().unwrap(), "--ell", "1", "--h", "0.15"]));
    assert_eq!(header(&text), "x_hat,sign,sigma_if,lo,hi,cluster,parity");
    let xs: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(xs.len(), 2);
    assert!((xs[0] - 0.25).abs() < 0.03 && (xs[1] - 0.75).abs() < 0.03);
}

#[test]
fn fit_with_automatic_lambda() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), 200, 0.2);
    let out = dir.path().join("fit.csv");
    let text = stdout(&run(&[
        "fit",
        "--input",
        data.to_str().unwrap(),
        "--m",
        "2",
        "--lambda",
        "auto",
        "--grid",
        "101",
        "--sigma",
        "0.1",
        "--output",
        out.to_str().unwrap(),
    ]));
    assert_eq!(header(&text), "lambda_star,p_eff,gcv_score");
    let fit = fs::read_to_string(&out).unwrap();
    assert_eq!(header(&fit), "t,fhat,d1,d2");
    assert_eq!(fit.lines().count(), 102);

    // without a file the fit goes to stdout and the summary to stderr
    let o = run(&["fit", "--input", data.to_str().unwrap(), "--lambda", "auto", "--grid", "101", "--sigma", "0.1"]);
    assert_eq!(header(&stdout(&o)), "t,fhat,d1,d2");
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("lambda_star,p_eff,gcv_score"));
}

#[test]
fn cfit_respects_constraints() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), 200, 0.3);
    let cons = dir.path().join("constraints.csv");
    fs::write(&cons, "deriv,lo,hi,sign\n2,0.05,0.45,-1\n2,0.55,0.95,1\n").unwrap();
    let out = dir.path().join("fit.csv");
    let text = stdout(&run(&[
        "cfit",
        "--input",
        data.to_str().unwrap(),
        "--m",
        "3",
        "--lambda",
        "1e-5",
        "--sigma",
        "0.1",
        "--grid",
        "201",
        "--constraints",
        cons.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
    ]));
    assert_eq!(header(&text), "p_eff,active,iterations,kkt_residual");
    let fit = fs::read_to_string(&out).unwrap();
    assert_eq!(header(&fit), "t,fhat,d1,d2,d3");
    let rows: Vec<Vec<f64>> = fit.lines().skip(1).map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    for r in &rows {
        // interpolated second differences, away from the interval ends
        if r[0] > 0.07 && r[0] < 0.43 {
            assert!(r[3] <= 1e-3, "t={} d2={}", r[0], r[3]);
        }
        if r[0] > 0.57 && r[0] < 0.93 {
            assert!(r[3] >= -1e-3, "t={} d2={}", r[0], r[3]);
        }
    }
}

#[test]
fn cfit_rejects_bad_signs() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), 50, 0.1);
    let cons = dir.path().join("constraints.csv");
    fs::write(&cons, "deriv,lo,hi,sign\n2,0.1,0.4,2\n").unwrap();
    let o = bin()
        .args(["cfit", "--input", data.to_str().unwrap(), "--lambda", "1e-4", "--constraints", cons.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("sign must be +1 or -1"));
}

#[test]
fn pilot_writes_fit_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), 500, 0.3);
    let out = dir.path().join("fit.csv");
    let diag = dir.path().join("diag.csv");
    run(&[
        "pilot",
        "--input",
        data.to_str().unwrap(),
        "--ell",
        "1",
        "--sigma",
        "0.087",
        "--output",
        out.to_str().unwrap(),
        "--diag",
        diag.to_str().unwrap(),
    ]);
    assert_eq!(header(&fs::read_to_string(&out).unwrap()), "t,fhat,d1,d2");
    let d = fs::read_to_string(&diag).unwrap();
    assert_eq!(header(&d), "x_hat,sigma_if,lo,hi,sign,parity");
    let signs: Vec<&str> = d.lines().skip(1).map(|l| l.split(',').nth(4).unwrap()).collect();
    assert_eq!(signs, ["-1", "1"]);
}

#[test]
fn select_prints_table_and_winner() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), 300, 0.2);
    let text =
        stdout(&run(&["select", "--input", data.to_str().unwrap(), "--ell", "1", "--kmax", "3", "--sigma", "0.06"]));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "K,p,sigma_hat2,pcic");
    // no bandwidth in the shrink sequence finds a third sign change, so K stops at 2
    assert_eq!(lines.len(), 1 + 3 + 1);
    assert!(lines[4].starts_with("winner,K=2,"), "{}", lines[4]);
}

#[test]
fn simulate_is_reproducible_and_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.txt");
    fs::write(
        &cfg,
        "truth = sine\nfreq = 1\nell = 1\nm = 2\nsigma = 0.3\ndesign = equispaced\nN = 100, 200\nreplicates = 3\nseed = 9\nestimator = spline\nwidth_rule = sigma:3\nalpha = 0.05\n",
    )
    .unwrap();
    let (a, b, curves) = (dir.path().join("a.csv"), dir.path().join("b.csv"), dir.path().join("curves.csv"));
    run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        a.to_str().unwrap(),
        "--emit-curves",
        curves.to_str().unwrap(),
    ]);
    run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    let report = fs::read_to_string(&a).unwrap();
    assert_eq!(report, fs::read_to_string(&b).unwrap());
    assert!(report.starts_with("# config_hash="));
    assert_eq!(report.lines().count(), 2 + 2);
    assert_eq!(header(&fs::read_to_string(&curves).unwrap()), "N,t,fhat_mean,fhat_lo,fhat_hi");

    fs::write(&cfg, "truth = sine\nN = 100\nlambda = 3\n").unwrap();
    let o = bin().args(["simulate", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]).output().unwrap();
    assert!(!o.status.success());
}
