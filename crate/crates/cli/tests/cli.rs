use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn phonocorr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phonocorr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn listing(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .map(|r| {
            r.map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
                .collect()
        })
        .unwrap_or_default();
    v.sort();
    v
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn analytic_writes_tables_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let o = phonocorr(&["analytic", "--out", &out_arg(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        listing(&out),
        [
            "conditional.csv",
            "manifest.toml",
            "mode_count.csv",
            "sweep.csv"
        ]
    );
    let sweep = read(&out, "sweep.csv");
    assert!(sweep.starts_with("p_bar,q_a,q_b,eta_a,eta_b,g_ab,g_aa_cond_bound\n"));
    assert_eq!(sweep.lines().count(), 37);
    let modes = read(&out, "mode_count.csv");
    assert!(modes.starts_with("modes,g_aa,one_plus_inverse_modes\n"));
    for line in modes.lines().skip(1) {
        let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!((f[1] - f[2]).abs() < 1e-2);
    }
    let manifest = read(&out, "manifest.toml");
    assert!(manifest.contains("# command: analytic\n"));
    assert!(manifest.contains("[analytic.sweep]"));
}

#[test]
fn manifest_replays_the_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "c.toml", "seed = 4\n[counts]\nn_reps = 3000000\n[counts.clicks]\np_s = 0.01\np_as = 0.01\np_joint = 0.001\n");
    let first = tmp.path().join("a");
    let o = phonocorr(&[
        "counts",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        &out_arg(&first),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let second = tmp.path().join("b");
    let manifest = first.join("manifest.toml");
    let o = phonocorr(&[
        "counts",
        "--config",
        manifest.to_str().unwrap(),
        "--out",
        &out_arg(&second),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["histogram.csv", "g2.csv"] {
        assert_eq!(read(&first, f), read(&second, f));
    }
}

#[test]
fn counts_are_deterministic_across_threads_and_seeded() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        &tmp,
        "c.toml",
        "[counts]\nn_reps = 20000000\nwrite_events = true\n[counts.analytic]\np_bar = 0.05\nmodes = 1\neta_a = 0.3\neta_b = 0.3\nq_a = 0.0\nq_b = 0.0\n",
    );
    let run = |name: &str, extra: &[&str]| {
        let out = tmp.path().join(name);
        let mut args = vec!["counts", "--config", cfg.to_str().unwrap(), "--out"];
        let o = out_arg(&out);
        args.push(&o);
        args.extend_from_slice(extra);
        let res = phonocorr(&args);
        assert!(res.status.success(), "{}", stderr(&res));
        out
    };
    let a = run("a", &["--threads", "1"]);
    let b = run("b", &["--threads", "2"]);
    let c = run("c", &["--seed", "77"]);
    assert_eq!(
        listing(&a),
        ["events.csv", "g2.csv", "histogram.csv", "manifest.toml"]
    );
    assert_eq!(
        fs::read(a.join("histogram.csv")).unwrap(),
        fs::read(b.join("histogram.csv")).unwrap()
    );
    assert_eq!(read(&a, "events.csv"), read(&b, "events.csv"));
    assert_ne!(read(&a, "histogram.csv"), read(&c, "histogram.csv"));
    let g2 = read(&a, "g2.csv");
    let row: Vec<f64> = g2
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .map(|x| x.parse().unwrap())
        .collect();
    assert!((row[0] - row[2]).abs() < 3.0 * row[1], "{g2}");
    assert!(read(&c, "manifest.toml").contains("seed = 77"));
}

#[test]
fn crosstalk_subtraction_writes_both_histograms() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        &tmp,
        "c.toml",
        "[counts]\nn_reps = 4000000\n[counts.clicks]\np_s = 0.01\np_as = 0.01\np_joint = 0.001\n[counts.crosstalk]\np_as_leak = 0.001\nn_reps = 4000000\n",
    );
    let out = tmp.path().join("o");
    let o = phonocorr(&[
        "counts",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        &out_arg(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(read(&out, "histogram.csv").contains("# crosstalk_subtracted=true"));
    assert!(out.join("histogram_raw.csv").is_file() && out.join("crosstalk.csv").is_file());
}

#[test]
fn infeasible_clicks_exit_2_without_outputs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        &tmp,
        "c.toml",
        "[counts]\nn_reps = 1000\n[counts.clicks]\np_s = 0.1\np_as = 0.1\np_joint = 0.5\n",
    );
    let out = tmp.path().join("o");
    let o = phonocorr(&[
        "counts",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        &out_arg(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("infeasible"), "{}", stderr(&o));
    assert!(listing(&out).is_empty());
}

#[test]
fn unknown_key_is_a_config_error_with_line() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "c.toml", "seed = 2\n\n[simulate]\ntau_m = 4.0\n");
    let o = phonocorr(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        &out_arg(tmp.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert!(msg.contains("tau_m") && msg.contains("line 4"), "{msg}");
}

#[test]
fn zero_threads_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let o = phonocorr(&[
        "analytic",
        "--threads",
        "0",
        "--out",
        &out_arg(&tmp.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bundled_config_parses_and_prints() {
    let o = phonocorr(&["default-config"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("[simulate.model.cutoffs]") && text.contains("tau_m_ps = 4.0"));
}

#[test]
fn fit_of_bundled_curve_recovers_lifetime() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    let o = phonocorr(&["fit", "--out", &out_arg(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let fits = read(&out, "fits.csv");
    let row = fits.lines().nth(1).unwrap();
    let tau: f64 = row.split(',').nth(5).unwrap().parse().unwrap();
    assert!((tau / 3.9 - 1.0).abs() < 0.1, "{fits}");
    assert!(out.join("normalized_synthetic.csv").is_file());
    assert!(out.join("residuals_synthetic.csv").is_file());
}

fn sample_curve(scale: f64) -> String {
    let p = phonocorr::fitting::ExpGaussParams {
        c: 1.0,
        a: scale,
        sigma: 0.22,
        t0: 0.2,
        tau: 4.0,
    };
    let mut s = String::from("delay_ps,g2,sigma_g2\n");
    for k in 0..30 {
        let t = -1.0 + 0.5 * k as f64;
        let v = p.eval(t);
        s.push_str(&format!("{t},{v},{}\n", 0.05 * v));
    }
    s
}

#[test]
fn fit_compares_two_curves_after_normalization() {
    let tmp = TempDir::new().unwrap();
    let a = write_config(&tmp, "low.csv", &sample_curve(10.0));
    let b = write_config(&tmp, "high.csv", &sample_curve(50.0));
    let out = tmp.path().join("o");
    let o = phonocorr(&[
        "fit",
        a.to_str().unwrap(),
        b.to_str().unwrap(),
        "--out",
        &out_arg(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let low = read(&out, "normalized_low.csv");
    let high = read(&out, "normalized_high.csv");
    assert_eq!(low.lines().count(), high.lines().count());
    for (x, y) in low.lines().zip(high.lines()).skip(1) {
        let g = |line: &str| -> f64 { line.split(',').nth(1).unwrap().parse().unwrap() };
        assert!((g(x) - g(y)).abs() < 1e-6, "{x} vs {y}");
    }
}

#[test]
fn malformed_curve_leaves_no_partial_outputs() {
    let tmp = TempDir::new().unwrap();
    let good = write_config(&tmp, "good.csv", &sample_curve(10.0));
    let bad = write_config(
        &tmp,
        "bad.csv",
        "delay_ps,g2,sigma_g2\n0,1,0.1\nnot,a,number\n",
    );
    let out = tmp.path().join("o");
    let o = phonocorr(&[
        "fit",
        good.to_str().unwrap(),
        bad.to_str().unwrap(),
        "--out",
        &out_arg(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.csv"));
    assert!(listing(&out).is_empty(), "{:?}", listing(&out));
    let missing = tmp.path().join("absent.csv");
    let o = phonocorr(&["fit", missing.to_str().unwrap(), "--out", &out_arg(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_curve_paths_are_relative_to_the_config() {
    let tmp = TempDir::new().unwrap();
    fs::create_dir(tmp.path().join("data")).unwrap();
    fs::write(tmp.path().join("data/c1.csv"), sample_curve(20.0)).unwrap();
    let cfg = write_config(
        &tmp,
        "c.toml",
        "[fit]\ncurves = [\"data/c1.csv\"]\nnormalize = false\nbootstrap_resamples = 50\n",
    );
    let out = tmp.path().join("o");
    let o = phonocorr(&[
        "fit",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        &out_arg(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(read(&out, "fit_c1.txt").contains("tau_bootstrap_low_ps"));
    assert!(!out.join("normalized_c1.csv").exists());
}

#[test]
fn simulate_small_grid() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        &tmp,
        "c.toml",
        "[simulate]\nwrite_amplitudes = [0.1]\nread_amplitudes = [1.0]\ndelays_ps = [0.0, 2.0]\n",
    );
    let out = tmp.path().join("o");
    let o = phonocorr(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        &out_arg(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        listing(&out),
        [
            "delay_curve.csv",
            "manifest.toml",
            "sweep.csv",
            "trajectory.csv"
        ]
    );
    assert!(read(&out, "trajectory.csv").starts_with("time_ps,n_S1,"));
    let sweep = read(&out, "sweep.csv");
    assert_eq!(sweep.lines().count(), 2);
    let g2: f64 = sweep
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .nth(3)
        .unwrap()
        .parse()
        .unwrap();
    assert!(g2 > 1.0 && g2 < 600.0);
    assert_eq!(read(&out, "delay_curve.csv").lines().count(), 3);
}

#[test]
fn reproduce_fig3c_passes() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    let o = phonocorr(&["reproduce", "fig3c", "--out", &out_arg(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = read(&out, "report.csv");
    assert!(report.starts_with("check,passed,detail\n"));
    assert_eq!(report.matches(",true,").count(), 4, "{report}");
}

#[test]
fn reproduce_fig5_on_a_small_grid() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        &tmp,
        "c.toml",
        "[reproduce]\nfig5_write_amplitudes = [0.0001, 0.1]\nfig5_read_amplitudes = [1.0]\n",
    );
    let out = tmp.path().join("o");
    let o = phonocorr(&[
        "reproduce",
        "fig5",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        &out_arg(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(!read(&out, "report.csv").contains(",false,"));
}

#[test]
fn failed_check_exits_4_and_keeps_the_report() {
    // Equal read noise everywhere: the plateau ordering cannot hold.
    let tmp = TempDir::new().unwrap();
    let mut text = String::from("[analytic.sweep]\neta = 0.07\nalpha_r = 0.3\nstokes_rates_hz = [1000.0, 5000.0, 20000.0, 50000.0]\nrep_rate_hz = 80000000.0\n");
    for p in [0.01, 0.02] {
        text.push_str(&format!(
            "[[analytic.sweep.read_settings]]\nstokes_prob = {p}\nnoise_a = 0.000001\nnoise_b = 0.000001\n"
        ));
    }
    let cfg = write_config(&tmp, "c.toml", &text);
    let out = tmp.path().join("o");
    let o = phonocorr(&[
        "reproduce",
        "fig3c",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        &out_arg(&out),
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(read(&out, "report.csv").contains("plateaus ordered inversely with q_b,false,"));
}

#[test]
fn reproduce_decay_recovers_lifetime() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        &tmp,
        "c.toml",
        "[reproduce]\ndecay_delays_ps = [0.0, 0.5, 1.0, 2.0, 3.0, 5.0, 8.0, 12.0]\n",
    );
    let out = tmp.path().join("o");
    let o = phonocorr(&[
        "reproduce",
        "decay",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        &out_arg(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(read(&out, "report.csv").contains("fitted lifetime matches input,true,"));
    for f in [
        "decay_curve.csv",
        "fit_decay.csv",
        "normalized_decay.csv",
        "manifest.toml",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }
}
