use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cfb_cli::config::{parse_config, parse_config_over, serialize_config, ScenarioConfig};
use cfb_cli::presets;
use serde_json::Value;
use tempfile::TempDir;

struct Run {
    dir: TempDir,
}

impl Run {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, text).unwrap();
        p
    }

    /// Runs `cfb` with the cache inside the temp dir.
    fn cfb(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_cfb"))
            .args(args)
            .arg("--cache-dir")
            .arg(self.path("cache"))
            .current_dir(self.dir.path())
            .output()
            .unwrap()
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_owned()
}

fn assert_valid_svg(path: &Path) {
    let text = fs::read_to_string(path).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap();
    assert_eq!(doc.root_element().tag_name().name(), "svg");
}

#[test]
fn empty_config_runs_with_defaults() {
    let r = Run::new();
    r.write("empty.toml", "");
    let o = r.cfb(&["steadystate", "--config", "empty.toml", "--out", "o"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rec = json(&r.path("o/steadystate.json"));
    let n = rec["outputs"]["n_phn"].as_f64().unwrap();
    assert!(n > 0.0 && n.is_finite());
    assert_eq!(rec["stability"]["stable"], true);
    assert_eq!(rec["config"]["path"]["eta_s"], 0.7);
}

#[test]
fn spectrum_has_named_quadrature_columns() {
    let r = Run::new();
    r.write("c.toml", "[output]\nspectrum_hz = { start = 1e5, stop = 1e7, points = 5 }\n");
    let o = r.cfb(&["steadystate", "--config", "c.toml", "--out", "o"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(header(&r.path("o/spectrum.csv")), "omega_rad_s,S_Xm,S_Ym,S_Xc,S_Yc,S_XA,S_YA");
    assert_eq!(fs::read_to_string(r.path("o/spectrum.csv")).unwrap().lines().count(), 6);
}

#[test]
fn out_of_range_efficiency_exits_2() {
    let r = Run::new();
    r.write("c.toml", "[path]\neta_s = 1.5\n");
    let o = r.cfb(&["steadystate", "--config", "c.toml", "--out", "o"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("eta_s"));
}

#[test]
fn unknown_key_is_rejected() {
    let r = Run::new();
    r.write("c.toml", "[om]\nq_mech = 1e7\n");
    let o = r.cfb(&["steadystate", "--config", "c.toml", "--out", "o"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("q_mech"));
}

#[test]
fn configs_survive_serialization() {
    let mut configs = vec![ScenarioConfig::default()];
    configs.extend(presets::all().iter().map(|p| parse_config(p.config).unwrap()));
    let mut timed = ScenarioConfig::default();
    timed.protocol.precool_duration_s = Some(3e-5);
    timed.path.delay_s = 1.0 / 3.0 * 1e-7;
    timed.om.q_m = 123456789.0;
    configs.push(timed);
    for c in configs {
        let text = serialize_config(&c).unwrap();
        assert_eq!(parse_config(&text).unwrap(), c, "{text}");
    }
}

#[test]
fn preset_overlay_keeps_unrelated_keys() {
    let p = presets::find("fig7b").unwrap();
    let cfg = parse_config_over(p.config, "[om]\nn_cav = 100.0\n").unwrap();
    assert_eq!(cfg.om.q_m, 1e8);
    assert_eq!(cfg.om.n_cav, 100.0);
}

#[test]
fn delay_convention_halves_the_lag() {
    let r = Run::new();
    r.write("m.toml", "scheme = \"mirror_feedback\"\n[path]\ndelay_s = 1e-7\n");
    let a = r.cfb(&["stability", "--config", "m.toml", "--out", "a"]);
    let b = r.cfb(&["stability", "--config", "m.toml", "--out", "b", "--delay-convention", "round-trip"]);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(code(&b), 0, "{}", stderr(&b));
    let (ma, mb) = (json(&r.path("a/model.json")), json(&r.path("b/model.json")));
    let tau = |m: &Value| m["tau"].as_f64().unwrap();
    assert!(tau(&ma) > 0.0);
    assert_eq!(tau(&ma), 2.0 * tau(&mb));
    assert_eq!(ma["A0"], mb["A0"]);
}

#[test]
fn unstable_model_exits_3() {
    let r = Run::new();
    r.write("m.toml", "scheme = \"mirror_feedback\"\n[path]\ndelay_s = 1e-7\nphi_s = 0.5\n");
    let o = r.cfb(&["stability", "--config", "m.toml", "--out", "o"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert_eq!(json(&r.path("o/stability.json"))["stability"]["stable"], false);
    let o = r.cfb(&["steadystate", "--config", "m.toml", "--out", "p"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn cache_hit_gives_identical_record() {
    let r = Run::new();
    r.write("c.toml", "[output]\nspectrum_hz = { start = 1e5, stop = 1e7, points = 5 }\n");
    let first = r.cfb(&["steadystate", "--config", "c.toml", "--out", "a"]);
    let second = r.cfb(&["steadystate", "--config", "c.toml", "--out", "b"]);
    assert_eq!(code(&first), 0);
    assert!(!String::from_utf8_lossy(&first.stdout).contains("cached"));
    assert!(String::from_utf8_lossy(&second.stdout).contains("(cached)"));
    for f in ["steadystate.json", "spectrum.csv", "model.json"] {
        assert_eq!(fs::read(r.path("a").join(f)).unwrap(), fs::read(r.path("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn hash_follows_the_inputs() {
    let r = Run::new();
    r.write("a.toml", "[om]\nn_cav = 500.0\n");
    r.write("b.toml", "[om]\nn_cav = 501.0\n");
    r.write("a2.toml", "[om]\nn_cav = 500.0\n[path]\neta_s = 0.7\n");
    for (cfg, out) in [("a.toml", "a"), ("b.toml", "b"), ("a2.toml", "a2")] {
        assert_eq!(code(&r.cfb(&["effective", "--config", cfg, "--out", out])), 0);
    }
    let hash = |d: &str| json(&r.path(d).join("effective.json"))["hash"].as_str().unwrap().to_owned();
    assert_ne!(hash("a"), hash("b"));
    assert_eq!(hash("a"), hash("a2"));
}

#[test]
fn cache_gc_clears_partial_files() {
    let r = Run::new();
    assert_eq!(code(&r.cfb(&["effective", "--out", "o"])), 0);
    let shard = fs::read_dir(r.path("cache")).unwrap().next().unwrap().unwrap().path();
    fs::write(shard.join(".tmp-partial"), b"{").unwrap();
    let o = r.cfb(&["cache", "gc"]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "kept 1, removed 1 temporary, 0 corrupt, 0 expired");
    assert!(!shard.join(".tmp-partial").exists());
}

#[test]
fn entangle_record_has_covariance_and_stages() {
    let r = Run::new();
    let o = r.cfb(&["entangle", "--out", "o"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rec = json(&r.path("o/protocol.json"));
    let sigma = rec["sigma"].as_array().unwrap();
    assert_eq!(sigma.len(), 4);
    assert!(sigma.iter().all(|row| row.as_array().unwrap().len() == 4));
    assert_eq!(sigma[0][2], sigma[2][0]);
    assert!(rec["delta_epr"].as_f64().unwrap() > 0.0);
    let stages: Vec<&str> = rec["stages"].as_array().unwrap().iter().map(|s| s["label"].as_str().unwrap()).collect();
    assert_eq!(stages, ["precool", "generation", "gap", "swap"]);
    assert!(rec["inputs"]["eta_s"].is_number());
}

#[test]
fn optimize_cooling_writes_trace_and_honours_seed() {
    let r = Run::new();
    r.write("c.toml", "[optimize]\nstarts = 1\nmax_evals = 30\n");
    let o = r.cfb(&["optimize-cooling", "--config", "c.toml", "--out", "o", "--seed", "7"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rec = json(&r.path("o/optimize_cooling.json"));
    assert_eq!(rec["config"]["optimize"]["seed"], 7);
    assert_eq!(header(&r.path("o/trace.csv")), "start,iteration,phi_s,delta_a,value,feasible");
    let evals = rec["outputs"]["evaluations"].as_u64().unwrap() as usize;
    assert_eq!(fs::read_to_string(r.path("o/trace.csv")).unwrap().lines().count(), evals + 1);
    // The scenario's own point is the first start, so the optimum cannot be worse.
    let base = r.cfb(&["steadystate", "--out", "b"]);
    assert_eq!(code(&base), 0);
    let n0 = json(&r.path("b/steadystate.json"))["outputs"]["n_phn"].as_f64().unwrap();
    assert!(rec["outputs"]["value"].as_f64().unwrap() <= n0);
}

#[test]
fn optimize_rejects_foreign_knobs() {
    let r = Run::new();
    r.write("c.toml", "[optimize]\nfree = [\"gamma_tm\"]\n");
    let o = r.cfb(&["optimize-cooling", "--config", "c.toml", "--out", "o"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn sweep_marks_failed_points() {
    let r = Run::new();
    r.write(
        "c.toml",
        "scheme = \"mirror_feedback\"\n[path]\ndelay_s = 1e-7\n[sweep]\nparameter = \"phi_s\"\nvalues = [0.0, 0.5, 2.0]\n",
    );
    let o = r.cfb(&["sweep", "--config", "c.toml", "--out", "o"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(r.path("o/sweep.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "phi_s,n_phn,status,reason");
    assert!(lines[1].ends_with(",ok,"));
    assert!(lines[2].starts_with("0.5,,failed,") && lines[2].contains("unstable"));
    let table = json(&r.path("o/sweep.json"));
    assert_eq!(table["schema_version"], 1);
    assert_eq!(table["rows"].as_array().unwrap().len(), 3);
}

#[test]
fn fig2_table_columns() {
    let r = Run::new();
    r.write("g.toml", "[sweep]\nlog = { start = 1.0, stop = 10.0, points = 3 }\n");
    let o = r.cfb(&["sweep", "--preset", "fig2a", "--config", "g.toml", "--out", "o"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(header(&r.path("o/sweep.csv")), "C_qu,ratio,c_eff,eta_s,status,reason");
    let table = json(&r.path("o/sweep.json"));
    let rows = table["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 9);
    for row in rows {
        let (c, ratio, c_eff) = (row[0].as_f64().unwrap(), row[1].as_f64().unwrap(), row[2].as_f64().unwrap());
        assert!((c_eff - ratio * c).abs() <= 1e-9 * c_eff.abs());
    }
    assert_valid_svg(&r.path("o/fig2a.svg"));
}

#[test]
fn empty_dataset_plots_axes_only() {
    let r = Run::new();
    r.write("empty.csv", "");
    r.write("header.csv", "n_cav,n_phn,phi_s,delta_a_hz,n_sideband,eta_s,status,reason\n");
    for (input, preset) in [("empty.csv", "fig7a"), ("header.csv", "fig3a")] {
        let o = r.cfb(&["plot", "--preset", preset, "--input", input, "--out", "p"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let svg = r.path(&format!("p/{preset}.svg"));
        assert_valid_svg(&svg);
        let text = fs::read_to_string(svg).unwrap();
        assert!(!text.contains("class=\"series\""));
        assert!(text.contains("class=\"axes\""));
    }
}

#[test]
fn plot_rejects_mismatched_schema() {
    let r = Run::new();
    r.write("t.csv", "x,y\n1,2\n");
    let o = r.cfb(&["plot", "--preset", "fig3a", "--input", "t.csv", "--out", "p"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("n_cav"));
}

#[test]
fn plots_are_deterministic() {
    let r = Run::new();
    r.write("t.csv", "n_cav,delta_epr,eta_s,status,reason\n500,1.5,0.7,ok,\n1000,1.2,0.7,ok,\n500,1.1,0.9,ok,\n");
    for out in ["a", "b"] {
        assert_eq!(code(&r.cfb(&["plot", "--preset", "fig7a", "--input", "t.csv", "--out", out])), 0);
    }
    let a = fs::read(r.path("a/fig7a.svg")).unwrap();
    assert_eq!(a, fs::read(r.path("b/fig7a.svg")).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.matches("class=\"series\"").count(), 2);
    assert_eq!(text.matches("class=\"reference\"").count(), 1);
}

/// Every preset on a one-point grid with a single start.
#[test]
fn presets_run_end_to_end() {
    let r = Run::new();
    for p in presets::all() {
        let cfg = parse_config(p.config).unwrap();
        let sweep = cfg.sweep.as_ref().unwrap();
        let param = toml::Value::try_from(sweep.parameter).unwrap();
        let x = sweep.grid().unwrap()[0];
        let mut overlay = format!("[sweep]\nparameter = {param}\nvalues = [{x:?}]\nseries = [");
        let first = sweep.series[0].iter().map(|(k, v)| format!("{} = {v:?}", toml::Value::try_from(k).unwrap().as_str().unwrap()));
        overlay.push_str(&format!("{{ {} }}]\n", first.collect::<Vec<_>>().join(", ")));
        if cfg.optimize.is_some() {
            overlay.push_str("[optimize]\nstarts = 0\nmax_evals = 20\n");
        }
        let file = r.write(&format!("{}.toml", p.name), &overlay);
        let out = format!("out-{}", p.name);
        let o = r.cfb(&["sweep", "--preset", p.name, "--config", file.to_str().unwrap(), "--out", &out]);
        assert_eq!(code(&o), 0, "{}: {}", p.name, stderr(&o));
        let table = json(&r.path(&out).join("sweep.json"));
        let rows = table["rows"].as_array().unwrap();
        assert_eq!(rows.len(), 1, "{}", p.name);
        let status = table["columns"].as_array().unwrap().iter().position(|c| c == "status").unwrap();
        assert_eq!(rows[0][status], "ok", "{}: {:?}", p.name, rows[0]);
        let svg = r.path(&out).join(format!("{}.svg", p.name));
        assert_valid_svg(&svg);
        assert!(fs::read_to_string(&svg).unwrap().contains("class=\"series\""), "{}", p.name);
    }
}

#[test]
fn fig3_plot_carries_the_sideband_overlay() {
    let r = Run::new();
    r.write(
        "t.csv",
        "n_cav,n_phn,phi_s,delta_a_hz,n_sideband,eta_s,status,reason\n500,0.36,0.1,-9e5,0.37,0.7,ok,\n2000,0.24,0.1,-9e5,0.25,0.7,ok,\n",
    );
    assert_eq!(code(&r.cfb(&["plot", "--preset", "fig3a", "--input", "t.csv", "--out", "p"])), 0);
    let text = fs::read_to_string(r.path("p/fig3a.svg")).unwrap();
    assert!(text.contains("class=\"overlay\"") && text.contains("stroke-dasharray"));
}
