use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use surro_core::conf::ConfigFile;
use surro_core::dataset::Dataset;
use surro_models::{EncoderConfig, TrainConfig};

fn surro(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_surro")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

fn weather(dir: &Path) -> PathBuf {
    let w = dir.join("weather");
    let o = surro(&["gen-weather", "--out", p(&w)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    w
}

fn data(w: &Path, out: &Path, locs: &str, designs: &str, alternate: bool) {
    let mut args = vec!["gen-data", "--weather", p(w), "--locs", locs, "--designs", designs, "--seed", "3", "--out", p(out)];
    if alternate {
        args.push("--alternate");
    }
    let o = surro(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

/// Tiny configs keep the command tests fast.
const TINY_TCN: &str = "[train]\nencoder = tcn\nlr = 0.003\nmax_epochs = 3\npatience = 2\nbatch_size = 32\n\
[encoder]\nfirst_filters = 4\nn_blocks = 2\nembed_dim = 4\n[head]\nfirst_hidden = 8\n";

#[test]
fn gen_weather_writes_twenty_files_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let w = weather(dir.path());
    let csvs: Vec<_> = fs::read_dir(&w)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "csv"))
        .collect();
    assert_eq!(csvs.len(), 20);
    assert!(w.join("tor.alt.csv").exists() && w.join("run_manifest.txt").exists());
    assert_eq!(fs::read_to_string(w.join("cal.csv")).unwrap().lines().count(), 8761);

    let w2 = dir.path().join("again");
    assert_eq!(code(&surro(&["gen-weather", "--out", p(&w2)])), 0);
    for f in ["van.csv", "whi.alt.csv", "locations.txt"] {
        assert_eq!(fs::read(w.join(f)).unwrap(), fs::read(w2.join(f)).unwrap(), "{f}");
    }

    // the written manifest regenerates the same files
    let w3 = dir.path().join("from_manifest");
    let o = surro(&["gen-weather", "--manifest", p(&w.join("locations.txt")), "--out", p(&w3)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read(w.join("daw.csv")).unwrap(), fs::read(w3.join("daw.csv")).unwrap());
}

#[test]
fn gen_weather_bad_manifest_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.txt");
    fs::write(&m, "[x]\nmean_temp_c = 1\nseasonal_amplitude_c = 1\ndiurnal_amplitude_c = 1\nhumidity_base_pct = 50\nwind_base_ms = 3\nnoise_scale = 1\nseed = 1\n").unwrap();
    let o = surro(&["gen-weather", "--manifest", p(&m), "--out", p(&dir.path().join("w"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("zone"), "{}", stderr(&o));

    let o = surro(&["gen-weather", "--manifest", p(&dir.path().join("missing.txt")), "--out", p(&dir.path().join("w"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn gen_data_counts_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let w = weather(dir.path());
    let out = dir.path().join("d");
    let o = surro(&["gen-data", "--weather", p(&w), "--locs", "edm", "--designs", "50", "--seed", "1", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "2600");

    let ds = Dataset::load(&out).unwrap();
    assert_eq!(ds.len(), 2600);
    let again = dir.path().join("d2");
    ds.save(&again).unwrap();
    for f in ["manifest.txt", "designs.csv", "scaler.txt", "edm/targets.csv", "edm/weather.csv"] {
        assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }

    let o = surro(&["gen-data", "--weather", p(&w), "--locs", "edm", "--designs", "0", "--out", p(&dir.path().join("z"))]);
    assert_eq!(code(&o), 1);
    let o = surro(&["gen-data", "--weather", p(&w), "--locs", "nowhere", "--out", p(&dir.path().join("z"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("nowhere.csv"));
}

#[test]
fn validation_data_shares_the_training_scaler() {
    let dir = tempfile::tempdir().unwrap();
    let w = weather(dir.path());
    let (t, v) = (dir.path().join("t"), dir.path().join("v"));
    data(&w, &t, "tor,cal", "2", false);
    data(&w, &v, "tor,cal", "2", true);
    let (t, v) = (Dataset::load(&t).unwrap(), Dataset::load(&v).unwrap());
    assert_eq!(t.scaler(), v.scaler());
    assert_eq!(t.scaler().fitted_on(), "tor+cal");
    assert_eq!(t.designs(), v.designs());
    assert_ne!(t.years()[0], v.years()[0]);
}

#[test]
fn fixtures_carry_tuned_values() {
    let tcn = TrainConfig::from_conf(&ConfigFile::load(&fixture("tcn/edmonton.cfg")).unwrap(), None).unwrap();
    let EncoderConfig::Tcn(c) = tcn.encoder else { panic!("tcn fixture") };
    let h = tcn.head.unwrap();
    assert_eq!((c.first_filters, c.embed_dim, h.first_hidden, h.dropout_p, tcn.lr), (64, 16, 192, 0.124, 0.00226));

    let tr = TrainConfig::from_conf(&ConfigFile::load(&fixture("transformer/edmonton.cfg")).unwrap(), None).unwrap();
    let EncoderConfig::Transformer(t) = tr.encoder else { panic!("transformer fixture") };
    assert_eq!((t.embed_dim, t.heads, t.t_ffnn_size), (88, 11, 50));

    let ae = TrainConfig::from_conf(&ConfigFile::load(&fixture("autoencoder/global.cfg")).unwrap(), None).unwrap();
    let EncoderConfig::Autoencoder(a) = ae.encoder else { panic!("autoencoder fixture") };
    assert_eq!((a.embed_dim, a.first_filters, ae.lr, ae.head), (56, 128, 0.00153, None));

    let head = TrainConfig::from_conf(&ConfigFile::load(&fixture("autoencoder/toronto.cfg")).unwrap(), None).unwrap();
    let h = head.head.unwrap();
    assert_eq!((h.first_hidden, h.n_layers, h.dropout_p, head.lr), (252, 5, 0.344, 0.00978));
    let van = TrainConfig::from_conf(&ConfigFile::load(&fixture("autoencoder/vancouver.cfg")).unwrap(), None).unwrap();
    let h = van.head.unwrap();
    assert_eq!((h.first_hidden, h.n_layers, h.dropout_p), (457, 3, 0.289));

    // every fixture parses
    let mut n = 0;
    for kind in ["tcn", "transformer", "autoencoder"] {
        for e in fs::read_dir(fixture(kind)).unwrap() {
            let path = e.unwrap().path();
            TrainConfig::from_conf(&ConfigFile::load(&path).unwrap(), None)
                .unwrap_or_else(|err| panic!("{}: {err}", path.display()));
            n += 1;
        }
    }
    assert_eq!(n, 15 + 15 + 15);
}

#[test]
fn train_runs_the_edmonton_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let w = weather(dir.path());
    let (t, v) = (dir.path().join("t"), dir.path().join("v"));
    data(&w, &t, "edm", "2", false);
    data(&w, &v, "edm", "2", true);
    // the tuned values, capped at two epochs
    let cfg = dir.path().join("edm.cfg");
    let text = fs::read_to_string(fixture("tcn/edmonton.cfg")).unwrap();
    fs::write(&cfg, text.replace("[train]\n", "[train]\nmax_epochs = 2\npatience = 1\n")).unwrap();
    let model = dir.path().join("m");
    let o = surro(&["train", "--encoder", "tcn", "--config", p(&cfg), "--data", p(&t), "--val-data", p(&v), "--out", p(&model)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let manifest = fs::read_to_string(model.join("manifest.txt")).unwrap();
    assert!(manifest.contains("first_filters = 64") && manifest.contains("first_hidden = 192"), "{manifest}");
    let report = fs::read_to_string(model.join("report.json")).unwrap();
    assert!(report.contains("\"epochs_run\": 2"), "{report}");
    assert!(model.join("run_manifest.txt").exists());
}

#[test]
fn train_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let w = weather(dir.path());
    let (t, v) = (dir.path().join("t"), dir.path().join("v"));
    data(&w, &t, "lon", "2", false);
    data(&w, &v, "lon", "2", true);
    let cfg = dir.path().join("tiny.cfg");
    fs::write(&cfg, TINY_TCN).unwrap();
    let run = |extra: &[&str], enc: &str| {
        let out = dir.path().join("m");
        let mut args = vec!["train", "--encoder", enc, "--config", p(&cfg), "--data", p(&t), "--val-data", p(&v), "--out", p(&out)];
        args.extend_from_slice(extra);
        surro(&args)
    };
    assert_eq!(code(&run(&[], "lstm")), 1);
    let o = run(&["--inject-nan", "1"], "tcn");
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("epoch 1"));
    assert_eq!(code(&run(&["--stage", "sideways"], "tcn")), 1);

    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, TINY_TCN.replace("patience = 2", "patience = 3")).unwrap();
    let o = surro(&["train", "--encoder", "tcn", "--config", p(&bad), "--data", p(&t), "--val-data", p(&v), "--out", p(&dir.path().join("x"))]);
    assert_eq!(code(&o), 1);
    let o = surro(&["train", "--encoder", "tcn", "--config", p(&cfg), "--data", p(&dir.path().join("none")), "--val-data", p(&v), "--out", p(&dir.path().join("x"))]);
    assert_eq!(code(&o), 2);

    // a missing required flag is a usage error
    assert_eq!(code(&surro(&["train", "--encoder", "tcn"])), 1);
    assert_eq!(code(&surro(&["frobnicate"])), 1);
    assert_eq!(code(&surro(&["--help"])), 0);
}

#[test]
fn train_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let w = weather(dir.path());
    let (t, v) = (dir.path().join("t"), dir.path().join("v"));
    data(&w, &t, "vic", "2", false);
    data(&w, &v, "vic", "2", true);
    let cfg = dir.path().join("tiny.cfg");
    fs::write(&cfg, TINY_TCN).unwrap();
    let out = |name: &str| {
        let m = dir.path().join(name);
        let o = surro(&["train", "--encoder", "tcn", "--config", p(&cfg), "--data", p(&t), "--val-data", p(&v), "--out", p(&m), "--seed", "9"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        m
    };
    let (a, b) = (out("a"), out("b"));
    for f in ["manifest.txt", "weights.bin"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn two_stage_training() {
    let dir = tempfile::tempdir().unwrap();
    let w = weather(dir.path());
    let (t, v) = (dir.path().join("t"), dir.path().join("v"));
    data(&w, &t, "win", "2", false);
    data(&w, &v, "win", "2", true);
    let cfg = dir.path().join("ae.cfg");
    fs::write(
        &cfg,
        "[train]\nencoder = autoencoder\nlr = 0.005\nmax_epochs = 2\npatience = 1\n\
         [encoder]\nfirst_filters = 4\nn_blocks = 2\nembed_dim = 8\n[head]\nfirst_hidden = 16\nn_layers = 2\ndropout = 0.1\n",
    )
    .unwrap();
    let ae = dir.path().join("ae");
    let common = ["--encoder", "autoencoder", "--config", p(&cfg), "--data", p(&t), "--val-data", p(&v)];
    let o = surro(&[&["train"][..], &common, &["--stage", "autoencoder", "--out", p(&ae)]].concat());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(fs::read_to_string(ae.join("manifest.txt")).unwrap().contains("artifact = autoencoder"));

    let head = dir.path().join("head");
    let o = surro(&[&["train"][..], &common, &["--stage", "head", "--out", p(&head)]].concat());
    assert_eq!(code(&o), 1, "head stage without --autoencoder");
    let o = surro(&[&["train"][..], &common, &["--stage", "head", "--autoencoder", p(&ae), "--out", p(&head)]].concat());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = fs::read_to_string(head.join("report.json")).unwrap();
    assert!(report.contains("\"encoder_forwards\": 104"), "{report}");
}

fn write_grid(dir: &Path, weather: &str, rows: &[&str]) -> PathBuf {
    fs::write(dir.join("tiny.cfg"), TINY_TCN).unwrap();
    let mut g = format!("[grid]\nweather = {weather}\ntests = van,cal,whi\nseed = 4\ndesigns = 3\n");
    for r in rows {
        g.push_str(&format!("\n[{r}]\nlocations = {}\nencoder = tcn\nconfig = tiny.cfg\n", r.replace('-', ",")));
    }
    let path = dir.join("grid.txt");
    fs::write(&path, g).unwrap();
    path
}

#[test]
fn cross_eval_and_report() {
    let dir = tempfile::tempdir().unwrap();
    weather(dir.path());
    let grid = write_grid(dir.path(), "weather", &["tor", "tor-cal"]);
    let run = |out: &str, jobs: &str| {
        let out = dir.path().join(out);
        let o = Command::new(env!("CARGO_BIN_EXE_surro"))
            .args(["cross-eval", "--grid", p(&grid), "--out", p(&out)])
            .env("SURRO_JOBS", jobs)
            .output()
            .unwrap();
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        out
    };
    let (a, b) = (run("a", "1"), run("b", "2"));
    let csv = fs::read_to_string(a.join("matrix.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    assert!(csv.starts_with("train_config,test_loc,weekly_smape,annual_smape,rmse,pearson\n"));
    assert!(csv.contains("\ntor-cal,whi,"));
    assert_eq!(csv, fs::read_to_string(b.join("matrix.csv")).unwrap());
    assert!(fs::read_to_string(a.join("heatmap.svg")).unwrap().starts_with("<svg"));
    let manifest = fs::read_to_string(b.join("run_manifest.txt")).unwrap();
    assert!(manifest.contains("jobs = 2") && manifest.contains("seed = 4"), "{manifest}");

    let svg = dir.path().join("r/heat.svg");
    let o = surro(&["report", "--in", p(&a.join("matrix.csv")), "--out", p(&svg)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read(&svg).unwrap(), fs::read(a.join("heatmap.svg")).unwrap());

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    assert_eq!(code(&surro(&["report", "--in", p(&empty), "--out", p(&svg)])), 1);
    assert_eq!(code(&surro(&["report", "--in", p(&dir.path().join("absent.csv")), "--out", p(&svg)])), 2);
}

#[test]
fn cross_eval_missing_weather_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let w = weather(dir.path());
    fs::remove_file(w.join("cal.alt.csv")).unwrap();
    let grid = write_grid(dir.path(), "weather", &["tor"]);
    let o = surro(&["cross-eval", "--grid", p(&grid), "--out", p(&dir.path().join("o"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("cal.alt.csv"), "{}", stderr(&o));

    let o = surro(&["cross-eval", "--grid", p(&dir.path().join("nogrid.txt")), "--out", p(&dir.path().join("o"))]);
    assert_eq!(code(&o), 1);
}

#[test]
fn cross_eval_annual_rows() {
    let dir = tempfile::tempdir().unwrap();
    weather(dir.path());
    let grid = write_grid(dir.path(), "weather", &[]);
    let mut g = fs::read_to_string(&grid).unwrap();
    g.push_str("\n[edm-annual]\nlocations = edm\nencoder = tcn\nconfig = tiny.cfg\nmode = annual\n");
    fs::write(&grid, g).unwrap();
    let out = dir.path().join("o");
    let o = surro(&["cross-eval", "--grid", p(&grid), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("annual_baseline.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("train_config,test_loc,annual_smape\nedm-annual,van,"));
    assert!(!out.join("matrix.csv").exists());
}

/// EPW text with `rows` data rows of 35 fields each.
fn epw(rows: usize) -> String {
    let mut s = String::from("LOCATION,Testville,ON,CAN,TMY,000000,45.0,-75.0,-5.0,100.0\n");
    for _ in 1..8 {
        s.push_str("HEADER,x\n");
    }
    for r in 0..rows {
        let mut f: Vec<String> = (0..35).map(|_| "0".to_string()).collect();
        f[6] = if r == 0 { "-5.0".into() } else { format!("{}", (r % 30) as f64 - 10.0) };
        f[8] = "60".into();
        f[13] = format!("{}", (r % 24) * 10);
        f[21] = "3.5".into();
        s.push_str(&f.join(","));
        s.push('\n');
    }
    s
}

#[test]
fn parse_epw_and_variability() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("t.epw");
    fs::write(&src, epw(8760)).unwrap();
    let out = dir.path().join("w/test.csv");
    let o = surro(&["parse-epw", "--in", p(&src), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 8761);
    assert!(csv.lines().nth(1).unwrap().starts_with("-5"), "{}", csv.lines().nth(1).unwrap());

    fs::write(&src, epw(8759)).unwrap();
    assert_eq!(code(&surro(&["parse-epw", "--in", p(&src), "--out", p(&out)])), 2);

    let w = weather(dir.path());
    let v = dir.path().join("var");
    let o = surro(&["variability", "--weather", p(&w), "--out", p(&v)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let pairs = fs::read_to_string(v.join("pairs.csv")).unwrap();
    assert_eq!(pairs.lines().count(), 1 + 45);
    assert!(fs::read_to_string(v.join("variability.csv")).unwrap().starts_with("metric,feature,value\n"));
    let o = surro(&["variability", "--weather", p(&w), "--locs", "van", "--out", p(&v)]);
    assert_eq!(code(&o), 2);
}
