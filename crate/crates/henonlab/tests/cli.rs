use std::path::{Path, PathBuf};
use std::process::Command;

use henonlab::formats::parse_raster;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_henonlab"))
}

fn quadratic_map(dir: &Path, name: &str, c: f64, a: f64) -> PathBuf {
    let path = dir.join(name);
    let text = format!(r#"{{"factors":[{{"a":[{a},0.0],"p":[[{c},0.0],[0.0,0.0],[1.0,0.0]]}}]}}"#);
    std::fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> i32 {
    let out = bin().args(args).output().unwrap();
    out.status.code().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn connect_on_connected_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let map = quadratic_map(dir.path(), "c0.json", 0.0, 0.05);
    let out = dir.path().join("connect");
    let code = run(&["connect", "--map", s(&map), "--res", "512", "--budget", "500", "--out", s(&out)]);
    assert_eq!(code, 0);
    let rep = read_json(&out.join("connect.json"));
    assert_eq!(rep["verdict"], "connected");
    let meta = read_json(&out.join("metadata.json"));
    assert_eq!(meta["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(meta["config"]["subcommand"], "connect");
    assert_eq!(meta["config"]["params"]["schedule"][1][0], 512);
    assert_eq!(meta["result"]["exit_code"], 0);
    assert_eq!(meta["caveats"].as_array().unwrap().len(), 0);
}

#[test]
fn exit_code_taxonomy() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let horseshoe = quadratic_map(d, "hs.json", -10.0, 0.1);
    let out = d.join("o");
    assert_eq!(run(&["frobnicate"]), 64);
    assert_eq!(run(&["slice", "--map", s(&horseshoe), "--res", "many"]), 64);
    assert_eq!(run(&["connect", "--map", s(&d.join("missing.json")), "--out", s(&out)]), 74);
    std::fs::write(d.join("bad.json"), "{\"factors\": [}").unwrap();
    assert_eq!(run(&["certify", "--map", s(&d.join("bad.json")), "--out", s(&out)]), 64);
    std::fs::write(d.join("linear.json"), r#"{"factors":[{"a":[1,0],"p":[[0,0],[1,0]]}]}"#).unwrap();
    assert_eq!(run(&["certify", "--map", s(&d.join("linear.json")), "--out", s(&out)]), 64);
    assert_eq!(run(&["tangency", "--map", s(&horseshoe), "--n", "2", "--out", s(&out)]), 0);
    assert_eq!(read_json(&out.join("tangency.json"))["escape"]["verdict"], "some_escape");
    // The horseshoe has no saddle of period 1 with index 5.
    assert_eq!(run(&["leaf", "--map", s(&horseshoe), "--index", "5", "--out", s(&out)]), 1);
    assert_eq!(run(&["green", "--map", s(&horseshoe), "--window", "-100,-1,1,1", "--out", s(&out)]), 64);
}

#[test]
fn green_rendering_contract() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let horseshoe = quadratic_map(d, "hs.json", -10.0, 0.1);
    let (a, b) = (d.join("a"), d.join("b"));
    for out in [&a, &b] {
        assert_eq!(run(&["green", "--map", s(&horseshoe), "--res", "32", "--out", s(out)]), 0);
    }
    let img = std::fs::read(a.join("green.pgm")).unwrap();
    assert_eq!(img, std::fs::read(b.join("green.pgm")).unwrap());
    let r = parse_raster(&img).unwrap();
    assert_eq!((&r.magic, r.width, r.height), (b"P5", 32, 32));
    assert_eq!(r.data.iter().max(), Some(&255));

    let basin = quadratic_map(d, "c0.json", 0.0, 0.05);
    let c = d.join("c");
    let code = run(&["green", "--map", s(&basin), "--res", "16", "--window", "-0.2,-0.2,0.2,0.2", "--out", s(&c)]);
    assert_eq!(code, 0);
    let r = parse_raster(&std::fs::read(c.join("green.pgm")).unwrap()).unwrap();
    assert!(r.data.iter().all(|&p| p == 0));
}

#[test]
fn scan_resume_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let common = ["--x", "-2,0.5,6", "--y", "-0.5,0.5,4", "--no-unstable", "--probe-levels", "4"];
    let full = d.join("full");
    let mut args = vec!["scan", "--out", s(&full), "--threads", "1"];
    args.extend(common);
    assert_eq!(run(&args), 0);

    let part = d.join("part");
    let mut args = vec!["scan", "--out", s(&part), "--threads", "2", "--row-limit", "2"];
    args.extend(common);
    assert_eq!(run(&args), 2);
    assert!(!part.join("scan.ppm").exists());
    let mut args = vec!["scan", "--out", s(&part), "--threads", "3"];
    args.extend(common);
    assert_eq!(run(&args), 0);

    for f in ["scan.ppm", "scan.csv"] {
        assert_eq!(std::fs::read(full.join(f)).unwrap(), std::fs::read(part.join(f)).unwrap(), "{f}");
    }
    let summary = read_json(&part.join("scan.json"));
    assert_eq!(summary["rows_resumed"], 2);
    assert_eq!(summary["cells"], 24);
    let ppm = parse_raster(&std::fs::read(full.join("scan.ppm")).unwrap()).unwrap();
    assert_eq!((&ppm.magic, ppm.width, ppm.height), (b"P6", 6, 4));
    let csv = std::fs::read_to_string(full.join("scan.csv")).unwrap();
    assert_eq!(csv.lines().count(), 25);

    // Changing the policy invalidates the checkpoint.
    let mut args = vec!["scan", "--out", s(&part), "--confine", "50"];
    args.extend(common);
    assert_eq!(run(&args), 1);
}

#[test]
fn slice_saddles_and_certify_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let horseshoe = quadratic_map(d, "hs.json", -10.0, 0.1);
    let out = d.join("slice");
    assert_eq!(run(&["slice", "--map", s(&horseshoe), "--res", "64", "--budget", "40", "--out", s(&out)]), 0);
    let r = parse_raster(&std::fs::read(out.join("slice.pgm")).unwrap()).unwrap();
    assert_eq!((&r.magic, r.width), (b"P5", 64));
    assert!(r.data.iter().all(|p| [0u8, 128, 255].contains(p)));
    let side = read_json(&out.join("slice.json"));
    assert_eq!(side["resolution"], 64);
    assert_eq!(side["components8"]["upper"], 0);
    let basilica = quadratic_map(d, "c1.json", -1.0, 0.05);
    assert_eq!(run(&["slice", "--map", s(&basilica), "--res", "64", "--budget", "100", "--out", s(&out)]), 0);
    assert!(read_json(&out.join("slice.json"))["components8"]["upper"].as_u64().unwrap() >= 1);

    let out = d.join("saddles");
    assert_eq!(run(&["saddles", "--map", s(&horseshoe), "--period", "2", "--out", s(&out)]), 0);
    let orbits = read_json(&out.join("saddles.json"));
    assert_eq!(orbits["orbits"].as_array().unwrap().len(), 3);
    assert_eq!(orbits["attracting"].as_array().unwrap().len(), 0);

    let out = d.join("cert");
    assert_eq!(run(&["certify", "--map", s(&horseshoe), "--samples", "256", "--out", s(&out)]), 0);
    assert_eq!(read_json(&out.join("certify.json"))["verdict"], "certified");
}

#[test]
fn leaf_rays_measure_and_potential() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let horseshoe = quadratic_map(d, "hs.json", -10.0, 0.1);
    let out = d.join("leaf");
    assert_eq!(run(&["leaf", "--map", s(&horseshoe), "--res", "48", "--levels", "4", "--out", s(&out)]), 0);
    let leaf = read_json(&out.join("leaf.json"));
    assert_eq!(leaf["unstable"]["verdict"], "compact_component");
    assert_eq!(leaf["leaf"]["coefficients"].as_array().unwrap().len(), 31);
    assert!(out.join("leaf.pgm").exists());

    let out = d.join("rays");
    assert_eq!(run(&["rays", "--map", s(&horseshoe), "--count", "40", "--out", s(&out)]), 0);
    let landing = std::fs::read_to_string(out.join("landing.csv")).unwrap();
    assert_eq!(landing.lines().count(), 41);
    let rays = std::fs::read_to_string(out.join("rays.csv")).unwrap();
    assert!(rays.starts_with("ray,step,re_t,im_t,g\n0,0,"));
    let meta = read_json(&out.join("metadata.json"));
    assert_eq!(meta["caveats"].as_array().unwrap().len(), 1);

    let out = d.join("measure");
    let code = run(&["measure", "--map", s(&horseshoe), "--count", "40", "--nmax", "4", "--out", s(&out)]);
    assert_eq!(code, 0);
    let m = read_json(&out.join("measure.json"));
    let tv = m["total_variation"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&tv));
    assert_eq!(m["periodic_points"], 2 + 2 + 6 + 12);

    let pts = d.join("pts.csv");
    std::fs::write(&pts, "re_z,im_z,re_w,im_w\n1e6,0,0,0\n0.1,0,0,0\n").unwrap();
    let out = d.join("pot");
    assert_eq!(run(&["potential", "--map", s(&horseshoe), "--points", s(&pts), "--out", s(&out)]), 0);
    let table = std::fs::read_to_string(out.join("potential.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].ends_with(",escaped") && rows[2].ends_with(",escaped"));
}

#[test]
fn birational_runs_carry_a_caveat() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("bir.json");
    std::fs::write(&map, r#"{"factors":[{"a":[0.1,0],"p":[[-10,0],[0,0],[1,0]],"b":[[0,0],[0.001,0]]}]}"#).unwrap();
    let out = dir.path().join("o");
    assert_eq!(run(&["certify", "--map", s(&map), "--samples", "128", "--out", s(&out)]), 0);
    let meta = read_json(&out.join("metadata.json"));
    assert_eq!(meta["caveats"].as_array().unwrap().len(), 1);
}

#[test]
fn metadata_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let map = quadratic_map(d, "c.json", -1.0, 0.05);
    let (a, b) = (d.join("a"), d.join("b"));
    for out in [&a, &b] {
        assert_eq!(run(&["tangency", "--map", s(&map), "--n", "2", "--rh-res", "64", "--out", s(out)]), 0);
    }
    let (ma, mb) = (read_json(&a.join("metadata.json")), read_json(&b.join("metadata.json")));
    assert_eq!(ma["config"]["input"], mb["config"]["input"]);
    assert_eq!(ma["config"]["params"], mb["config"]["params"]);
    assert_eq!(std::fs::read(a.join("tangency.json")).unwrap(), std::fs::read(b.join("tangency.json")).unwrap());
    let t = read_json(&a.join("tangency.json"));
    assert_eq!(t["escape"]["verdict"], "all_confined");
    assert_eq!(t["levels"][1]["count"]["count"], 3);
    assert_eq!(t["levels"][1]["riemann_hurwitz"]["pass"], true);
}
