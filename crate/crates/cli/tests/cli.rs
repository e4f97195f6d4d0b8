use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pimdb::generate::DEFAULT_SCHEMA;
use tempfile::TempDir;

fn pimdb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pimdb"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = pimdb(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const CONFIG: &str =
    "[geometry]\nrows = 64\ncols = 512\nread_width = 16\n\n[topology]\ncrossbars_per_page = 32\n";

/// A small copy of the built-in schema, its data and an image.
struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        let schema = DEFAULT_SCHEMA
            .replace("rows = 8192", "rows = 700")
            .replace("rows = 1500", "rows = 150");
        fs::write(dir.path().join("small.toml"), schema).unwrap();
        fs::write(dir.path().join("cfg.toml"), CONFIG).unwrap();
        let f = Fixture { dir };
        ok(&[
            "generate",
            "--schema",
            s(&f.path("small.toml")),
            "--seed",
            "7",
            "--out",
            s(&f.path("data")),
        ]);
        f.load("db.img");
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn load(&self, image: &str) {
        ok(&[
            "load",
            "--schema",
            s(&self.path("data/schema.toml")),
            "--data",
            s(&self.path("data")),
            "--config",
            s(&self.path("cfg.toml")),
            "--image",
            s(&self.path(image)),
        ]);
    }
}

const Q6: &str = "SELECT SUM(l_extendedprice * l_discount) FROM lineitem \
    WHERE l_shipdate >= DATE '1994-01-01' AND l_shipdate < DATE '1995-01-01' AND l_discount >= 0.05 AND l_quantity < 24";

#[test]
fn generate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    for out in ["a", "b"] {
        ok(&["generate", "--seed", "7", "--out", s(&dir.path().join(out))]);
    }
    for f in ["schema.toml", "lineitem.csv", "customer.csv"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        assert_eq!(a, fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
    }
    ok(&["generate", "--seed", "8", "--out", s(&dir.path().join("c"))]);
    assert_ne!(
        fs::read(dir.path().join("a/lineitem.csv")).unwrap(),
        fs::read(dir.path().join("c/lineitem.csv")).unwrap()
    );
}

#[test]
fn query_report_matches_its_trace() {
    let f = Fixture::new();
    let img = f.path("db.img");
    let trace = f.path("q.trace");
    let report = f.path("r.json");
    let out = ok(&[
        "query",
        "--image",
        s(&img),
        "--query",
        Q6,
        "--report",
        "json",
        "--trace-out",
        s(&trace),
    ]);
    fs::write(&report, &out).unwrap();
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["report"]["queries"].as_array().unwrap().len(), 1);
    assert!(ok(&[
        "check-trace",
        "--trace",
        s(&trace),
        "--report",
        s(&report),
        "--image",
        s(&img)
    ])
    .contains("matches"));
    assert!(ok(&[
        "check-trace",
        "--trace",
        s(&trace),
        "--report",
        s(&report),
        "--config",
        s(&f.path("cfg.toml"))
    ])
    .contains("matches"));

    // A report whose counters were edited no longer matches.
    let tampered = out.replacen("\"pim_requests\": ", "\"pim_requests\": 1", 1);
    fs::write(&report, tampered).unwrap();
    let bad = pimdb(&[
        "check-trace",
        "--trace",
        s(&trace),
        "--report",
        s(&report),
        "--image",
        s(&img),
    ]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("pim_requests"));
}

#[test]
fn verify_passes_on_typical_queries() {
    let f = Fixture::new();
    let qf = f.path("q.sql");
    fs::write(
        &qf,
        format!(
            "{Q6};\n\
             SELECT * FROM customer WHERE c_mktsegment = 'BUILDING' AND c_acctbal > 5000;\n\
             SELECT COUNT(*), AVG(l_quantity), MIN(l_shipdate), MAX(l_extendedprice) FROM lineitem WHERE l_returnflag <> 'N' OR l_tax = 0;\n\
             SELECT * FROM lineitem WHERE NOT (l_linenumber < 3 OR l_shipmode = 'AIR');\n"
        ),
    )
    .unwrap();
    let before = fs::read(f.path("db.img")).unwrap();
    let out = ok(&[
        "verify",
        "--image",
        s(&f.path("db.img")),
        "--query-file",
        s(&qf),
    ]);
    assert_eq!(
        out.lines().filter(|l| l.starts_with("PASS")).count(),
        4,
        "{out}"
    );
    assert_eq!(fs::read(f.path("db.img")).unwrap(), before);
}

#[test]
fn reports_and_images_are_reproducible() {
    let f = Fixture::new();
    let mut reports = Vec::new();
    let mut images = Vec::new();
    for run in 0..3 {
        let name = format!("run{run}.img");
        f.load(&name);
        reports.push(ok(&[
            "query",
            "--image",
            s(&f.path(&name)),
            "--query",
            Q6,
            "--report",
            "json",
        ]));
        images.push(fs::read(f.path(&name)).unwrap());
    }
    assert!(reports.windows(2).all(|w| w[0] == w[1]));
    assert!(images.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn wear_accumulates_in_the_image() {
    let f = Fixture::new();
    let img = s(&f.path("db.img")).to_string();
    let ops = |out: &str| -> f64 {
        let v: serde_json::Value = serde_json::from_str(out).unwrap();
        v["report"]["queries"][0]["max_ops_per_cell"]
            .as_f64()
            .unwrap()
    };
    let first = ops(&ok(&[
        "query", "--image", &img, "--query", Q6, "--report", "json",
    ]));
    let second = ops(&ok(&[
        "query", "--image", &img, "--query", Q6, "--report", "json",
    ]));
    assert!(first > 0.0);
    assert_eq!(first, second);
    let (m, _) = pimdb::image::load(&f.path("db.img")).unwrap();
    let total = m.max_row_writes().unwrap();
    // Loading wrote each row once per read unit; both queries add on top.
    assert!(total.writes as f64 >= 2.0 * first * 512.0);
}

#[test]
fn formulas_show_the_table_values() {
    let out = ok(&["formulas"]);
    let ct = out
        .lines()
        .find(|l| l.starts_with("column_transform"))
        .unwrap();
    assert!(ct.contains("2050"));
    assert!(
        out.lines()
            .any(|l| l.starts_with("eq ") && l.contains(" 355 ")),
        "Equal at n = 32 is 11n + 3"
    );
    let json: serde_json::Value =
        serde_json::from_str(&ok(&["formulas", "--report", "json"])).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 86);
}

#[test]
fn errors_carry_positions_and_exit_codes() {
    let f = Fixture::new();
    let img = s(&f.path("db.img")).to_string();
    let out = pimdb(&[
        "query",
        "--image",
        &img,
        "--query",
        "SELECT * FROM lineitem WHERE l_tax >",
    ]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 1, column"), "{err}");

    assert_eq!(pimdb(&["query", "--image", &img]).status.code(), Some(2));
    assert_eq!(pimdb(&["frobnicate"]).status.code(), Some(2));

    fs::write(f.path("bad.toml"), "[geometry]\nrows = 12\n").unwrap();
    let out = pimdb(&["formulas", "--config", s(&f.path("bad.toml"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("power of two"));

    fs::write(f.path("bad.toml"), "[geometry]\nrows = \"x\"\n").unwrap();
    let out = pimdb(&["formulas", "--config", s(&f.path("bad.toml"))]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    fs::write(f.path("junk.img"), b"PIMDBIMG\x01\x00").unwrap();
    let out = pimdb(&["verify", "--image", s(&f.path("junk.img")), "--query", Q6]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn corpus_queries_verify() {
    let f = Fixture::new();
    let img = s(&f.path("db.img")).to_string();
    let corpus = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus/parse_query");
    let mut passed = 0;
    for entry in fs::read_dir(&corpus).unwrap() {
        let path = entry.unwrap().path();
        let out = pimdb(&["verify", "--image", &img, "--query-file", s(&path)]);
        let stdout = String::from_utf8_lossy(&out.stdout);
        match out.status.code() {
            Some(0) => passed += stdout.lines().filter(|l| l.starts_with("PASS")).count(),
            // Seeds that do not plan against this schema are parse-only.
            Some(3) => assert!(!stdout.contains("FAIL"), "{}", path.display()),
            c => panic!("{}: exit {c:?}\n{stdout}", path.display()),
        }
    }
    assert!(passed >= 10, "{passed} corpus queries verified");
}
