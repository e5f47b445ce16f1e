mod common;

use std::fs;
use std::path::Path;

use carrierforge_core::classify::CarrierClass;
use carrierforge_core::forge::{forge, ForgeSpec, TrackSpec, TreeNode};
use common::*;
use serde_json::Value;

fn iso(seed: u64) -> carrierforge_core::forge::Artifact {
    forge(&ForgeSpec::new(CarrierClass::IsoDataDisk, seed).with_tree(vec![
        TreeNode::random("IMG/P001.TIF", 3000),
        TreeNode::text("README.TXT", "box 1\n"),
    ]))
    .unwrap()
}

/// Replaces the temp directory in every string so goldens are stable.
fn scrub(v: &mut Value, tmp: &str) {
    match v {
        Value::String(s) => *s = s.replace(tmp, "<TMP>"),
        Value::Array(a) => a.iter_mut().for_each(|x| scrub(x, tmp)),
        Value::Object(o) => o.values_mut().for_each(|x| scrub(x, tmp)),
        _ => {}
    }
}

/// Compares against tests/golden/<name>.json; CARRIERFORGE_BLESS=1 rewrites it.
fn golden(name: &str, mut actual: Value, tmp: &Path) {
    scrub(&mut actual, &tmp.display().to_string());
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{name}.json"));
    let rendered = serde_json::to_string_pretty(&actual).unwrap() + "\n";
    if std::env::var_os("CARRIERFORGE_BLESS").is_some() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, &rendered).unwrap();
    }
    let expected = fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden {}", path.display()));
    assert_eq!(rendered, expected, "golden {name} differs");
}

#[test]
fn identify_reports_class_and_plan() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("a.iso"), iso(1).image).unwrap();
    fs::write(d.join("b.mds"), forge(&ForgeSpec::new(CarrierClass::MdsOpaque, 2)).unwrap().image).unwrap();
    fs::write(d.join("empty.img"), b"").unwrap();
    let audio = forge(&ForgeSpec::new(CarrierClass::RedBookAudio, 3).with_tracks(vec![TrackSpec::audio(3)])).unwrap();
    let row = write_artifact(d, "cd", &audio);
    let cue = row.trim_end().rsplit(',').next().unwrap().to_owned();

    let r = run(d, &["identify", "a.iso", "b.mds", "empty.img", &cue]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let lines: Vec<&str> = r.stdout.lines().collect();
    assert!(lines[1].contains("IsoDataDisk"));
    assert!(lines[2].contains("MdsOpaque") && lines[2].ends_with("manual"));
    assert!(lines[3].contains("Unknown"));
    assert!(lines[4].contains("RedBookAudio"));

    let j = run(d, &["--json", "identify", "a.iso", "b.mds", "empty.img", &cue]);
    golden("identify", j.json(), d);

    let missing = run(d, &["identify", "nope.iso"]);
    assert_eq!(missing.code, 2);
}

#[test]
fn stabilize_records_one_event_per_carrier() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let good = iso(10);
    let mut broken = iso(11);
    let lba = root_dir_lba(&broken.image);
    broken.image[lba * 2048..(lba + 1) * 2048].fill(0);
    let rows = vec![write_artifact(d, "C0001", &good), write_artifact(d, "C0002", &broken)];
    let batch = write_batch(d, "batch.csv", &rows);
    let batch = batch.to_str().unwrap();

    assert_eq!(run(d, &["ledger", "register", "--project", "EAP1", "--from-batch", batch]).code, 0);
    let r = run(d, &["--json", "--output-root", "out", "stabilize", batch, "--batch-id", "B1"]);
    assert_eq!(r.code, 1, "{}", r.stderr);
    let outcomes = r.json();
    let status = |id: &str| {
        outcomes
            .as_array()
            .unwrap()
            .iter()
            .find(|o| o["carrier_id"] == id)
            .unwrap()["status"]
            .clone()
    };
    assert_eq!(status("C0001"), "closed-successful");
    assert_eq!(status("C0002"), "open-failed");
    assert!(d.join("out/EAP1/failed/C0002").is_dir());
    assert!(d.join("out/EAP1/derived/C0001/files/IMG/P001.TIF").is_file());
    assert_eq!(run(d, &["verify", "out/EAP1"]).code, 0);

    let log = fs::read_to_string(d.join("ledger/events.jsonl")).unwrap();
    assert_eq!(log.lines().filter(|l| l.contains("\"stabilization\"")).count(), 2);
    let status = run(d, &["ledger", "status", "C0002"]);
    assert!(status.stdout.contains("open-Failed") && status.stdout.contains("FailureInvestigation"));

    // Closed carriers are refused before anything runs.
    let again = run(d, &["--output-root", "out", "stabilize", batch]);
    assert_eq!(again.code, 2);
    assert!(again.stderr.contains("already closed-Successful"));
}

#[test]
fn stabilize_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let empty = write_batch(d, "empty.csv", &[]);
    assert_eq!(run(d, &["stabilize", empty.to_str().unwrap()]).code, 2);

    let rows = vec![write_artifact(d, "C1", &iso(1))];
    let batch = write_batch(d, "b.csv", &rows);
    let unknown = run(d, &["stabilize", batch.to_str().unwrap()]);
    assert_eq!(unknown.code, 2);
    assert!(unknown.stderr.contains("unknown carrier"));

    fs::create_dir_all(d.join("ledger")).unwrap();
    fs::write(d.join("ledger/.lock"), "1").unwrap();
    let locked = run(d, &["ledger", "register", "--project", "P", "--id", "C1"]);
    assert_eq!(locked.code, 2);
    assert!(locked.stderr.contains("locked"));
}

#[test]
fn verify_names_the_flipped_file() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::create_dir_all(d.join("tree/sub")).unwrap();
    fs::write(d.join("tree/a.txt"), "hello").unwrap();
    fs::write(d.join("tree/sub/b.bin"), [1u8, 2, 3]).unwrap();
    assert_eq!(run(d, &["bag", "tree", "bag"]).code, 0);
    assert_eq!(run(d, &["verify", "bag"]).code, 0);

    let mut bytes = fs::read(d.join("bag/data/sub/b.bin")).unwrap();
    bytes[1] ^= 0x10;
    fs::write(d.join("bag/data/sub/b.bin"), bytes).unwrap();
    let r = run(d, &["--json", "verify", "bag"]);
    assert_eq!(r.code, 1);
    let j = r.json();
    assert_eq!(j["mismatched"][0]["path"], "data/sub/b.bin");
    assert_eq!(j["clean"], false);
    golden("verify_mismatch", j, d);

    assert_eq!(run(d, &["verify", "tree"]).code, 2);
}

#[test]
fn ledger_commands_and_env_override() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    for _ in 0..3 {
        assert_eq!(run(d, &["ledger", "register", "--project", "EAP256", "--id", "EAP256/1/1"]).code, 0);
    }
    let s = run(d, &["--json", "ledger", "status", "EAP256/1/1#3"]);
    assert_eq!(s.code, 0);
    golden("ledger_status", s.json(), d);
    assert_eq!(run(d, &["ledger", "status", "EAP256/1/1#4"]).code, 2);

    let r = run(d, &["ledger", "batch", "create", "--id", "B1", "--order", "lifo", "EAP256/1/1", "EAP256/1/1#2", "EAP256/1/1#3"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let order = run(d, &["--json", "ledger", "order", "B1"]).json();
    assert_eq!(order["order"], serde_json::json!(["EAP256/1/1#3", "EAP256/1/1#2", "EAP256/1/1"]));

    let ev = run(d, &["ledger", "event", "--carrier", "EAP256/1/1", "--status", "open-Failed"]);
    assert_eq!(ev.code, 0, "{}", ev.stderr);
    assert_eq!(run(d, &["ledger", "event", "--carrier", "EAP256/1/1", "--status", "closed-Manual clone", "--output", "x.iso"]).code, 0);
    assert_eq!(run(d, &["ledger", "event", "--carrier", "EAP256/1/1", "--status", "open-Failed"]).code, 2);

    assert_eq!(run(d, &["ledger", "stage", "--project", "EAP256", "--stage", "Selected"]).code, 0);
    assert_eq!(run(d, &["ledger", "stage", "--project", "EAP256", "--stage", "Extracted"]).code, 2);

    fs::write(d.join("cand.csv"), "carrier_id,age_years,expected_bytes,demand_score\nold,30,700000000,0.5\nhdd,2,2000000000000,0.5\n").unwrap();
    let sel = run(d, &["--json", "ledger", "select", "cand.csv", "--w-risk", "0", "--w-gain", "1", "--w-demand", "0"]).json();
    assert_eq!(sel[0]["carrier_id"], "hdd");
    let staffing = run(d, &["--json", "ledger", "staffing", "--total-bytes", "100e12", "--bytes-per-person-year", "20e12"]).json();
    assert_eq!(staffing["person_years"], 5.0);

    let csv = fs::read_to_string(d.join("ledger/carriers.csv")).unwrap();
    assert!(csv.starts_with("carrier_id,project_id,box_id,order_in_box,location,custodian,status,disambiguation_suffix"));
    assert!(csv.contains("closed-Manual clone"));

    // The environment variable wins over --ledger-dir.
    let out = std::process::Command::new(BIN)
        .args(["--ledger-dir", "ignored", "ledger", "register", "--project", "P", "--id", "E1"])
        .current_dir(d)
        .env("CARRIERFORGE_LEDGER", d.join("envledger"))
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(d.join("envledger/events.jsonl").is_file());
    assert!(!d.join("ignored").exists());
}

#[test]
fn dry_run_touches_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let rows = vec![write_artifact(d, "C1", &iso(1)), write_artifact(d, "C2", &iso(1))];
    let batch = write_batch(d, "b.csv", &rows);
    let batch = batch.to_str().unwrap();
    assert_eq!(run(d, &["ledger", "register", "--project", "P", "--from-batch", batch]).code, 0);
    fs::write(d.join("foreign.txt"), format!("{} *C1\\x.iso\n", "AB".repeat(32))).unwrap();

    let before = tree_digest(d);
    let commands: Vec<Vec<&str>> = vec![
        vec!["--dry-run", "--output-root", "out", "stabilize", batch],
        vec!["--dry-run", "ledger", "register", "--project", "P", "--id", "C9"],
        vec!["--dry-run", "ledger", "event", "--carrier", "C1", "--status", "open-Failed"],
        vec!["--dry-run", "ledger", "stage", "--project", "P", "--stage", "Selected"],
        vec!["--dry-run", "ledger", "batch", "create", "--id", "B", "C1"],
        vec!["--dry-run", "bag", "C1", "bagged"],
        vec!["--dry-run", "forge", "--corpus", "--limit", "3", "--out", "fx"],
        vec!["--dry-run", "normalize", "foreign.txt", "--out", "canon.txt"],
    ];
    for args in &commands {
        let r = run(d, args);
        assert_eq!(r.code, 0, "{args:?}: {}", r.stderr);
    }
    assert_eq!(tree_digest(d), before);

    // Dedupe and merge need a stabilized project.
    assert_eq!(run(d, &["--output-root", "out", "stabilize", batch]).code, 0);
    let before = tree_digest(d);
    let r = run(d, &["--dry-run", "--json", "dedupe", "out/P", "--apply"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let records = r.json()["records"].clone();
    assert!(records.as_array().unwrap().iter().any(|rec| rec["kept_path"] == "masters/C1/carrier.iso"));
    assert_eq!(run(d, &["--dry-run", "merge", "out/P", "--into", "merged"]).code, 0);
    assert_eq!(tree_digest(d), before);

    assert_eq!(run(d, &["dedupe", "out/P", "--apply"]).code, 0);
    assert!(fs::read_to_string(d.join("out/P/masters/C2/carrier.iso")).unwrap().starts_with("DUPLICATE-OF:masters/C1/carrier.iso"));
    assert_eq!(run(d, &["verify", "out/P"]).code, 0);
    assert_eq!(run(d, &["merge", "out/P", "--into", "merged"]).code, 0);
    assert_eq!(run(d, &["verify", "merged"]).code, 0);
}

#[test]
fn normalize_writes_canonical_text() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("foreign.txt"), format!("{} *dir\\f.bin\r\n", "AB".repeat(32))).unwrap();
    let r = run(d, &["normalize", "foreign.txt"]);
    assert_eq!(r.code, 0);
    assert_eq!(r.stdout, format!("{}  dir/f.bin\n", "ab".repeat(32)).replace("  ", " "));
    fs::write(d.join("bad.txt"), "not-a-digest f.bin\n").unwrap();
    assert_eq!(run(d, &["normalize", "bad.txt"]).code, 1);
}

#[test]
fn help_and_bad_flags() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(tmp.path(), &["--help"]).code, 0);
    assert_eq!(run(tmp.path(), &["--bogus"]).code, 2);
    assert_eq!(run(tmp.path(), &["--workers", "0", "identify", "x"]).code, 2);
}
