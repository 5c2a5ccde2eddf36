use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_coopsim"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TOPOLOGY: &str = r#"
label = "t"
n_relays = 2
units = "db"
snr_sd = 0.0
snr_sr = [10.0, 5.0]
snr_rd = [5.0, 10.0]
"#;

#[test]
fn list_names_every_kind() {
    let o = bin().arg("list").output().unwrap();
    assert!(o.status.success());
    for k in ["outage_sweep", "fixed_modes", "adaptive_compare", "ensemble", "mac_compare"] {
        assert!(stdout(&o).contains(k), "{k} missing");
    }
}

#[test]
fn shipped_configs_validate() {
    for name in ["outage_sweep", "fixed_modes", "adaptive_compare", "ensemble", "mac_compare"] {
        let o = bin().arg("validate").arg(configs().join(format!("{name}.toml"))).output().unwrap();
        assert!(o.status.success(), "{name}: {}", stderr(&o));
        assert!(stdout(&o).starts_with(&format!("ok: {name}: ")), "{}", stdout(&o));
    }
}

#[test]
fn unknown_field_reports_line_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "kind = \"outage_sweep\"\n\n[outage_sweep]\ntopology = \"t.toml\"\nrate = 1.0\nks = [1]\nsnr_db = [0.0]\nbogus = 3\n").unwrap();
    let o = bin().arg("validate").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.toml:8:"), "{}", stderr(&o));
}

#[test]
fn invalid_parameter_names_block() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("t.toml"), TOPOLOGY).unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "kind = \"outage_sweep\"\n[outage_sweep]\ntopology = \"t.toml\"\nrate = 1.0\nks = [3]\nsnr_db = [0.0]\n").unwrap();
    let o = bin().arg("validate").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("invalid outage_sweep"), "{}", stderr(&o));

    std::fs::write(&cfg, "kind = \"mac_compare\"\n[mac_compare]\npackets = 10\n[mac_compare.params.spa]\nzeta = 2.0\n").unwrap();
    let o = bin().arg("validate").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("invalid SpaParams"), "{}", stderr(&o));
}

#[test]
fn missing_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "kind = \"outage_sweep\"\n[outage_sweep]\ntopology = \"absent.toml\"\nrate = 1.0\nks = [1]\nsnr_db = [0.0]\n").unwrap();
    let o = bin().arg("experiment").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("absent.toml"));
}

#[test]
fn unwritable_output_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let o = bin()
        .arg("--out-dir")
        .arg(blocker.join("sub"))
        .arg("experiment")
        .arg(configs().join("outage_sweep.toml"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn seed_flag_changes_randomized_outputs() {
    let run = |seed: &str| {
        let dir = tempfile::tempdir().unwrap();
        let o = bin()
            .args(["--seed", seed, "--out-dir"])
            .arg(dir.path())
            .arg("experiment")
            .arg(configs().join("adaptive_compare.toml"))
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        let manifest = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
        assert!(manifest.contains(&format!("\"seed\": {seed}")));
        std::fs::read(dir.path().join("runlog_spa.csv")).unwrap()
    };
    assert_eq!(run("5"), run("5"));
    assert_ne!(run("5"), run("6"));
}

#[test]
fn outage_subcommand_writes_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.toml");
    std::fs::write(&t, TOPOLOGY).unwrap();
    let out = dir.path().join("out");
    let o = bin()
        .arg("--out-dir")
        .arg(&out)
        .arg("outage")
        .arg(&t)
        .args(["--rate", "1", "--k", "1,2", "--snr-db", "-5,0,5"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("outage_sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 2);
    assert!(csv.starts_with("snr_db,k,subset,outage,method"));
}

#[test]
fn run_subcommand_writes_run_logs() {
    let out = tempfile::tempdir().unwrap();
    let o = bin()
        .arg("--out-dir")
        .arg(out.path())
        .arg("run")
        .arg("--schedule")
        .arg(configs().join("schedules/three_relays.toml"))
        .args(["--rate", "2", "--policies", "SPA,Fixed(R1)"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let log = std::fs::read_to_string(out.path().join("runlog_fixed_r1.csv")).unwrap();
    assert!(log.starts_with("frame_index,mode,category,phase,cumulative_switches"));
    assert_eq!(log.lines().count(), 1 + 5 * 172);
    assert!(log.lines().skip(1).all(|l| l.split(',').nth(1) == Some("R1")));
}

#[test]
fn run_subcommand_writes_single_log_to_out() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("spa.csv");
    let o = bin()
        .args(["run", "--policy", "SPA", "--rate", "2", "--seed", "3", "--schedule"])
        .arg(configs().join("schedules/three_relays.toml"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let log = std::fs::read_to_string(&out).unwrap();
    assert_eq!(log.lines().count(), 1 + 5 * 172);

    let o = bin()
        .args(["run", "--policies", "SPA,NRNM", "--rate", "2", "--schedule"])
        .arg(configs().join("schedules/three_relays.toml"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn ensemble_subcommand_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("summary.csv");
    let o = bin()
        .args(["ensemble", "--rate", "2", "--frames", "200", "--samples", "5", "--segment-len", "50", "--policies", "SPA,WRNM"])
        .arg("--topology")
        .arg(configs().join("topologies/near_source.toml"))
        .arg(configs().join("topologies/near_dest.toml"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("policy,avg_fer,fer_std_error,avg_switches,switches_std_error"));
    assert_eq!(csv.lines().count(), 1 + 3);
}

#[test]
fn mac_subcommand_replays_traces() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    // Packet 1: failure then cooperative success; packet 2: three failures, dropped.
    std::fs::write(&trace, "category\n2\n1\n2\n2\n2\n").unwrap();
    let paths = dir.path().join("paths.csv");
    let mut rows = String::from("path,hop,packet,attempt,success\n");
    for a in 0..5 {
        rows += &format!("S-D,0,0,{a},{}\n", u8::from(a == 1));
    }
    std::fs::write(&paths, rows).unwrap();
    let (out, genie_out) = (dir.path().join("coop.csv"), dir.path().join("genie.csv"));
    let o = bin()
        .arg("mac")
        .arg("--coop-trace")
        .arg(&trace)
        .arg("--path-traces")
        .arg(&paths)
        .arg("--out")
        .arg(&out)
        .arg("--genie-out")
        .arg(&genie_out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let coop = std::fs::read_to_string(&out).unwrap();
    assert_eq!(
        coop,
        "packet_index,delivered,attempts,delay_us,path_or_mode\n0,1,2,744,coop\n1,0,3,1116,coop\n"
    );
    let genie = std::fs::read_to_string(&genie_out).unwrap();
    assert_eq!(genie, "packet_index,delivered,attempts,delay_us,path_or_mode\n0,1,2,360,S-D\n");
}

#[test]
fn mac_subcommand_rejects_empty_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    std::fs::write(&trace, "category\n").unwrap();
    let o = bin().arg("mac").arg("--coop-trace").arg(&trace).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}
