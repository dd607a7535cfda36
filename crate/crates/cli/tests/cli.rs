use std::process::{Command, Output};

fn vidorder(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_vidorder")).args(args).output().expect("run vidorder");
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

#[test]
fn exact_order_is_flagged_optimal() {
    let v = json(&vidorder(&["order", "--set-size", "8", "--algo", "exact", "--seed", "3"]));
    assert_eq!(v["optimal"], true);
    assert_eq!(v["list"].as_array().unwrap().len(), 8);
    let grdy = json(&vidorder(&["order", "--set-size", "8", "--algo", "grdy", "--seed", "3"]));
    assert!(v["max_delay_s"].as_f64().unwrap() <= grdy["max_delay_s"].as_f64().unwrap() + 1e-12);
}

#[test]
fn blocked_demo_drains_the_bucket() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("trace.csv");
    let svg = dir.path().join("trace.svg");
    let v = json(&vidorder(&[
        "simulate",
        "--demo",
        "blocked",
        "--out-csv",
        csv.to_str().unwrap(),
        "--out-svg",
        svg.to_str().unwrap(),
    ]));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut rows = text.lines();
    assert_eq!(rows.next(), Some("time_s,tokens_bits,phase"));
    let min = rows
        .map(|r| r.split(',').nth(1).unwrap().parse::<f64>().unwrap())
        .fold(f64::INFINITY, f64::min);
    assert_eq!(min, 0.0);
    assert_eq!(v["min_tokens_bits"], 0.0);
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));

    let inter = json(&vidorder(&["simulate", "--demo", "interleaved"]));
    assert!(inter["min_tokens_bits"].as_f64().unwrap() > 0.0);
    assert!(inter["report"]["max_delay_s"].as_f64().unwrap() < v["report"]["max_delay_s"].as_f64().unwrap());
}

#[test]
fn eval_is_reproducible() {
    let args = ["eval", "--sets", "32", "--set-size", "8", "--seed", "11", "--algo", "rand", "--algo", "grdy"];
    let a = vidorder(&args);
    let b = vidorder(&args);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(String::from_utf8_lossy(&a.stdout).lines().count(), 3);
}

#[test]
fn simulate_accepts_a_set_file_and_order() {
    let dir = tempfile::tempdir().unwrap();
    let set = dir.path().join("set.csv");
    std::fs::write(&set, "user_id,video_id,duration_s,bitrate_mbps,viewing_time_s\nu,a,20,2,1\nu,b,30,2,25\n").unwrap();
    let v = json(&vidorder(&["simulate", "--set", set.to_str().unwrap(), "--order", "1,0"]));
    assert_eq!(v["report"]["per_video"][0]["video_id"], "b");
}

#[test]
fn trains_and_orders_with_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("net.ck");
    let ck = ck.to_str().unwrap();
    let t = json(&vidorder(&["train", "--steps", "5", "--hidden", "8", "--set-size", "5", "--sharing", "nsac", "--out", ck]));
    assert!(t["final_critic_mse"].as_f64().unwrap().is_finite());
    let v = json(&vidorder(&["order", "--algo", "nsac", "--checkpoint", ck, "--set-size", "5"]));
    assert_eq!(v["algorithm"], "nsac");
    // the checkpoint is filed under its own mode
    let out = Command::new(env!("CARGO_BIN_EXE_vidorder"))
        .args(["eval", "--algo", "psac", "--checkpoint", ck, "--sets", "4"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn hardness_verifies_small_instances() {
    let v = json(&vidorder(&["hardness", "--m", "1", "--y", "2", "--verify"]));
    assert_eq!(v["holds"], true);
    assert_eq!(v["verdict"]["form_violations"], 0);
}

#[test]
fn rejects_bad_input() {
    for args in [
        &["order", "--algo", "psac"][..],
        &["simulate", "--demo", "blocked", "--order", "0,0,1,2,3,4,5,6"],
        &["eval", "--capacity-mbits", "2", "--initial-tokens-mbits", "3"],
        &["order", "--algo", "bogus"],
    ] {
        let out = Command::new(env!("CARGO_BIN_EXE_vidorder")).args(args).output().unwrap();
        assert!(!out.status.success(), "{args:?} should fail");
    }
}
