use std::io::Write;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gossipscope")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_str(stdout(o).trim()).expect("one JSON record")
}

#[test]
fn eval_reports_truth_and_bound() {
    let o = run(&[
        "eval", "--agents", "3", "--calltype", "p3,pushpull,before", "--bound", "4",
        "--seq", "a<>c;b<>c;a<>b", "--formula", "K[a]F[c,b]",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "true (bound 4)");
}

#[test]
fn eval_false_exits_one() {
    let o = run(&[
        "eval", "--calltype", "p3,pushpull,after", "--seq", "a<>c;b<>c;a<>b", "--formula", "K[a]F[c,b]",
        "--format", "json",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let v = json(&o);
    assert_eq!(v["result"], false);
    assert_eq!(v["bound"], 4);
    assert_eq!(v["calltype"], "p3,pushpull,after");
}

#[test]
fn oracle_flag_agrees_on_eval() {
    for flag in [None, Some("--oracle")] {
        let mut args = vec![
            "eval", "--calltype", "p2,pushpull,after", "--seq", "a<>c;b<>c;a<>b",
            "--formula", "K[c](Exp[a] & Exp[b])",
        ];
        args.extend(flag);
        assert_eq!(run(&args).status.code(), Some(0), "{flag:?}");
    }
}

#[test]
fn schedule_six_agents() {
    let o = run(&["schedule", "--agents", "6"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "a<>e;a<>f;a<>b;c<>d;a<>c;b<>d;a<>e;a<>f");
}

#[test]
fn indist_ignores_unobserved_outside_calls() {
    let args = [
        "indist", "--agents", "4", "--calltype", "p2,pushpull,after", "--bound", "3", "--agent", "a",
        "--seqA", "a<>b;b<>c", "--seqB", "a<>b;c<>d",
    ];
    let o = run(&args);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "true (bound 3)");
    let mut oracle = args.to_vec();
    oracle.push("--oracle");
    assert_eq!(run(&oracle).status.code(), Some(0));
}

#[test]
fn compare_names_witnesses() {
    let o = run(&[
        "compare", "--bound", "3", "--left", "p3,push,after", "--right", "p3,pull,after", "--format", "json",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    assert_eq!(v["command"], "compare");
    assert_eq!(v["verdict"], "Incomparable");
    assert_eq!(v["witnesses"].as_array().unwrap().len(), 2);
}

#[test]
fn verify_preorder_three_agents() {
    let o = run(&["verify-preorder", "--agents", "3", "--bound", "3", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    assert_eq!(v["matches"], true);
    assert_eq!(v["pairs"].as_array().unwrap().len(), 153);
}

#[test]
fn classes_lists_partition() {
    let o = run(&["classes", "--calltype", "p3,pushpull,after", "--bound", "2", "--agent", "c", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    let classes = v["classes"].as_array().unwrap();
    let total: usize = classes.iter().map(|c| c["members"].as_array().unwrap().len()).sum();
    // Six ordered calls over three agents: 1 + 6 + 36 sequences.
    assert_eq!(total, 43);
}

#[test]
fn protocol_file_both_semantics() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    writeln!(f, "agents: 3\ncalltype: p3,pushpull,after\nbound: 6\nrule (X,Y): !K[X]!!F[Y,X] -> X<>Y").unwrap();
    let path = f.path().to_str().unwrap();
    for semantics in ["naive", "fixpoint"] {
        let o = run(&["protocol", path, "--semantics", semantics, "--format", "json"]);
        assert_eq!(o.status.code(), Some(0), "{semantics}");
        let v = json(&o);
        assert_eq!(v["all_expert"], true);
        assert_eq!(v["bound_limited"], false);
        assert_eq!(v["bound"], 6);
    }
}

#[test]
fn errors_exit_two_with_position() {
    let o = run(&["eval", "--calltype", "p1,push,after", "--seq", "a>b", "--formula", "K[a]F[b"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("position"));

    let o = run(&["eval", "--calltype", "p1,push,after", "--seq", "a<>b", "--formula", "F[a,b]"]);
    assert_eq!(o.status.code(), Some(2));

    let o = run(&["eval", "--calltype", "p4,push,after", "--seq", "a>b", "--formula", "F[a,b]"]);
    assert_eq!(o.status.code(), Some(2));

    let o = run(&["protocol", "/nonexistent/protocol.txt"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn pair_budget_from_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_gossipscope"))
        .args(["classes", "--calltype", "p3,pushpull,after", "--agent", "a"])
        .env("GOSSIPSCOPE_PAIR_BUDGET", "10")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("budget"));
}
