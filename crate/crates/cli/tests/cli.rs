use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lastiter(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lastiter"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn schedule_dump_writes_phases() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    let o = lastiter(&["schedule", "dump", "--family", "weak_modified", "--T", "16", "--C", "4", "--out", path(&out)]);
    assert!(o.status.success());
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,alpha,phase");
    assert_eq!(lines.len(), 17);
    assert_eq!(lines[1], "1,1e0,0");
    assert!(lines[16].ends_with(",4"));
    let o = lastiter(&["schedule", "dump", "--family", "harmonic", "--T", "3", "--lambda", "1"]);
    assert!(stdout(&o).lines().nth(1).unwrap().ends_with(",-1"));
}

#[test]
fn generated_problem_file_feeds_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("lasso.csv");
    let o = lastiter(&["problem", "gen", "--kind", "lasso", "--d", "6", "--s", "2", "--n", "5", "--seed", "3", "--out", path(&data)]);
    assert!(o.status.success());
    let text = fs::read_to_string(&data).unwrap();
    let header: serde_json::Value = serde_json::from_str(text.lines().next().unwrap().trim_start_matches("# ")).unwrap();
    assert_eq!(header["kind"], "lasso");
    assert_eq!(header["seed"], 3);
    assert_eq!(text.lines().count(), 1 + 5 + 1);
    assert!(text.lines().skip(1).all(|l| l.split(',').count() == 6 || l.split(',').count() == 5));

    let from_file = lastiter(&["run", "--problem", path(&data), "--schedule", "weak_modified", "--T", "32"]);
    let from_spec = lastiter(&["run", "--problem", "lasso:d=6,s=2,n=5,seed=3", "--schedule", "weak_modified", "--T", "32"]);
    assert!(from_file.status.success(), "{}", String::from_utf8_lossy(&from_file.stderr));
    assert_eq!(stdout(&from_file), stdout(&from_spec));
    assert!(stdout(&from_file).contains("t,objective,subopt"));
}

#[test]
fn ensemble_output_ignores_thread_count() {
    let run = |threads: &str| {
        stdout(&lastiter(&[
            "run", "--problem", "absquad", "--schedule", "strong_modified", "--T", "200", "--n-seeds", "50",
            "--threads", threads,
        ]))
    };
    let one = run("1");
    assert!(one.starts_with("t,mean_subopt,stderr,n_seeds"));
    assert_eq!(one, run("3"));
}

#[test]
fn experiment_reproduces_from_its_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    fs::write(
        &cfg,
        "# small svm\nproblem = svm:d=5,n=40,seed=1\nmethod = harmonic@last\nmethod = strong_modified@last\nmethod = harmonic@suffix_quarter\nT = 256\nn_seeds = 4\nstride = 64\n",
    )
    .unwrap();
    let first = dir.path().join("a.csv");
    let o = lastiter(&["experiment", "--config", path(&cfg), "--out", path(&first)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&first).unwrap();
    assert!(text.contains("method,t,mean_objective,stderr,n_seeds"));
    assert_eq!(text.lines().filter(|l| l.starts_with("harmonic@last,")).count(), 5);

    // The comment header is itself a valid config.
    let header: String = text.lines().take_while(|l| l.starts_with('#')).skip(1).map(|l| format!("{}\n", &l[2..])).collect();
    let cfg2 = dir.path().join("again.cfg");
    fs::write(&cfg2, header).unwrap();
    let second = dir.path().join("b.csv");
    assert!(lastiter(&["experiment", "--config", path(&cfg2), "--out", path(&second)]).status.success());
    assert_eq!(text, fs::read_to_string(&second).unwrap());

    // Flags override the file.
    let o = lastiter(&["experiment", "--config", path(&cfg), "--n-seeds", "2"]);
    assert!(stdout(&o).contains(",2\n"));

    let svg = dir.path().join("fig.svg");
    assert!(lastiter(&["figure", "--input", path(&first), "--log-y", "--out", path(&svg)]).status.success());
    let svg = fs::read_to_string(svg).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 3);
}

#[test]
fn config_errors_report_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "problem = svm\nmethod = harmonic\nT = many\n").unwrap();
    let o = lastiter(&["experiment", "--config", path(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn certify_exit_codes() {
    let o = lastiter(&["certify", "--suite", "breakpoints"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("check,params,lhs,rhs,margin,pass"));
    assert!(text.lines().skip(1).all(|l| l.ends_with(",true")));
    let o = lastiter(&["certify", "--suite", "kappa", "--configs", "50", "--T", "500"]);
    assert!(o.status.success());
    let o = lastiter(&["certify", "--suite", "lookahead", "--problem", "lasso:d=10,s=3,n=8", "--T", "256"]);
    assert!(o.status.success(), "{}", stdout(&o));
}

#[test]
fn lowerbound_csv_schemas() {
    for (args, header) in [
        (vec!["recursion", "--T", "50"], "t,expected_sq,lower_bound"),
        (vec!["drift", "--T", "20", "--n-seeds", "50"], "t,mean_abs,half_min_1_gamma"),
        (vec!["events", "--k-max", "6", "--trials", "2000"], "k,p_akc_hat,ci_lo,ci_hi,oracle"),
        (vec!["trichotomy", "--sequence", "power:p=0.5", "--K", "12"], "k,eta,lambda,flags"),
    ] {
        let mut full = vec!["lowerbound"];
        full.extend(args);
        let o = lastiter(&full);
        assert!(o.status.success(), "{full:?}");
        assert_eq!(stdout(&o).lines().next().unwrap(), header);
    }
    let o = lastiter(&["lowerbound", "trichotomy", "--sequence", "harmonic", "--K", "12"]);
    assert!(stdout(&o).lines().last().unwrap().ends_with(",bad_almost_surely"));
}

#[test]
fn failed_checks_exit_nonzero() {
    let o = lastiter(&[
        "ratefit", "--problem", "quad", "--grid", "6:9", "--n-seeds", "100", "--expect-slope", "0.5:1",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = lastiter(&["ratefit", "--problem", "quad", "--grid", "6:9", "--n-seeds", "100", "--require-bound"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("T,mean_subopt,stderr,bound,ratio,used"));
}

#[test]
fn figure_rejects_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("empty.csv");
    fs::write(&csv, "method,t,mean_objective,stderr,n_seeds\n").unwrap();
    let o = lastiter(&["figure", "--input", path(&csv)]);
    assert_eq!(o.status.code(), Some(2));
}
