use std::process::{Command, Output};

fn rcsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rcsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn small() -> Vec<&'static str> {
    vec![
        "--n_neurons",
        "10",
        "--train_len",
        "1500",
        "--test_len",
        "500",
        "--n_masks",
        "2",
    ]
}

#[test]
fn run_writes_csv_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let mut args = vec![
        "run",
        "--task",
        "narma10",
        "--output",
        out.to_str().unwrap(),
    ];
    args.extend(small());
    let o = rcsim(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let runs = std::fs::read_to_string(dir.path().join("r.runs.csv")).unwrap();
    assert!(runs.starts_with(
        "task,mask_id,seed,alpha,beta,rho,bias,dac_bits,readout_mode,pd_fn,metric,value\n"
    ));
    assert_eq!(runs.lines().count(), 3);
    assert!(runs.contains("narma10,1,42,0.95,0.8,0.003,"));
    let agg = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert!(agg.starts_with("param,value,mean,std,n\n"));
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    std::fs::write(
        &cfg,
        "task = channel\nseed = 7\nbeta = 0.3\nsweep.rho = 0.01,0.03\n",
    )
    .unwrap();
    let out = dir.path().join("s.csv");
    let mut args = vec![
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--beta",
        "0.25",
        "--output",
        out.to_str().unwrap(),
    ];
    args.extend(small());
    let o = rcsim(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let runs = std::fs::read_to_string(dir.path().join("s.runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 5);
    for line in runs.lines().skip(1) {
        assert!(line.starts_with("channel,"), "{line}");
        assert!(line.contains(",7,0.8,0.25,"), "{line}");
    }
    let agg = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    assert!(agg.contains("\nrho,0.01,") && agg.contains("\nrho,0.03,"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let out = dir.path().join(name);
        let mut args = vec![
            "sweep",
            "--sweep",
            "beta=0.1,0.2",
            "--output",
            out.to_str().unwrap(),
        ];
        args.extend(small());
        assert!(rcsim(&args).status.success());
        files.push(std::fs::read(out.with_extension("runs.csv")).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn hard_errors_exit_nonzero() {
    let bad = [
        vec!["run", "--alpha", "2"],
        vec!["run", "--pd_fn", "cubic"],
        vec!["run", "--config", "/nonexistent/exp.cfg"],
        vec!["sweep", "--n_masks", "1"],
        vec!["run", "--sweep", "beta=0.1,0.2"],
        vec!["table1", "--n_masks", "1"],
    ];
    for args in bad {
        let o = rcsim(&args);
        assert!(!o.status.success(), "{args:?} should fail");
        assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
    }
}

#[test]
fn divergent_run_exits_nonzero() {
    let mut args = vec!["run", "--lambda0", "10000", "--lambda_min", "10000"];
    args.extend(small());
    assert!(!rcsim(&args).status.success());
}

#[test]
fn help_lists_subcommands() {
    let o = rcsim(&["--help"]);
    let text = String::from_utf8_lossy(&o.stdout);
    for cmd in ["run", "sweep", "table1", "figures"] {
        assert!(text.contains(cmd));
    }
    let o = rcsim(&["run", "--help"]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("--dac_bits"));
}
