use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_lfnag");

fn lfnag(args: &[&str], scenario: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .arg(scenario)
        .env_remove("LFNAG_SEED")
        .output()
        .unwrap()
}

fn scenario(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

const QUADRATIC: &str =
    "[game]\nkind = \"quadratic-test\"\n\n[schedule]\nleader_period = 2\n\n[run]\nseed = 3\nhorizon = 500\n";

#[test]
fn validate_accepts_a_good_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let out = lfnag(&["validate"], &scenario(dir.path(), "q.toml", QUADRATIC));
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("2 followers"));
}

#[test]
fn config_errors_exit_with_2_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad = QUADRATIC.replace("horizon = 500", "horizon = 500\nhorizn = 3");
    let out = lfnag(&["validate"], &scenario(dir.path(), "bad.toml", &bad));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run.horizn"));

    let gossip_q = "[game]\nkind = \"quadratic-test\"\n\n[protocol]\nkind = \"gossip\"\nq = 0.5\n";
    let out = lfnag(&["validate"], &scenario(dir.path(), "g.toml", gossip_q));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_games_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let game = "adjacency = [[0, 1], [1, 0]]\nweights = [[0.0, 0.5], [0.5, 0.0]]\nleader_weights = [0.5, 0.5]\n\n\
        [leader]\nlower = [-1.0]\nupper = [1.0]\nown = [[10.0]]\naggregate = [[1.0]]\noffset = [0.0]\n\n\
        [[followers]]\nlower = [-1.0]\nupper = [1.0]\nown = [[5.0]]\naggregate = [[1.0]]\nleader = [[1.0]]\noffset = [-1.0]\n\n\
        [[followers]]\nlower = [-1.0]\nupper = [1.0]\nown = [[5.0]]\naggregate = [[1.0]]\nleader = [[1.0]]\noffset = [-1.0]\n";
    std::fs::write(dir.path().join("game.toml"), game).unwrap();
    let s = scenario(
        dir.path(),
        "c.toml",
        "[game]\nkind = \"custom\"\npath = \"game.toml\"\n\n[run]\nseed = 1\n",
    );
    let out = lfnag(&["validate"], &s);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn reference_non_convergence_exits_with_4() {
    let dir = tempfile::tempdir().unwrap();
    let body = QUADRATIC.replace(
        "horizon = 500",
        "horizon = 500\nreference_step = 0.01\nreference_max_iter = 3",
    );
    let out = lfnag(&["gne"], &scenario(dir.path(), "nc.toml", &body));
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn missing_files_exit_with_1() {
    let out = lfnag(&["run"], Path::new("/nonexistent/scenario.toml"));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn gne_check_and_mc_report() {
    let dir = tempfile::tempdir().unwrap();
    let mse = dir.path().join("mse.csv");
    let body = format!(
        "{}runs = 4\n\n[protocol]\nkind = \"bernoulli\"\np = 0.7\nq = 0.7\n\n[output]\nmse = {:?}\n",
        QUADRATIC, mse
    );
    let s = scenario(dir.path(), "mc.toml", &body);

    let out = lfnag(&["gne"], &s);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("x* = [0.169491525"));

    // kappa ~ 2 and delta = 0.7 here: the sufficient conditions fail
    let out = lfnag(&["check", "--pairs", "500"], &s);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("verdict: do not hold"), "{text}");
    let out = lfnag(&["check", "--pairs", "500", "--kappa", "1", "--delta", "1"], &s);
    assert!(String::from_utf8_lossy(&out.stdout).contains("verdict: hold"));
    assert!(text.contains("sufficient, not necessary"));

    let out = lfnag(&["mc"], &s);
    assert!(out.status.success());
    let lines = std::fs::read_to_string(&mse).unwrap().lines().count();
    assert_eq!(lines, 502);
}

#[test]
fn seed_override_changes_stochastic_runs() {
    let dir = tempfile::tempdir().unwrap();
    let traces: Vec<Vec<u8>> = ["1", "2"]
        .iter()
        .map(|seed| {
            let t = dir.path().join(format!("t{seed}.csv"));
            let body =
                format!("{QUADRATIC}\n[protocol]\nkind = \"bernoulli\"\np = 0.5\nq = 0.5\n\n[output]\ntrace = {t:?}\n");
            let s = scenario(dir.path(), &format!("s{seed}.toml"), &body);
            let out = Command::new(BIN)
                .arg("run")
                .arg(&s)
                .env("LFNAG_SEED", seed)
                .output()
                .unwrap();
            assert!(out.status.success());
            std::fs::read(&t).unwrap()
        })
        .collect();
    assert_ne!(traces[0], traces[1]);
}
