use clap::Parser;
use ldpkm::artifacts::RunArtifacts;
use ldpkm::cli::{execute, Cli};
use ldpkm::experiment::read_rows;

fn cli(args: &[&str]) -> Cli {
    Cli::try_parse_from(std::iter::once("ldpkm").chain(args.iter().copied())).unwrap()
}

#[test]
fn run_writes_rows_and_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for alg in ["one-round", "low-error", "baseline"] {
        let ok = execute(cli(&["run", "--algorithm", alg, "--n", "400", "--d-prime", "3", "--k", "2", "--seeds", "1,2", "--artifacts", "--out", out])).unwrap();
        assert!(ok);
        let rows = read_rows(&dir.path().join(format!("runs-{alg}.csv"))).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.n == 400 && r.baseline_cost.is_finite()));
    }
    let art = RunArtifacts::read(&dir.path().join("artifacts-low-error-seed2.json")).unwrap();
    assert_eq!(art.seed, 2);
    assert_eq!(art.transcript.len(), 4);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.toml");
    std::fs::write(&path, "algorithm = \"one-round\"\nn = 300\nd_prime = 2\nk = 2\nseeds = [4]\n").unwrap();
    let Cli { command } = cli(&["verify", "--config", path.to_str().unwrap(), "--n", "500"]);
    let ldpkm::cli::Command::Verify(args) = command else { panic!() };
    let cfg = args.resolve().unwrap();
    assert_eq!((cfg.n, cfg.d_prime, cfg.seeds.clone()), (500, 2, vec![4]));
    assert!(ldpkm::verify::verify(&cfg).unwrap().passed());
}

#[test]
fn invalid_values_are_rejected() {
    let Cli { command } = cli(&["run", "--epsilon=-1"]);
    let ldpkm::cli::Command::Run(args) = command else { panic!() };
    assert!(args.resolve().is_err());
    assert!(Cli::try_parse_from(["ldpkm", "run", "--algorithm", "nope"]).is_err());
}

#[test]
fn binary_refuses_theory_builds() {
    // dev builds unify the test-only feature into the binary
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_ldpkm")).arg("--help").status().unwrap();
    assert_eq!(status.code(), Some(if ldpkm::THEORY_ENABLED { 2 } else { 0 }));
}
