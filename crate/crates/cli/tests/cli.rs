use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn varsched(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_varsched")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn records(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

const TRACE: &str = "arrival,demand,sojourn,cost_demand,cost_deadline,known
0,2,4,,,
1,1,2,,,
1.5,3,5,,,
2,0.5,1,,,
6,2,3,,,
";

#[test]
fn generate_zero_rate_model_gives_header_only() {
    let dir = TempDir::new().unwrap();
    let model = write(dir.path(), "m.toml", "kind = \"stationary_poisson\"\nhorizon = 100\nrate = 0\n\n[marks]\ndemand = \"1\"\nsojourn = \"2\"\n");
    let out = dir.path().join("t.csv");
    let o = varsched(&["generate", "--model", s(&model), "--seed", "3", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 1);
}

#[test]
fn generate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let model = write(dir.path(), "m.toml", "kind = \"bernoulli_grid_ii\"\nhorizon = 500\nstep = 1\np = 0.2\ndemand_lo = 10\ndemand_hi = 20\nstretch_max = 2\n");
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for p in [&a, &b] {
        assert!(varsched(&["generate", "--model", s(&model), "--seed", "17", "--out", s(p)]).status.success());
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert!(records(&a).len() > 50);
}

#[test]
fn generated_distribution_i_matches_its_moments() {
    let dir = TempDir::new().unwrap();
    let model = write(
        dir.path(),
        "m.toml",
        "kind = \"bernoulli_grid_i\"\nhorizon = 50000\nstep = 1\np = 0.2\ndemand_lo = 10\ndemand_hi = 20\nlaxity_mean = 15\n",
    );
    let out = dir.path().join("t.csv");
    assert!(varsched(&["generate", "--model", s(&model), "--seed", "5", "--out", s(&out)]).status.success());
    let rows = records(&out);
    let n = rows.len() as f64;
    let col = |i: usize| rows.iter().map(|r| r[i].parse::<f64>().unwrap()).collect::<Vec<_>>();
    let (sigma, tau) = (col(1), col(2));
    let mean_sigma = sigma.iter().sum::<f64>() / n;
    let mean_lax = tau.iter().zip(&sigma).map(|(t, s)| t - s).sum::<f64>() / n;
    // Uniform[10,20] has sd 10/√12; exponential laxity has sd 15.
    assert!((mean_sigma - 15.0).abs() < 4.0 * (100.0f64 / 12.0).sqrt() / n.sqrt(), "{mean_sigma}");
    assert!((mean_lax - 15.0).abs() < 4.0 * 15.0 / n.sqrt(), "{mean_lax}");
    // p per unit step
    assert!((n / 50000.0 - 0.2).abs() < 4.0 * (0.2f64 * 0.8 / 50000.0).sqrt());
}

#[test]
fn compare_orders_exact_below_immediate() {
    let dir = TempDir::new().unwrap();
    let trace = write(dir.path(), "t.csv", TRACE);
    let out = dir.path().join("out");
    let o = varsched(&["compare", "--trace", s(&trace), "--policies", "exact,immediate", "--dt", "0.25", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = records(&out.join("results.csv"));
    let var = |p: &str| rows.iter().find(|r| &r[2] == p).unwrap()[3].parse::<f64>().unwrap();
    assert!(var("immediate") >= var("exact"));
    // offline is added as the default baseline
    assert!(rows.iter().any(|r| &r[2] == "offline"));
    for r in &rows {
        let base = rows.iter().find(|b| &b[2] == "offline" && b[0] == r[0]).unwrap();
        let ratio: f64 = r[9].parse().unwrap();
        let want = r[8].parse::<f64>().unwrap() / base[8].parse::<f64>().unwrap();
        assert!((ratio - want).abs() <= 1e-12 * want.abs().max(1.0));
    }
}

#[test]
fn ratio_against_self_is_one() {
    let dir = TempDir::new().unwrap();
    let model = write(dir.path(), "m.toml", "kind = \"bernoulli_grid_ii\"\nhorizon = 120\nstep = 1\np = 0.1\ndemand_lo = 10\ndemand_hi = 20\nstretch_max = 2\n");
    let out = dir.path().join("out");
    let o = varsched(&[
        "compare", "--model", s(&model), "--policies", "exact", "--ratio-against", "exact", "--seeds", "5", "--seed", "2", "--dt", "1", "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = records(&out.join("results.csv"));
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| &r[9] == "1"));
}

#[test]
fn compare_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let model = write(dir.path(), "m.toml", "kind = \"bernoulli_grid_ii\"\nhorizon = 100\nstep = 1\np = 0.1\ndemand_lo = 10\ndemand_hi = 20\nstretch_max = 2\n");
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = varsched(&[
            "compare", "--model", s(&model), "--policies", "exact,equal,mpc", "--seeds", "4", "--seed", "8", "--dt", "1", "--out", s(&out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        (fs::read(out.join("results.csv")).unwrap(), fs::read(out.join("summary.csv")).unwrap())
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn compare_reads_a_config_file() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "t.csv", TRACE);
    let cfg = write(
        dir.path(),
        "exp.toml",
        "[experiment]\ntrace = \"t.csv\"\npolicies = [\"ges\", \"edf\"]\ndt = 0.5\nC = [0.5, 2]\nratio_against = \"ges\"\nout = \"res\"\n\n[tuning]\ncapacity = [1, 2, 3]\n",
    );
    let o = varsched(&["compare", "--config", s(&cfg)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = records(&dir.path().join("res/results.csv"));
    assert!(rows.iter().any(|r| &r[2] == "edf@C=0.5,eps=inf"));
    assert!(rows.iter().filter(|r| r[2].starts_with("ges@")).all(|r| &r[9] == "1"));
}

#[test]
fn invalid_trace_exits_2() {
    let dir = TempDir::new().unwrap();
    let trace = write(dir.path(), "bad.csv", "arrival,demand,sojourn\n0,3,2\n");
    let o = varsched(&["simulate", "--trace", s(&trace), "--policy", "exact"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
    let o = varsched(&["simulate", "--trace", s(&trace), "--policy", "bogus"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unconverged_solver_exits_3_but_writes() {
    let dir = TempDir::new().unwrap();
    let trace = write(dir.path(), "t.csv", TRACE);
    let out = dir.path().join("rates.csv");
    let o = varsched(&["offline", "--trace", s(&trace), "--dt", "0.25", "--max-iters", "1", "--tol", "1e-14", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!records(&out).is_empty());
    let o = varsched(&["offline", "--trace", s(&trace), "--dt", "0.25", "--method", "wf"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("valley_filling=true"));
}

#[test]
fn simulate_writes_trace_and_metrics() {
    let dir = TempDir::new().unwrap();
    let trace = write(dir.path(), "t.csv", TRACE);
    let out = dir.path().join("cap.csv");
    let o = varsched(&["simulate", "--trace", s(&trace), "--policy", "ges", "--C", "1", "--dt", "0.1", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("t,P,X,U_cum,W_cum\n"));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("var_P=") && stdout.contains("policy=ges"));
    let o = varsched(&["simulate", "--trace", s(&trace), "--policy", "espc", "--mu", "1.5", "--dt", "0.1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn analyze_degenerate_model() {
    let dir = TempDir::new().unwrap();
    let model = write(dir.path(), "m.toml", "kind = \"stationary_poisson\"\nhorizon = 100\nrate = 2\n\n[marks]\ndemand = \"3\"\nsojourn = \"6\"\n");
    let o = varsched(&["analyze", "--model", s(&model)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("var_exact=3\n"), "{stdout}");
    assert!(stdout.contains("mean_P=6\n"));
    assert!(stdout.contains("var_x_exact=36\n"));
}

#[test]
fn maxstab_two_class_example() {
    let dir = TempDir::new().unwrap();
    let fluid = write(dir.path(), "f.csv", "arrival,demand,sojourn,mass\n0,1,3,1\n2,1,1,1\n");
    let out = dir.path().join("prof.csv");
    let o = varsched(&["maxstab", "--fluid", s(&fluid), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("peak=1\n") && stdout.contains("pareto=true"), "{stdout}");
    assert!(fs::read_to_string(&out).unwrap().starts_with("class_index,cell_start,cell_end,rate\n"));
    let o = varsched(&["maxstab", "--fluid", s(&fluid), "--qp", "0", "1", "--method", "wf"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}
