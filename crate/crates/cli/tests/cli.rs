use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

fn dcgrid() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_dcgrid"));
    c.env("RUST_LOG", "error");
    c
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// A port nobody is listening on right now.
fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn value_after(text: &str, label: &str) -> f64 {
    let line = text.lines().find(|l| l.contains(label)).unwrap_or_else(|| panic!("no {label} in {text}"));
    line.split('=').nth(1).unwrap().split_whitespace().next().unwrap().parse().unwrap()
}

#[test]
fn size_prints_default_design() {
    let out = ok(dcgrid().arg("size").output().unwrap());
    assert!(out.contains("dI_L = 0.724638 A"), "{out}");
    assert!(out.contains("L    = 0.0442773 H"), "{out}");
    assert!(out.contains("C    = 0.0155000 F"), "{out}");
}

#[test]
fn size_scales_with_frequency() {
    let base = ok(dcgrid().arg("size").output().unwrap());
    let fast = ok(dcgrid().args(["size", "--f", "2000"]).output().unwrap());
    for label in ["L    =", "C    ="] {
        let (a, b) = (value_after(&base, label), value_after(&fast, label));
        assert!((a / b - 2.0).abs() < 1e-4, "{label} {a} vs {b}");
    }
}

#[test]
fn size_rejects_non_boost_rating() {
    let out = dcgrid().args(["size", "--v-in", "100", "--v-out", "69"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--v-out"));
}

#[test]
fn run_writes_deterministic_outputs() {
    let traces: Vec<Vec<u8>> = ["a", "b"]
        .iter()
        .map(|tag| {
            let dir = scratch(&format!("run_{tag}"));
            let stdout = ok(dcgrid()
                .arg("run")
                .arg(scenario("flex_disabled"))
                .args(["sim.duration=7200", "--plot", "--out"])
                .arg(&dir)
                .output()
                .unwrap());
            assert!(stdout.contains("deals"), "{stdout}");
            assert!(dir.join("flex_disabled.summary.txt").exists());
            assert!(std::fs::read_to_string(dir.join("flex_disabled.svg")).unwrap().starts_with("<svg"));
            std::fs::read(dir.join("flex_disabled.csv")).unwrap()
        })
        .collect();
    assert_eq!(traces[0], traces[1]);

    let text = String::from_utf8(traces[0].clone()).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&header[..8], ["t", "v_grid", "p_pv", "p_nonflex", "p_flex", "p_sc", "p_spill", "fault"]);
    assert_eq!(header.len(), 8 + 3 * 4);
    let flex = header.iter().position(|h| *h == "p_flex").unwrap();
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 7200);
    assert!(rows.iter().all(|r| r.split(',').nth(flex) == Some("0")));
}

#[test]
fn summarize_matches_run_summary() {
    let dir = scratch("summarize");
    ok(dcgrid()
        .arg("run")
        .arg(scenario("flex_partial"))
        .args(["sim.duration=3600", "--out"])
        .arg(&dir)
        .output()
        .unwrap());
    let written = std::fs::read_to_string(dir.join("flex_partial.summary.txt")).unwrap();
    let again = ok(dcgrid().arg("summarize").arg(dir.join("flex_partial.csv")).output().unwrap());
    assert!(!again.is_empty());
    assert!(written.contains(&again), "summary from trace differs:\n{again}\nvs\n{written}");
}

#[test]
fn missing_scenario_is_an_error() {
    let out = dcgrid().args(["run", "no/such/scenario"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no/such/scenario"));
}

#[test]
fn inject_without_listener_fails() {
    let port = free_port().to_string();
    let out = dcgrid()
        .args(["inject", "env.irradiance", "300", "--port", &port, "--timeout", "1"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains(&port));
}

struct Running(Child);

impl Drop for Running {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn inject(port: u16, path: &str, value: &str) -> Output {
    dcgrid()
        .args(["inject", path, value, "--port", &port.to_string()])
        .output()
        .unwrap()
}

#[test]
fn inject_reaches_a_live_run() {
    let port = free_port();
    let dir = scratch("live");
    let child = dcgrid()
        .arg("run")
        .arg(scenario("minimal"))
        .args(["sim.dt=0.05", "sim.duration=20", "--realtime", "--command-port", &port.to_string(), "--out"])
        .arg(&dir)
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let _guard = Running(child);

    let deadline = Instant::now() + Duration::from_secs(10);
    let first = loop {
        let out = inject(port, "env.irradiance", "300");
        if out.status.success() || Instant::now() > deadline {
            break out;
        }
        std::thread::sleep(Duration::from_millis(100));
    };
    assert!(ok(first).starts_with("ACK env.irradiance"));

    let refused = inject(port, "node.17.soc", "0.5");
    assert!(!refused.status.success());
    assert!(String::from_utf8_lossy(&refused.stderr).contains("ERR param"));
}

#[test]
fn serve_reports_a_taken_port() {
    let holder = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = holder.local_addr().unwrap().port();
    let out = dcgrid()
        .arg("serve")
        .arg(scenario("minimal"))
        .args(["--fast", "sim.duration=10", "nodes.count=1"])
        .arg(format!("interchange.base_port={port}"))
        .arg("--out")
        .arg(scratch("serve"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(&format!("cannot listen on port {port}")), "{err}");
}
