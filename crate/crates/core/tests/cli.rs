//! End-to-end runs of the `ferrovolt` binary and the packaged cases. Every
//! run works on a temporary copy of the case directory.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ferrovolt::case;
use ferrovolt::config::CaseConfig;
use ferrovolt::postproc::write_csv_samples;

fn cases_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../cases")
}

fn copy_case(name: &str, into: &Path) -> PathBuf {
    let dst = into.join(name);
    std::fs::create_dir_all(&dst).unwrap();
    std::fs::copy(cases_dir().join(name).join("case.toml"), dst.join("case.toml")).unwrap();
    dst
}

fn ferrovolt(args: &[&str], dir: Option<&Path>) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ferrovolt"));
    c.args(args);
    if let Some(d) = dir {
        c.arg("--case").arg(d);
    }
    c.output().unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn check_lists_the_case1_regions() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = copy_case("case1", tmp.path());
    let out = ferrovolt(&["check"], Some(&dir));
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    assert!(stdout.contains("3 regions"), "{stdout}");
    for name in ["air", "magnet", "ferro"] {
        assert!(stdout.lines().any(|l| l.starts_with(name)), "{name} missing from\n{stdout}");
    }
}

#[test]
fn missing_mesh_file_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("case.toml"), "[mesh]\nfile = \"absent.msh\"\n[regions.air]\n").unwrap();
    let out = ferrovolt(&["check"], Some(tmp.path()));
    assert_eq!(out.status.code(), Some(4));
    assert!(text(&out.stderr).contains("absent.msh"));
}

#[test]
fn config_naming_an_absent_region_fails_with_its_name() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = copy_case("case1", tmp.path());
    let mut toml = std::fs::read_to_string(dir.join("case.toml")).unwrap();
    toml.push_str("\n[regions.coil]\ncurrent_density = [0.0, 0.0, 1.0e6]\n");
    std::fs::write(dir.join("case.toml"), toml).unwrap();
    let out = ferrovolt(&["check"], Some(&dir));
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("coil"), "{}", text(&out.stderr));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(ferrovolt(&[], None).status.code(), Some(1));
    assert_eq!(ferrovolt(&["verify", "no_such_case"], None).status.code(), Some(1));
    assert_eq!(ferrovolt(&["verify", "magnetized_cylinder", "--mesh", "hexagons"], None).status.code(), Some(1));
    assert_eq!(ferrovolt(&["--help"], None).status.code(), Some(0));
}

#[test]
fn sample_and_export_need_a_solved_state() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = copy_case("null", tmp.path());
    assert_eq!(ferrovolt(&["sample"], Some(&dir)).status.code(), Some(4));
    assert_eq!(ferrovolt(&["export"], Some(&dir)).status.code(), Some(4));
}

#[test]
fn identical_runs_write_identical_logs() {
    let tmp = tempfile::tempdir().unwrap();
    let mut logs = Vec::new();
    for run in ["a", "b"] {
        let dir = copy_case("case4-orthogonal", &tmp.path().join(run));
        let out = ferrovolt(&["solve", "--set", "outputs.vtk=false"], Some(&dir));
        assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
        logs.push(std::fs::read(dir.join("output/iterations.csv")).unwrap());
    }
    assert!(logs[0].len() > 100);
    assert_eq!(logs[0], logs[1]);
}

fn vtk_cell_count(path: &Path) -> usize {
    let s = std::fs::read_to_string(path).unwrap();
    assert!(s.starts_with("# vtk DataFile Version"));
    let line = s.lines().find(|l| l.starts_with("CELLS ")).unwrap();
    line.split_whitespace().nth(1).unwrap().parse().unwrap()
}

#[test]
fn case1_writes_region_and_combined_vtk() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = copy_case("case1", tmp.path());
    // a few iterations are enough for the file structure
    let out = ferrovolt(&["solve", "--set", "solver.max_outer_iterations=3"], Some(&dir));
    assert_eq!(out.status.code(), Some(3), "{}", text(&out.stderr));
    let o = dir.join("output");
    let regions: usize = ["air", "magnet", "ferro"].iter().map(|n| vtk_cell_count(&o.join(format!("solution_{n}.vtk")))).sum();
    assert_eq!(vtk_cell_count(&o.join("solution.vtk")), regions);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(o.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["cells"], regions);
    assert_eq!(summary["converged"], false);

    // export from the saved state reproduces the files
    let before = std::fs::read(o.join("solution.vtk")).unwrap();
    std::fs::remove_file(o.join("solution.vtk")).unwrap();
    let out = ferrovolt(&["export"], Some(&dir));
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert_eq!(std::fs::read(o.join("solution.vtk")).unwrap(), before);

    let csv = std::fs::read(o.join("path_by.csv")).unwrap();
    let out = ferrovolt(&["sample"], Some(&dir));
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(std::fs::read(o.join("path_by.csv")).unwrap(), csv);
}

#[test]
fn case2_centerline() {
    let dir = cases_dir().join("case2");
    let config = CaseConfig::load(&dir, &[]).unwrap();
    let mesh = case::build_mesh(&config, &dir).unwrap();
    let solved = case::solve(&config, &mesh).unwrap();
    assert_eq!(solved.summary.outcome, ferrovolt::magnetostatics::Outcome::Converged);
    let spec = config.samples.iter().find(|s| s.name == "centerline_by").unwrap();
    let table = case::run_sample(&mesh, &solved.fields, spec).unwrap();
    assert_eq!(table.rows.len(), 1001);

    // air, ferro, air, magnet, air from bottom to top
    let mut seq: Vec<&str> = Vec::new();
    for r in &table.rows {
        let name = r.region.as_deref().unwrap();
        if seq.last() != Some(&name) {
            seq.push(name);
        }
    }
    assert_eq!(seq, ["air", "ferro", "air", "magnet", "air"]);

    // B_y is the normal component at the four crossings, continuous up to
    // the offset between the two sampled centroids; outside the magnet's
    // poles it falls at about 2B/a, 0.1 T over one 5 mm cell
    let by: Vec<f64> = table.rows.iter().map(|r| r.value.unwrap().y).collect();
    let peak = by.iter().copied().fold(0.0, f64::max);
    for i in 1..by.len() {
        if table.rows[i].region != table.rows[i - 1].region {
            assert!((by[i] - by[i - 1]).abs() < 0.2 * peak, "jump {} at s = {}", by[i] - by[i - 1], table.rows[i].s);
        }
    }
    let magnet_max = table.rows.iter().zip(&by).filter(|(r, _)| r.region.as_deref() == Some("magnet")).map(|(_, b)| *b).fold(0.0, f64::max);
    assert_eq!(magnet_max, peak);
    assert!(table.rows.iter().zip(&by).filter(|(r, _)| r.region.as_deref() == Some("ferro")).all(|(_, b)| *b > 0.0));

    // the CSV matches the table row for row
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("centerline.csv");
    write_csv_samples(&table, "B", &path).unwrap();
    let csv = std::fs::read_to_string(&path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("s,x,y,z,B_x,B_y,B_z"));
    for (line, row) in lines.zip(&table.rows) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(v[0], row.s);
        assert_eq!(v[5], row.value.unwrap().y);
    }
}
