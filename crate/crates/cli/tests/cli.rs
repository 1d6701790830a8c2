//! End-to-end runs of the `uys` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use uys::data::{load_dataset, SchemaConfig};
use uys::design::DesignIndex;
use uys::weighted::{naive_weighted_uys_indexed, write_estimates, Domain, EstimateRecord};

const HEADER: &str = "person_id,cluster_id,stratum_id,weight,birth_year,years_completed,in_school,area_id,urban\n";

fn uys(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uys"))
        .current_dir(dir)
        .arg("--quiet")
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

/// Two cohorts, four clusters, a mix of finished and in-school respondents.
fn survey(dir: &Path) -> PathBuf {
    let mut body = HEADER.to_string();
    for j in 0..80 {
        let cohort = 1990 + j % 2;
        let years = [0, 2, 4, 5, 6, 6, 7, 8][j % 8];
        let in_school = u8::from(j % 13 == 0);
        let area = ["a", "b"][j / 40];
        body += &format!(
            "p{j},c{area}{},s1,{},{cohort},{years},{in_school},{area},{}\n",
            j % 4,
            1.0 + (j % 5) as f64 * 0.1,
            u8::from(j % 4 < 2)
        );
    }
    write(dir, "survey.csv", &body)
}

#[test]
fn expand_writes_one_row_per_grade_at_risk() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(
        dir.path(),
        "three.csv",
        &format!("{HEADER}p1,c1,s,1,1990,0,0,a,0\np2,c1,s,1,1990,3,1,a,0\np3,c2,s,2,1991,5,0,a,1\n"),
    );
    let o = uys(dir.path(), &["--out", "out", "expand", "--input", input.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = std::fs::read_to_string(dir.path().join("out/risk_rows.csv")).unwrap();
    // (0 + 1) + (3 + 0) + (5 + 1)
    assert_eq!(rows.lines().count() - 1, 10);
    assert!(dir.path().join("out/manifest.json").exists());
}

#[test]
fn malformed_and_empty_inputs_exit_with_ingestion_code() {
    let dir = tempfile::tempdir().unwrap();
    let missing = write(dir.path(), "missing.csv", "person_id,cluster_id\np1,c1\n");
    let o = uys(dir.path(), &["expand", "--input", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("stratum_id"), "{}", stderr(&o));

    let empty = write(dir.path(), "empty.csv", HEADER);
    let o = uys(dir.path(), &["expand", "--input", empty.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no records"), "{}", stderr(&o));
}

#[test]
fn naive_estimates_match_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let input = survey(dir.path());
    let o = uys(dir.path(), &["--out", "out", "estimate", "naive", "--input", input.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));

    let ds = load_dataset(&input, &SchemaConfig::default()).unwrap();
    let index = DesignIndex::from_records(ds.records());
    let records: Vec<EstimateRecord> = ds
        .cohorts()
        .into_iter()
        .map(|b| {
            let domain = Domain::cohort(b);
            let estimate = naive_weighted_uys_indexed(&ds, &domain, &index).unwrap();
            EstimateRecord { domain, estimate }
        })
        .collect();
    let mut expected = Vec::new();
    write_estimates(&records, &mut expected).unwrap();
    assert_eq!(std::fs::read(dir.path().join("out/estimates.csv")).unwrap(), expected);
}

#[test]
fn glm_separation_names_the_grade() {
    let dir = tempfile::tempdir().unwrap();
    // nobody leaves after completing one grade
    let mut body = HEADER.to_string();
    for j in 0..30 {
        body += &format!("p{j},c{},s,1,1990,{},0,a,0\n", j % 3, [0, 2, 3][j % 3]);
    }
    let input = write(dir.path(), "sep.csv", &body);
    let o = uys(dir.path(), &["estimate", "glm", "--input", input.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("grade 1"), "{}", stderr(&o));
}

#[test]
fn spatial_runs_repeat_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let input = survey(dir.path());
    let graph = write(dir.path(), "graph.csv", "area_a,area_b\na,b\n");
    let run = |out: &str| {
        let o = uys(
            dir.path(),
            &[
                "--seed",
                "3",
                "--out",
                out,
                "estimate",
                "spatial",
                "--input",
                input.to_str().unwrap(),
                "--graph",
                graph.to_str().unwrap(),
                "--draws",
                "50",
                "--burnin",
                "50",
                "--chains",
                "2",
            ],
        );
        assert!(o.status.success(), "{}", stderr(&o));
    };
    run("one");
    run("two");
    for f in ["draws.csv", "estimates.csv", "diagnostics.json"] {
        assert_eq!(
            std::fs::read(dir.path().join("one").join(f)).unwrap(),
            std::fs::read(dir.path().join("two").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn simulate_runs_and_rejects_bad_shifts() {
    let dir = tempfile::tempdir().unwrap();
    let o = uys(dir.path(), &["--out", "sim", "simulate", "--replicates", "1", "--estimators", "naive"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("sim/bias_table.csv").exists());

    let bad = write(
        dir.path(),
        "bad.json",
        r#"{"scenarios": [{"target_age_group": [25, 29], "shift": 11}]}"#,
    );
    let o = uys(dir.path(), &["simulate", "--scenarios", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

fn spatial_draws(dir: &Path, out: &str, draws: &str) {
    let input = survey(dir);
    let graph = write(dir, "graph.csv", "area_a,area_b\na,b\n");
    let o = uys(
        dir,
        &[
            "--out",
            out,
            "estimate",
            "spatial",
            "--urban-stratified",
            "--input",
            input.to_str().unwrap(),
            "--graph",
            graph.to_str().unwrap(),
            "--draws",
            draws,
            "--burnin",
            "30",
            "--chains",
            "1",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn report_checks_draw_counts() {
    let dir = tempfile::tempdir().unwrap();
    spatial_draws(dir.path(), "s20", "20");
    spatial_draws(dir.path(), "s25", "25");
    write(dir.path(), "all_urban.csv", "area_id,group,fraction\na,1990,1\n");
    let o = uys(
        dir.path(),
        &["--out", "rep", "report", "--urban-draws", "s20/draws_urban.csv", "--fractions", "all_urban.csv"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("rep/domain_summary.csv").exists());

    let mixed = write(dir.path(), "mixed.csv", "area_id,group,fraction\na,1990,0.5\n");
    let o = uys(
        dir.path(),
        &[
            "report",
            "--urban-draws",
            "s20/draws_urban.csv",
            "--rural-draws",
            "s25/draws_rural.csv",
            "--fractions",
            mixed.to_str().unwrap(),
        ],
    );
    assert_eq!(o.status.code(), Some(5), "{}", stderr(&o));
}
