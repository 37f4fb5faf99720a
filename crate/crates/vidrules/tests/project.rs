use std::fs;

use vidrules::project::{Project, ProjectError};
use vidrules::run::{prepare_run, run_labeling};
use vidrules::synth::{write_project, Variant};

fn fixture() -> (tempfile::TempDir, Project) {
    let dir = tempfile::tempdir().unwrap();
    write_project(dir.path(), Variant::Base).unwrap();
    let p = Project::open(dir.path()).unwrap();
    (dir, p)
}

#[test]
fn save_then_open_round_trips() {
    let (dir, mut p) = fixture();
    assert_eq!(p.events.len(), 2);
    assert_eq!(p.ground_truth.as_ref().map(Vec::len), Some(4));
    p.manifest.markers.insert("v1".into(), vec![20, 45]);
    p.save().unwrap();
    let again = Project::open(dir.path()).unwrap();
    assert_eq!(again, p);
    assert!(dir.path().join("events.json").is_file());

    // The structured mirror alone is enough to reopen.
    fs::remove_file(dir.path().join("events.pdl")).unwrap();
    assert_eq!(Project::open(dir.path()).unwrap().events, p.events);
}

#[test]
fn rule_error_opens_read_only_and_blocks_runs() {
    let (dir, _) = fixture();
    fs::write(dir.path().join("events.pdl"), "event broken {\n  action \"serve\"\n  state s {\n    person P\n    contact(P, Q)\n  }\n}\n").unwrap();
    let mut p = Project::open(dir.path()).unwrap();
    assert!(p.is_read_only());
    assert!(p.diagnostics.iter().any(|d| d.is_error()));
    assert!(matches!(prepare_run(&p, None), Err(ProjectError::RuleErrors(_))));
    assert!(matches!(run_labeling(&mut p, None), Err(ProjectError::RuleErrors(_))));
    assert!(matches!(p.save(), Err(ProjectError::RuleErrors(_))));
    assert!(fs::read_dir(dir.path().join("runs")).unwrap().next().is_none());

    // Syntax errors keep their position.
    fs::write(dir.path().join("events.pdl"), "event e {\n  action \"a\"\n  stat s {}\n}\n").unwrap();
    let p = Project::open(dir.path()).unwrap();
    assert!(p.is_read_only());
    assert_eq!(p.diagnostics[0].line, Some(3));
}

#[test]
fn missing_runs_directory_is_created() {
    let (dir, _) = fixture();
    let runs = dir.path().join("runs");
    fs::remove_dir_all(&runs).unwrap();
    Project::open(dir.path()).unwrap();
    assert!(runs.is_dir());
}

#[test]
fn invalid_rules_leave_the_project_unchanged() {
    let (dir, mut p) = fixture();
    let before = fs::read(dir.path().join("events.pdl")).unwrap();
    let err = p.set_rules("event x { action \"a\" state s { person P  dir(P -> Q) in [0 deg, 10 deg] } }").unwrap_err();
    assert!(matches!(err, ProjectError::RuleErrors(_)));
    assert_eq!(p.events.len(), 2);
    assert_eq!(fs::read(dir.path().join("events.pdl")).unwrap(), before);

    p.set_rules(vidrules::synth::FRONT_SERVE).unwrap();
    assert_eq!(Project::open(dir.path()).unwrap().events.len(), 1);
}

#[test]
fn wrong_manifest_version_is_rejected() {
    let (dir, _) = fixture();
    let path = dir.path().join("manifest.json");
    let text = fs::read_to_string(&path).unwrap().replacen("\"version\": 1", "\"version\": 7", 1);
    fs::write(&path, text).unwrap();
    let err = Project::open(dir.path()).unwrap_err().to_string();
    assert!(err.contains('7'), "{err}");
}
