use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cadsketch::dataset_pipeline::DatasetManifest;
use cadsketch::retrieval_engine::EVAL_CSV_HEADER;
use cadsketch::synthetic::{toy_corpus, write_toy_corpus};
use cadsketch::view_render::VIEW_COUNT;
use cadsketch::GrayImage;

fn run(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cadsketch"))
        .current_dir(cwd)
        .env_remove("CADSKETCH_WORKERS")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> Output {
    assert_eq!(code(&o), 0, "stderr: {}", stderr(&o));
    o
}

/// Six models, two per class.
fn corpus(root: &Path) -> PathBuf {
    let dir = root.join("corpus");
    write_toy_corpus(&toy_corpus(2, 3), &dir).unwrap();
    dir
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_owned()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(dir).unwrap().to_owned(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn dataset_build_index_query_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let corpus = corpus(t);
    let out = t.join("out");
    let o = ok(run(
        t,
        &["dataset-build", s(&corpus), "-o", s(&out), "--seed", "42"],
    ));
    assert!(stdout(&o).trim().ends_with("manifest.jsonl"));

    let m = DatasetManifest::load(&out.join("manifest.jsonl")).unwrap();
    assert_eq!(m.entries.len(), 6);
    assert_eq!(m.header.seed, 42);
    assert!(m.header.failures.is_empty());
    assert!(out.join("timing.csv").is_file());

    // Same seed, fresh directory: byte-identical artifacts.
    let again = t.join("again");
    ok(run(
        t,
        &[
            "dataset-build",
            s(&corpus),
            "-o",
            s(&again),
            "--seed",
            "42",
            "--workers",
            "2",
        ],
    ));
    let strip = |dir: &Path| {
        files(dir)
            .into_iter()
            .filter(|(p, _)| p != Path::new("timing.csv"))
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&out), strip(&again));

    let store = t.join("bag.cskn");
    let store2 = t.join("bag2.cskn");
    let manifest = out.join("manifest.jsonl");
    ok(run(
        t,
        &["index", "--manifest", s(&manifest), "-o", s(&store)],
    ));
    ok(run(
        t,
        &["index", "--manifest", s(&manifest), "-o", s(&store2)],
    ));
    assert_eq!(fs::read(&store).unwrap(), fs::read(&store2).unwrap());

    let sketch = out.join("box").join("box_00_sketch.png");
    let o = ok(run(
        t,
        &["query", s(&sketch), "--index", s(&store), "-k", "10"],
    ));
    let lines: Vec<String> = stdout(&o).lines().map(str::to_owned).collect();
    // k larger than the index returns every model once.
    assert_eq!(lines.len(), 6);
    let first: Vec<&str> = lines[0].split(',').collect();
    assert_eq!(first[0], "1");
    assert_eq!(first.len(), 4);
    let o = ok(run(
        t,
        &["query", s(&sketch), "--index", s(&store), "-k", "3"],
    ));
    assert_eq!(stdout(&o).lines().count(), 3);

    let o = ok(run(
        t,
        &[
            "evaluate",
            "--manifest",
            s(&manifest),
            "--index",
            s(&store),
            "-k",
            "10",
        ],
    ));
    let csv = stdout(&o);
    assert_eq!(csv.lines().next().unwrap(), EVAL_CSV_HEADER);
    assert_eq!(csv.lines().count(), 1 + 3 + 1);
    assert!(csv.lines().last().unwrap().starts_with("Overall,6,"));

    // Mismatched HOG settings against a stored index are a usage error.
    let o = run(
        t,
        &[
            "query",
            s(&sketch),
            "--index",
            s(&store),
            "--orientations",
            "9",
        ],
    );
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn dataset_build_without_seed_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = corpus(tmp.path());
    let o = run(tmp.path(), &["dataset-build", s(&corpus), "-o", "out"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("seed"));
}

#[test]
fn corrupt_mesh_fails_only_that_model() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let corpus = corpus(t);
    fs::write(
        corpus.join("torus").join("torus_01.obj"),
        "v 1 2\nf 1 2 9\n",
    )
    .unwrap();
    let out = t.join("out");
    let o = run(
        t,
        &["dataset-build", s(&corpus), "-o", s(&out), "--seed", "1"],
    );
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("torus_01"));
    let m = DatasetManifest::load(&out.join("manifest.jsonl")).unwrap();
    assert_eq!(m.entries.len(), 5);
    assert_eq!(m.header.failures.len(), 1);
    assert_eq!(m.header.failures[0].model_id, "torus_01");
}

#[test]
fn render_single_mesh_and_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let corpus = corpus(t);
    let mesh = corpus.join("sphere").join("sphere_00.obj");
    let out = t.join("views");
    let o = ok(run(t, &["render", s(&mesh), "-o", s(&out)]));
    assert!(stdout(&o).starts_with("sphere_00,"));
    let pngs = files(&out);
    assert_eq!(pngs.len(), VIEW_COUNT + 1);
    assert!(pngs
        .iter()
        .any(|(p, _)| p == Path::new("sphere_00_repr.png")));

    let o = run(t, &["render", s(&mesh), "-o", s(&out), "--size", "0"]);
    assert_eq!(code(&o), 2);
    let o = run(t, &["render", "nope.obj", "-o", s(&out)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("nope.obj"));
    let o = run(
        t,
        &["render", s(&mesh), "-o", s(&out), "--policy", "sideways"],
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn render_corpus_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let corpus = corpus(t);
    let out = t.join("views");
    let o = ok(run(
        t,
        &["render", s(&corpus), "-o", s(&out), "--size", "64"],
    ));
    assert_eq!(stdout(&o).lines().count(), 6);
    assert_eq!(files(&out).len(), 6 * (VIEW_COUNT + 1));
    let img = GrayImage::open(out.join("box").join("box_01_view07.png")).unwrap();
    assert_eq!(img.dimensions(), (64, 64));
}

#[test]
fn sketch_and_compare() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let corpus = corpus(t);
    let views = t.join("views");
    ok(run(
        t,
        &[
            "render",
            s(&corpus.join("box").join("box_00.obj")),
            "-o",
            s(&views),
            "--size",
            "192",
        ],
    ));

    let repr = views.join("box_00_repr.png");
    let o = ok(run(t, &["sketch", s(&repr)]));
    let line = stdout(&o);
    let (path, secs) = line.trim().rsplit_once(',').unwrap();
    assert!(path.ends_with("box_00_repr_sketch.png"));
    assert!(secs.parse::<f64>().unwrap() >= 0.0);
    let sketch = GrayImage::open(path).unwrap();
    assert!(sketch
        .pixels()
        .iter()
        .all(|&p| p == 255 || p == 0 || p >= 216 || p <= 39));

    // Directory mode, two operators as two methods.
    let gen = t.join("gen");
    for (method, op) in [("weighted-canny", "canny"), ("weighted-sobel", "sobel")] {
        let dir = gen.join(method);
        let o = ok(run(
            t,
            &["sketch", s(&views), "-o", s(&dir), "--operator", op],
        ));
        assert_eq!(stdout(&o).lines().count(), VIEW_COUNT + 1);
    }
    let reference = gen.join("weighted-canny");
    let o = ok(run(t, &["compare", s(&gen), s(&reference)]));
    let csv = stdout(&o);
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("weighted-canny,"));
    assert!(rows[2].starts_with("weighted-sobel,"));

    // A generated sketch without a reference is reported by name.
    let partial = t.join("partial");
    fs::create_dir_all(&partial).unwrap();
    fs::copy(
        reference.join("box_00_view00_sketch.png"),
        partial.join("box_00_view00.png"),
    )
    .unwrap();
    let o = run(t, &["compare", s(&reference), s(&partial)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("box_00_view01"));

    let empty = t.join("empty");
    fs::create_dir_all(&empty).unwrap();
    assert_eq!(code(&run(t, &["compare", s(&empty), s(&reference)])), 2);
    assert_eq!(code(&run(t, &["sketch", s(&repr), "--kernel", "4"])), 2);
}

#[test]
fn config_file_is_read_and_checked() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let corpus = corpus(t);
    let mesh = corpus.join("box").join("box_00.obj");

    fs::write(t.join("cadsketch.conf"), "# local\nrender_size = 48\n").unwrap();
    ok(run(t, &["render", s(&mesh), "-o", "v"]));
    let img = GrayImage::open(t.join("v").join("box_00_view00.png")).unwrap();
    assert_eq!(img.dimensions(), (48, 48));
    // Flags win over the file.
    ok(run(t, &["render", s(&mesh), "-o", "w", "--size", "40"]));
    let img = GrayImage::open(t.join("w").join("box_00_view00.png")).unwrap();
    assert_eq!(img.dimensions(), (40, 40));

    fs::write(t.join("bad.conf"), "render_size = 48\ncolour = blue\n").unwrap();
    let o = run(t, &["--config", "bad.conf", "render", s(&mesh), "-o", "x"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("bad.conf:2"));
}

#[test]
fn workers_from_environment_must_parse() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = corpus(tmp.path());
    let o = Command::new(env!("CARGO_BIN_EXE_cadsketch"))
        .current_dir(tmp.path())
        .env("CADSKETCH_WORKERS", "many")
        .args([
            "render",
            s(&corpus.join("box").join("box_00.obj")),
            "-o",
            "v",
        ])
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("workers"));
}

#[test]
fn help_lists_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ok(run(tmp.path(), &["dataset-build", "--help"]));
    let help = stdout(&o);
    for needle in [
        "[default: 0.15]",
        "[default: canny]",
        "[default: 256]",
        "[default: class-folders]",
    ] {
        assert!(help.contains(needle), "missing {needle}");
    }
    assert_eq!(code(&run(tmp.path(), &["frobnicate"])), 2);
}
