use std::path::Path;

use cadsketch::dataset_pipeline::{
    build_dataset, scan_corpus, train_count, validate_manifest, BuildConfig, CorpusLayout,
    DatasetError, DatasetManifest, Split, Violation, MANIFEST_FILE, TIMING_FILE,
};
use cadsketch::mesh_io::write_off;
use cadsketch::synthetic::{cuboid, toy_corpus, write_toy_corpus};

fn touch(path: &Path, text: &str) {
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(path, text).unwrap();
}

fn cube_off() -> String {
    write_off(&cuboid([1.0, 2.0, 0.5]))
}

fn config(seed: u64) -> BuildConfig {
    BuildConfig {
        seed,
        workers: Some(2),
        ..Default::default()
    }
}

#[test]
fn class_folders_are_scanned_in_order() {
    let dir = tempfile::tempdir().unwrap();
    for f in [
        "Nuts/n3.obj",
        "Nuts/n1.off",
        "Nuts/n2.STL",
        "Discs/d1.obj",
        "Discs/d2.off",
    ] {
        touch(&dir.path().join(f), "");
    }
    touch(&dir.path().join("Discs/readme.txt"), "");
    touch(&dir.path().join("stray.obj"), "");
    let entries = scan_corpus(dir.path(), CorpusLayout::ClassFolders).unwrap();
    let got: Vec<(&str, &str)> = entries
        .iter()
        .map(|e| (e.class.as_str(), e.model_id.as_str()))
        .collect();
    assert_eq!(
        got,
        [
            ("Discs", "d1"),
            ("Discs", "d2"),
            ("Nuts", "n1"),
            ("Nuts", "n2"),
            ("Nuts", "n3")
        ]
    );
}

#[test]
fn scan_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        scan_corpus(dir.path(), CorpusLayout::ClassFolders),
        Err(DatasetError::EmptyCorpus(_))
    ));
    touch(&dir.path().join("A/same.obj"), "");
    touch(&dir.path().join("A/same.off"), "");
    assert!(matches!(
        scan_corpus(dir.path(), CorpusLayout::ClassFolders),
        Err(DatasetError::DuplicateModelId { ref model_id, .. }) if model_id == "same"
    ));
}

#[test]
fn corpus_csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    touch(
        &dir.path().join("corpus.csv"),
        "model_id,class,mesh_path\n# comment\np1,plates,meshes/p1.off\n\np2,plates,meshes/p2.off\n",
    );
    let entries = scan_corpus(dir.path(), CorpusLayout::ManifestFile).unwrap();
    assert_eq!(entries.len(), 2);
    assert_eq!(entries[1].mesh_path, dir.path().join("meshes/p2.off"));

    touch(&dir.path().join("bad.csv"), "p1,plates\n");
    assert!(matches!(
        scan_corpus(&dir.path().join("bad.csv"), CorpusLayout::ManifestFile),
        Err(DatasetError::Parse { line: 1, .. })
    ));
}

#[test]
fn ten_models_split_eight_two_and_one_model_goes_to_train() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    for i in 0..10 {
        touch(&corpus.join(format!("bolts/b{i}.off")), &cube_off());
    }
    touch(&corpus.join("lonely/only.off"), &cube_off());
    let entries = scan_corpus(&corpus, CorpusLayout::ClassFolders).unwrap();
    let out = dir.path().join("out");
    let built = build_dataset(&entries, &out, &config(42)).unwrap();
    let m = &built.manifest;
    let count = |class: &str, split: Split| {
        m.entries
            .iter()
            .filter(|e| e.class == class && e.split == split)
            .count()
    };
    assert_eq!(
        (count("bolts", Split::Train), count("bolts", Split::Test)),
        (8, 2)
    );
    assert_eq!(
        (count("lonely", Split::Train), count("lonely", Split::Test)),
        (1, 0)
    );
    assert_eq!(train_count(10), 8);
    assert!(
        validate_manifest(m).is_empty(),
        "{:?}",
        validate_manifest(m)
    );

    // Layout on disk.
    for f in [
        "bolts/b3_view00.png",
        "bolts/b3_view19.png",
        "bolts/b3_repr.png",
        "bolts/b3_sketch.png",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let timing = std::fs::read_to_string(out.join(TIMING_FILE)).unwrap();
    assert!(timing.starts_with("class,count,mean_seconds,total_seconds\nbolts,10,"));
    assert_eq!(built.timing.per_class["lonely"].count, 1);

    // Manifest round-trips through its file.
    let loaded = DatasetManifest::load(&out.join(MANIFEST_FILE)).unwrap();
    assert_eq!(loaded.entries, m.entries);
    assert_eq!(loaded.header, m.header);
    assert_eq!(loaded.header.seed, 42);
    assert_eq!(loaded.class_index()["bolts"], 10);
}

#[test]
fn rebuild_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    write_toy_corpus(&toy_corpus(2, 5), &corpus).unwrap();
    let entries = scan_corpus(&corpus, CorpusLayout::ClassFolders).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    build_dataset(&entries, &a, &config(7)).unwrap();
    let single = BuildConfig {
        workers: Some(1),
        ..config(7)
    };
    build_dataset(&entries, &b, &single).unwrap();
    assert_eq!(
        std::fs::read(a.join(MANIFEST_FILE)).unwrap(),
        std::fs::read(b.join(MANIFEST_FILE)).unwrap()
    );
    for e in scan_corpus(&corpus, CorpusLayout::ClassFolders).unwrap() {
        for suffix in ["_view00.png", "_view11.png", "_repr.png", "_sketch.png"] {
            let rel = format!("{}/{}{}", e.class, e.model_id, suffix);
            assert_eq!(
                std::fs::read(a.join(&rel)).unwrap(),
                std::fs::read(b.join(&rel)).unwrap(),
                "{rel}"
            );
        }
    }
    assert!(!a.join("manifest.jsonl.tmp").exists());
}

#[test]
fn corrupt_mesh_is_isolated() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    write_toy_corpus(&toy_corpus(2, 1), &corpus).unwrap();
    touch(&corpus.join("box/broken.off"), "OFF\n3 1 0\n0 0 0\n1 0 0\n");
    let entries = scan_corpus(&corpus, CorpusLayout::ClassFolders).unwrap();
    assert_eq!(entries.len(), 7);
    let built = build_dataset(&entries, &dir.path().join("out"), &config(1)).unwrap();
    assert_eq!(built.manifest.entries.len(), 6);
    assert_eq!(built.failures().len(), 1);
    assert_eq!(built.failures()[0].model_id, "broken");
    assert!(
        built.failures()[0].error.contains("line"),
        "{}",
        built.failures()[0].error
    );
    let text = std::fs::read_to_string(dir.path().join("out").join(MANIFEST_FILE)).unwrap();
    assert!(text.lines().next().unwrap().contains("\"broken\""));
}

#[test]
fn validation_reports_damage() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    for i in 0..10 {
        touch(&corpus.join(format!("c/m{i}.off")), &cube_off());
    }
    let entries = scan_corpus(&corpus, CorpusLayout::ClassFolders).unwrap();
    let out = dir.path().join("out");
    let m = build_dataset(&entries, &out, &config(3)).unwrap().manifest;

    let sketch = m.resolve(&m.entries[4].sketch);
    std::fs::remove_file(&sketch).unwrap();
    assert_eq!(validate_manifest(&m), vec![Violation::MissingFile(sketch)]);

    // 70/30 instead of 80/20.
    let mut skewed = m.clone();
    let first_train = skewed
        .entries
        .iter()
        .position(|e| e.split == Split::Train)
        .unwrap();
    skewed.entries[first_train].split = Split::Test;
    let v = validate_manifest(&skewed);
    assert!(
        v.contains(&Violation::SplitRatio {
            class: "c".into(),
            train: 7,
            total: 10
        }),
        "{v:?}"
    );

    let mut doubled = m.clone();
    doubled.entries.push(doubled.entries[0].clone());
    assert!(validate_manifest(&doubled)
        .iter()
        .any(|x| matches!(x, Violation::DuplicateModelId(_))));

    let view = m.resolve(&m.entries[1].views[0]);
    cadsketch::GrayImage::filled(10, 10, 0)
        .save_png(&view)
        .unwrap();
    assert!(validate_manifest(&m)
        .iter()
        .any(|x| matches!(x, Violation::Dimensions { width: 10, .. })));
}
