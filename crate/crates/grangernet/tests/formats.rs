use std::fs;
use std::path::Path;

use grangernet::checkpoint::{self, Checkpoint};
use grangernet::io::{self, ManifestEntry, Phenotype};
use grangernet::Error;
use grangernet_core::data::{qc_filter, Dataset, Label, RoiTimeSeries};
use grangernet_core::model::{ModelConfig, NetworkParams};
use grangernet_core::{rng, Matrix};
use proptest::prelude::*;

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn finite_matrix() -> impl Strategy<Value = Matrix> {
    use proptest::num::f64::{NEGATIVE, NORMAL, POSITIVE, SUBNORMAL, ZERO};
    (1usize..6, 1usize..12).prop_flat_map(|(n, t)| {
        prop::collection::vec(NORMAL | SUBNORMAL | ZERO | POSITIVE | NEGATIVE, n * t).prop_map(move |v| Matrix::from_vec(n, t, v).unwrap())
    })
}

proptest! {
    #[test]
    fn subject_files_round_trip_exactly(x in finite_matrix(), header in any::<bool>()) {
        let names: Vec<String> = (0..x.rows()).map(|i| format!("roi_{i}")).collect();
        let text = io::format_subject(&x, header.then_some(names.as_slice()));
        let back = io::parse_subject(&text, x.rows(), Path::new("mem")).unwrap();
        let bits = |m: &Matrix| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&x));
        prop_assert_eq!(back.shape(), x.shape());
    }
}

#[test]
fn load_subject_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "s.csv", "1,2\n3,4\n5,6\n");
    let m = io::load_subject(&p, 2).unwrap();
    assert_eq!(m, Matrix::from_rows(&[[1.0, 3.0, 5.0], [2.0, 4.0, 6.0]]).unwrap());
    assert!(matches!(io::load_subject(&dir.path().join("missing.csv"), 2), Err(Error::Io { .. })));
}

#[test]
fn phenotypes_map_abide_codes_and_missing_fd() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "pheno.csv",
        "SITE_ID,SUB_ID,DX_GROUP,func_mean_fd,motion\nA,50002,1,0.12,x\nA,50003,2,-9999,y\nB,50004,2,,z\n",
    );
    let rows = io::load_phenotypes(&p, "func_mean_fd").unwrap();
    assert_eq!(
        rows,
        [
            Phenotype {
                subject_id: "50002".into(),
                label: Label::Asd,
                mean_fd: Some(0.12)
            },
            Phenotype {
                subject_id: "50003".into(),
                label: Label::Control,
                mean_fd: None
            },
            Phenotype {
                subject_id: "50004".into(),
                label: Label::Control,
                mean_fd: None
            },
        ]
    );
    let rows = io::load_phenotypes(&p, "motion");
    assert!(rows.is_ok_and(|r| r.iter().all(|p| p.mean_fd.is_none())));
    assert!(matches!(io::load_phenotypes(&p, "fd"), Err(Error::Format { .. })));

    let bad = write(dir.path(), "bad.csv", "SUB_ID,DX_GROUP,func_mean_fd\n1,3,0.1\n");
    assert!(matches!(io::load_phenotypes(&bad, "func_mean_fd"), Err(Error::Format { line: 2, .. })));
}

#[test]
fn phenotype_writer_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let rows = vec![
        Phenotype {
            subject_id: "a".into(),
            label: Label::Asd,
            mean_fd: Some(0.0),
        },
        Phenotype {
            subject_id: "b".into(),
            label: Label::Control,
            mean_fd: Some(0.151),
        },
    ];
    let p = dir.path().join("p.csv");
    io::write_phenotypes(&p, &rows).unwrap();
    assert_eq!(io::load_phenotypes(&p, io::DEFAULT_FD_COLUMN).unwrap(), rows);
}

#[test]
fn manifest_paths_resolve_against_manifest_dir() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "m.csv", "subject_id,path\ns1,sub/s1.csv\ns2,/abs/s2.csv\n");
    let m = io::load_manifest(&p).unwrap();
    assert_eq!(
        m,
        [
            ManifestEntry {
                subject_id: "s1".into(),
                path: dir.path().join("sub/s1.csv")
            },
            ManifestEntry {
                subject_id: "s2".into(),
                path: "/abs/s2.csv".into()
            },
        ]
    );
}

fn tiny_dataset() -> Dataset {
    let subjects = [(0.10, Label::Asd), (0.15, Label::Control), (0.151, Label::Asd)]
        .iter()
        .enumerate()
        .map(|(i, &(fd, label))| RoiTimeSeries {
            subject_id: format!("s{i}"),
            label,
            mean_fd: Some(fd),
            x: Matrix::from_vec(2, 4, (0..8).map(|v| (v * (i + 1)) as f64 * 0.25).collect()).unwrap(),
        })
        .collect();
    Dataset::new(subjects, vec!["left".into(), "right".into()]).unwrap()
}

#[test]
fn dataset_directory_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let d = tiny_dataset();
    let manifest = io::write_dataset(dir.path(), &d).unwrap();
    let atlas = io::load_atlas(&dir.path().join("atlas.csv")).unwrap();
    let back = io::load_dataset(&manifest, &dir.path().join("phenotypes.csv"), io::DEFAULT_FD_COLUMN, atlas).unwrap();
    assert_eq!(back, d);
    let kept = qc_filter(&back, 0.15).unwrap();
    assert_eq!(kept.subjects.iter().map(|s| s.subject_id.as_str()).collect::<Vec<_>>(), ["s0", "s1"]);
}

#[test]
fn dataset_loading_reports_missing_phenotype_and_width() {
    let dir = tempfile::tempdir().unwrap();
    let d = tiny_dataset();
    let manifest = io::write_dataset(dir.path(), &d).unwrap();
    let pheno = write(dir.path(), "few.csv", "SUB_ID,DX_GROUP,func_mean_fd\ns0,1,0.1\n");
    let atlas = vec!["left".to_string(), "right".to_string()];
    let err = io::load_dataset(&manifest, &pheno, io::DEFAULT_FD_COLUMN, atlas).unwrap_err();
    assert!(err.to_string().contains("no phenotype row"), "{err}");

    let three = vec!["a".to_string(), "b".to_string(), "c".to_string()];
    let err = io::load_dataset(&manifest, &dir.path().join("phenotypes.csv"), io::DEFAULT_FD_COLUMN, three).unwrap_err();
    assert!(matches!(err, Error::Core(grangernet_core::Error::Shape(_))), "{err}");
}

#[test]
fn atlas_indices_must_count_up() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "a.csv", "index,name\n0,a\n2,b\n");
    assert!(matches!(io::load_atlas(&p), Err(Error::Format { line: 3, .. })));
}

fn params() -> NetworkParams {
    let cfg = ModelConfig {
        n_channels: 3,
        hidden: 4,
        heads: 2,
        lag: 1,
    };
    NetworkParams::init(cfg, &mut rng::seeded(5)).unwrap()
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let p = params();
    let path = dir.path().join("ck.json");
    checkpoint::save(&path, &p, 42).unwrap();
    let (back, seed) = checkpoint::load(&path).unwrap();
    assert_eq!(seed, 42);
    assert_eq!(back.config, p.config);
    for (a, b) in back.tensors().iter().zip(p.tensors()) {
        let bits = |m: &Matrix| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a), bits(b));
    }
}

#[test]
fn checkpoint_rejects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.json");
    let mut ck = Checkpoint::new(&params(), 0);

    ck.version = 99;
    fs::write(&path, serde_json::to_string(&ck).unwrap()).unwrap();
    assert!(matches!(checkpoint::load(&path), Err(Error::Checkpoint { .. })));

    ck.version = checkpoint::VERSION;
    ck.tensors.pop();
    fs::write(&path, serde_json::to_string(&ck).unwrap()).unwrap();
    let err = checkpoint::load(&path).unwrap_err();
    assert!(err.to_string().contains("missing"), "{err}");

    let mut ck = Checkpoint::new(&params(), 0);
    ck.tensors[0].rows += 1;
    fs::write(&path, serde_json::to_string(&ck).unwrap()).unwrap();
    assert!(matches!(checkpoint::load(&path), Err(Error::Checkpoint { .. })));

    fs::write(&path, "{\"format\": 1}").unwrap();
    assert!(matches!(checkpoint::load(&path), Err(Error::Json { .. })));
}
