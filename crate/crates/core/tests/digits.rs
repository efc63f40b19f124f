//! The bundled handwritten-digit fixture through IDX loading and PCA.

use std::io::Read;
use std::path::{Path, PathBuf};

use ipc_core::tasks::{digits_task, read_idx_images, read_idx_labels, run_benchmark, BenchSystem};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

#[test]
fn fixture_has_the_expected_shape() {
    let x = read_idx_images(&fixture("digits-images-idx3-ubyte.gz")).unwrap();
    let y = read_idx_labels(&fixture("digits-labels-idx1-ubyte.gz")).unwrap();
    assert_eq!(x.shape(), (1797, 64));
    assert_eq!(y.len(), 1797);
    let mut counts = [0usize; 10];
    for &l in &y {
        counts[l] += 1;
    }
    assert!(counts.iter().all(|&c| c > 150), "{counts:?}");
    assert!(x.iter().all(|&v| (0.0..=255.0).contains(&v)));
}

#[test]
fn plain_and_gzipped_files_read_the_same() {
    let dir = tempfile::tempdir().unwrap();
    let gz = fixture("digits-labels-idx1-ubyte.gz");
    let mut raw = vec![];
    flate2::read::GzDecoder::new(std::fs::File::open(&gz).unwrap())
        .read_to_end(&mut raw)
        .unwrap();
    let plain = dir.path().join("labels-idx1-ubyte");
    std::fs::write(&plain, raw).unwrap();
    assert_eq!(
        read_idx_labels(&plain).unwrap(),
        read_idx_labels(&gz).unwrap()
    );
}

#[test]
fn pca_components_are_orthonormal_and_carry_their_variance() {
    let (task, t) = digits_task(
        &fixture("digits-images-idx3-ubyte.gz"),
        &fixture("digits-labels-idx1-ubyte.gz"),
        5,
    )
    .unwrap();
    assert_eq!(task.features.shape(), (1797, 5));
    assert!(task.features.iter().all(|v| v.abs() <= 1.0 + 1e-12));

    let gram = t.components.tr_mul(&t.components);
    assert!((gram - ipc_core::dataset::Matrix::identity(5, 5)).amax() < 1e-10);
    assert!(t.explained_variance.windows(2).all(|w| w[0] >= w[1]));
    assert!(t.explained_ratio > 0.3 && t.explained_ratio < 1.0);

    let x = read_idx_images(&fixture("digits-images-idx3-ubyte.gz")).unwrap();
    let z = t.project(&x);
    for (j, col) in z.column_iter().enumerate() {
        let mean = col.sum() / 1797.0;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 1797.0;
        assert!(mean.abs() < 1e-9);
        assert!(
            (var - t.explained_variance[j]).abs() < 1e-8 * var,
            "{var} vs {}",
            t.explained_variance[j]
        );
    }
}

#[test]
fn linear_readout_beats_chance_on_five_components() {
    let (task, _) = digits_task(
        &fixture("digits-images-idx3-ubyte.gz"),
        &fixture("digits-labels-idx1-ubyte.gz"),
        5,
    )
    .unwrap();
    let r = run_benchmark(&task, &BenchSystem::Identity, None, 5, 0).unwrap();
    assert!(r.mean > 0.5, "{}", r.mean);
}
