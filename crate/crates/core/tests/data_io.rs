use ndarray::Array2;
use snrloss::data_io::{
    encode_idx_images, encode_idx_labels, epoch_batches, load_idx, parse_idx_images, parse_idx_labels, split_and_batch,
    synth_blobs, write_bytes, Dataset, IdxImages,
};
use snrloss::Error;
use std::collections::HashSet;
use std::path::PathBuf;

fn tiny_images() -> IdxImages {
    IdxImages { count: 3, rows: 2, cols: 2, pixels: vec![0, 255, 128, 1, 2, 3, 4, 5, 250, 251, 252, 253] }
}

#[test]
fn idx_round_trip_plain_and_gzip() {
    let dir = tempfile::tempdir().unwrap();
    let images = tiny_images();
    for gzip in [false, true] {
        let (ip, lp) = (dir.path().join(format!("i{gzip}")), dir.path().join(format!("l{gzip}")));
        write_bytes(&ip, &encode_idx_images(&images).unwrap(), gzip).unwrap();
        write_bytes(&lp, &encode_idx_labels(&[2, 0, 1]), gzip).unwrap();
        let ds = load_idx(&ip, &lp).unwrap();
        assert_eq!((ds.len(), ds.features(), ds.class_count()), (3, 4, 3));
        assert_eq!(ds.labels(), &[2, 0, 1]);
        // pixels scaled to [0, 1]
        assert_eq!(ds.inputs()[[0, 1]], 1.0);
        assert_eq!(ds.inputs()[[0, 0]], 0.0);
        assert!((ds.inputs()[[0, 2]] - 128.0 / 255.0).abs() < 1e-15);
    }
}

#[test]
fn parse_rejects_bad_magic_and_truncation() {
    let mut bytes = encode_idx_images(&tiny_images()).unwrap();
    assert_eq!(parse_idx_images(&bytes).unwrap(), tiny_images());
    assert!(matches!(parse_idx_labels(&bytes), Err(Error::Format(_))));
    assert!(matches!(parse_idx_images(&bytes[..10]), Err(Error::Format(_))));
    assert!(matches!(parse_idx_images(&bytes[..bytes.len() - 1]), Err(Error::Format(_))));
    bytes[3] = 0x01;
    assert!(matches!(parse_idx_images(&bytes), Err(Error::Format(_))));

    let labels = encode_idx_labels(&[1, 2, 3]);
    assert!(matches!(parse_idx_labels(&labels[..labels.len() - 1]), Err(Error::Format(_))));
}

#[test]
fn count_mismatch_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
    write_bytes(&ip, &encode_idx_images(&tiny_images()).unwrap(), false).unwrap();
    write_bytes(&lp, &encode_idx_labels(&[0, 1]), false).unwrap();
    assert!(load_idx(&ip, &lp).is_err());
    assert!(matches!(load_idx(&dir.path().join("missing"), &lp), Err(Error::Io(_))));
}

#[test]
fn bundled_mnist_subset_is_well_formed() {
    let dir = PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/mnist"));
    let ds =
        load_idx(&dir.join("mnist-10k-images-idx3-ubyte.gz"), &dir.join("mnist-10k-labels-idx1-ubyte.gz")).unwrap();
    assert_eq!((ds.len(), ds.features(), ds.class_count()), (10_000, 784, 10));
    let present: HashSet<usize> = ds.labels().iter().copied().collect();
    assert_eq!(present.len(), 10);
    assert!(ds.inputs().iter().all(|&v| (0.0..=1.0).contains(&v)));
}

#[test]
fn dataset_validates_shapes_and_labels() {
    assert!(Dataset::new(Array2::zeros((2, 3)), vec![0], 2).is_err());
    assert!(Dataset::new(Array2::zeros((2, 3)), vec![0, 2], 2).is_err());
    let ds = Dataset::new(Array2::from_shape_fn((4, 1), |(i, _)| i as f64), vec![0, 1, 0, 1], 2).unwrap();
    let sub = ds.select(&[3, 0]);
    assert_eq!(sub.labels(), &[1, 0]);
    assert_eq!(sub.inputs()[[0, 0]], 3.0);
    assert_eq!(ds.head(2).len(), 2);
}

#[test]
fn well_separated_blobs_are_centroid_separable() {
    let ds = synth_blobs(5, 16, 200, 10.0, 3).unwrap();
    let k = ds.class_count();
    let mut centroids = Array2::<f64>::zeros((k, ds.features()));
    let mut counts = vec![0.0; k];
    for (row, &y) in ds.inputs().rows().into_iter().zip(ds.labels()) {
        let mut c = centroids.row_mut(y);
        c += &row;
        counts[y] += 1.0;
    }
    for (mut c, n) in centroids.rows_mut().into_iter().zip(&counts) {
        c /= *n;
    }
    let correct = ds
        .inputs()
        .rows()
        .into_iter()
        .zip(ds.labels())
        .filter(|(row, &y)| {
            let d = |c: usize| (&centroids.row(c) - row).mapv(|v| v * v).sum();
            (0..k).min_by(|&a, &b| d(a).total_cmp(&d(b))).unwrap() == y
        })
        .count();
    assert!(correct as f64 / ds.len() as f64 >= 0.999, "{correct} of {}", ds.len());
}

#[test]
fn blobs_are_seeded_and_validated() {
    let a = synth_blobs(3, 4, 10, 6.0, 1).unwrap();
    let b = synth_blobs(3, 4, 10, 6.0, 1).unwrap();
    let c = synth_blobs(3, 4, 10, 6.0, 2).unwrap();
    assert_eq!(a.inputs(), b.inputs());
    assert_ne!(a.inputs(), c.inputs());
    assert!(synth_blobs(0, 4, 10, 6.0, 1).is_err());
    assert!(synth_blobs(3, 4, 10, f64::NAN, 1).is_err());
}

#[test]
fn split_is_disjoint_and_batches_cover_each_epoch() {
    let n = 103;
    let ds = Dataset::new(Array2::from_shape_fn((n, 1), |(i, _)| i as f64), vec![0; n], 1).unwrap();
    let split = split_and_batch(&ds, 0.2, 16, 9).unwrap();
    assert_eq!(split.val.len(), 21);
    let ids = |d: &Dataset| d.inputs().column(0).iter().map(|&v| v as usize).collect::<HashSet<_>>();
    let (train, val) = (ids(&split.train), ids(&split.val));
    assert!(train.is_disjoint(&val));
    assert_eq!(train.len() + val.len(), n);

    let e0 = split.epoch_batches(0);
    let mut seen: Vec<usize> = e0.iter().flatten().copied().collect();
    assert!(e0[..e0.len() - 1].iter().all(|b| b.len() == 16));
    seen.sort_unstable();
    assert_eq!(seen, (0..split.train.len()).collect::<Vec<_>>());
    assert_eq!(e0, epoch_batches(split.train.len(), 16, 9, 0));
    assert_ne!(e0, split.epoch_batches(1));

    assert!(split_and_batch(&ds, 0.0, 16, 9).is_err());
    assert!(split_and_batch(&ds, 0.2, 0, 9).is_err());
}
