mod common;

use std::collections::HashSet;
use std::io::Write;

use common::mnist_dir;
use shiftlab::datasets::{
    load_mnist_dir, load_mnist_idx, make_cmnist, make_cs_cmnist, read_dataset, split_train_val, write_dataset,
    DatasetKind, DomainRole, GrayMnist, CMNIST_BIASES, CS_CMNIST_BIASES, CS_PALETTE,
};
use shiftlab::Error;

fn pool() -> Option<GrayMnist> {
    let Some(dir) = mnist_dir() else {
        eprintln!("MNIST not found; run scripts/fetch_mnist.sh");
        return None;
    };
    let (train, test) = load_mnist_dir(dir).unwrap();
    Some(train.concat(test).unwrap())
}

/// Bayes rule for one accepted proposal: the matching color is proposed with
/// probability 1/10 and kept with `1 - theta`; each of the nine others is
/// kept with `theta`.
fn cs_agreement(theta: f64) -> f64 {
    let hit = 0.1 * (1.0 - theta);
    hit / (hit + 0.9 * theta)
}

#[test]
fn official_idx_files() {
    let Some(dir) = mnist_dir() else { return };
    let (train, test) = load_mnist_dir(&dir).unwrap();
    assert_eq!((train.len(), train.rows, train.cols), (60_000, 28, 28));
    assert_eq!(test.len(), 10_000);
    assert_eq!(train.labels[0], 5);
    let raw = std::fs::read(dir.join("train-images-idx3-ubyte")).unwrap();
    assert_eq!(u32::from_be_bytes(raw[0..4].try_into().unwrap()), 2051);
    let raw = std::fs::read(dir.join("train-labels-idx1-ubyte")).unwrap();
    assert_eq!(u32::from_be_bytes(raw[0..4].try_into().unwrap()), 2049);
}

#[test]
fn corrupted_idx_files_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let write = |name: &str, bytes: &[u8]| {
        let p = tmp.path().join(name);
        std::fs::File::create(&p).unwrap().write_all(bytes).unwrap();
        p
    };
    let mut images = 2051u32.to_be_bytes().to_vec();
    for v in [2u32, 2, 2] {
        images.extend(v.to_be_bytes());
    }
    images.extend([1, 2, 3, 4, 5, 6, 7, 8]);
    let mut labels = 2049u32.to_be_bytes().to_vec();
    labels.extend(2u32.to_be_bytes());
    labels.extend([3, 9]);
    let img = write("img", &images);
    let lbl = write("lbl", &labels);
    let ok = load_mnist_idx(&img, &lbl).unwrap();
    assert_eq!((ok.len(), ok.image(1)), (2, &[5u8, 6, 7, 8][..]));

    let truncated = write("img-trunc", &images[..images.len() - 3]);
    assert!(matches!(load_mnist_idx(&truncated, &lbl), Err(Error::Format { .. })));
    let mut bad_magic = images.clone();
    bad_magic[3] = 0x01;
    let bad = write("img-magic", &bad_magic);
    assert!(matches!(load_mnist_idx(&bad, &lbl), Err(Error::Format { offset: 0, .. })));
    let short_labels = write("lbl-short", &labels[..9]);
    assert!(matches!(load_mnist_idx(&img, &short_labels), Err(Error::Format { .. })));
    let mut big_label = labels.clone();
    big_label[9] = 10;
    let big = write("lbl-range", &big_label);
    assert!(matches!(load_mnist_idx(&img, &big), Err(Error::Format { offset: 9, .. })));

    let mut gz = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
    gz.write_all(&images).unwrap();
    let gz_img = write("img.gz", &gz.finish().unwrap());
    assert_eq!(load_mnist_idx(&gz_img, &lbl).unwrap(), ok);
    assert!(load_mnist_dir(tmp.path()).is_err());
}

#[test]
fn cmnist_statistics() {
    let Some(gray) = pool() else { return };
    let domains = make_cmnist(&gray, 0).unwrap();
    let sizes: Vec<usize> = domains.iter().map(|d| d.len()).collect();
    assert_eq!(sizes, [25_000, 25_000, 20_000]);
    for (d, bias) in domains.iter().zip(CMNIST_BIASES) {
        assert!((d.color_label_agreement() - (1.0 - bias)).abs() <= 0.01, "domain {}", d.domain.index);
        assert!((d.label_flip_rate() - 0.25).abs() <= 0.01);
        assert!(d.colors.iter().all(|&c| c < 2));
    }
    let mut seen = HashSet::new();
    for d in &domains {
        for &s in &d.source {
            assert!(seen.insert(s), "source image {s} used twice");
        }
    }
    assert_eq!(domains.map(|d| d.domain.role), [DomainRole::Seen, DomainRole::Seen, DomainRole::Unseen]);
}

#[test]
fn cs_cmnist_statistics() {
    let Some(gray) = pool() else { return };
    let domains = make_cs_cmnist(&gray, 0).unwrap();
    for (d, theta) in domains.iter().zip(CS_CMNIST_BIASES) {
        assert_eq!(d.len(), 20_000);
        let want = cs_agreement(theta);
        assert!((d.color_label_agreement() - want).abs() <= 0.015, "domain {}: {}", d.domain.index, d.color_label_agreement());
        assert_eq!(d.label_flip_rate(), 0.0);
    }
    assert!((cs_agreement(0.1) - 0.5).abs() < 1e-12);
    assert!((cs_agreement(0.2) - 0.30769).abs() < 1e-5);
    assert!((cs_agreement(0.9) - 0.01220).abs() < 1e-5);
}

#[test]
fn images_follow_palette_and_intensity() {
    let Some(gray) = pool() else { return };
    let ds = make_cs_cmnist(&gray, 2).unwrap();
    let d = &ds[0];
    for i in [0, 17, 4_000, 19_999] {
        let img = d.image(i);
        let g = d.gray_image(i);
        let rgb = CS_PALETTE[d.colors[i] as usize];
        assert!(img.iter().all(|v| (0.0..=1.0).contains(v)));
        for ch in 0..3 {
            for p in 0..784 {
                assert_eq!(img[ch * 784 + p], g[p] as f64 / 255.0 * rgb[ch]);
            }
        }
    }
    let cm = make_cmnist(&gray, 2).unwrap();
    let img = cm[0].image(0);
    let lit: Vec<usize> = (0..3).filter(|&c| img[c * 784..(c + 1) * 784].iter().any(|v| *v > 0.0)).collect();
    assert_eq!(lit.len(), 1);
}

#[test]
fn generation_is_deterministic_and_cache_round_trips() {
    let Some(gray) = pool() else { return };
    let a = make_cs_cmnist(&gray, 9).unwrap();
    let b = make_cs_cmnist(&gray, 9).unwrap();
    assert_eq!(a, b);
    assert_ne!(a[0].source, make_cs_cmnist(&gray, 10).unwrap()[0].source);
    let mut bytes = Vec::new();
    write_dataset(&a[1], &mut bytes).unwrap();
    assert_eq!(&bytes[..4], b"SLDS");
    assert_eq!(read_dataset(bytes.as_slice()).unwrap(), a[1]);
    let mut again = Vec::new();
    write_dataset(&b[1], &mut again).unwrap();
    assert_eq!(bytes, again);
    assert!(read_dataset(&bytes[..bytes.len() / 2]).is_err());
}

#[test]
fn splits() {
    let Some(gray) = pool() else { return };
    let d = make_cmnist(&gray, 1).unwrap();
    let (t, v) = split_train_val(&d[0], 0.2, 4).unwrap();
    assert_eq!((t.len(), v.len()), (20_000, 5_000));
    let ts: HashSet<u32> = t.source.iter().copied().collect();
    let vs: HashSet<u32> = v.source.iter().copied().collect();
    assert!(ts.is_disjoint(&vs));
    let all: HashSet<u32> = d[0].source.iter().copied().collect();
    assert_eq!(ts.union(&vs).copied().collect::<HashSet<_>>(), all);
    assert_eq!(split_train_val(&d[0], 0.2, 4).unwrap(), (t, v));
    assert!(split_train_val(&d[0], 1.0, 4).is_err());
    assert_eq!(d[0].kind, DatasetKind::Cmnist);
}
