use std::fs;

use saldist::{checkpoint, fixations, manifest, pfm};
use saldist_core::data::{generate, SynthConfig};
use saldist_core::net::{FcnModel, Init, Tensor};
use saldist_core::pipeline::GtParams;
use saldist_core::{FixationSet, GridMap};

fn f32_map(h: usize, w: usize, seed: u32) -> GridMap {
    // f32-representable values, including awkward ones.
    let mut x = seed.wrapping_mul(2654435761) | 1;
    GridMap::from_fn(h, w, |_, _| {
        x ^= x << 13;
        x ^= x >> 17;
        x ^= x << 5;
        (f32::from_bits((x & 0x3fff_ffff) | 0x0080_0000) * if x & 1 == 0 { 1.0 } else { -1.0 }) as f64
    })
}

#[test]
fn pfm_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    for (i, (h, w)) in [(1, 1), (7, 3), (32, 45)].into_iter().enumerate() {
        let m = f32_map(h, w, i as u32 + 1);
        let path = dir.path().join(format!("m{i}.pfm"));
        pfm::write_map(&path, &m).unwrap();
        let back = pfm::read_map(&path).unwrap();
        assert_eq!(back.shape(), m.shape());
        for (a, b) in back.values().iter().zip(m.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}

#[test]
fn pfm_rounds_f64_to_f32() {
    let dir = tempfile::tempdir().unwrap();
    let m = GridMap::new(1, 2, vec![0.1, 1.0 / 3.0]).unwrap();
    let path = dir.path().join("r.pfm");
    pfm::write_map(&path, &m).unwrap();
    let back = pfm::read_map(&path).unwrap();
    assert_eq!(back.values(), &[0.1f32 as f64, (1.0f32 / 3.0) as f64]);
}

#[test]
fn pfm_rejects_wrong_channel_count_for_maps() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.pfm");
    pfm::write_tensor(&path, &Tensor::zeros(3, 2, 2)).unwrap();
    assert!(pfm::read_map(&path).is_err());
    assert_eq!(pfm::read_tensor(&path).unwrap().channels(), 3);
    assert!(pfm::write_tensor(&path, &Tensor::zeros(2, 2, 2)).is_err());
}

#[test]
fn csv_round_trip_and_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.csv");
    let fix = FixationSet::new(5, 4, vec![(0, 0), (4, 3), (2, 1), (2, 1)]).unwrap();
    fixations::write(&path, &fix).unwrap();
    assert_eq!(fs::read_to_string(&path).unwrap(), "row,col\n0,0\n4,3\n2,1\n2,1\n");
    assert_eq!(fixations::read(&path, 5, 4).unwrap(), fix);

    fs::write(&path, "row,col\n5,0\n").unwrap();
    let err = fixations::read(&path, 5, 4).unwrap_err();
    assert!(err.to_string().contains("outside 5x4"), "{err}");

    fs::write(&path, "row,col\n").unwrap();
    assert!(fixations::read(&path, 5, 4).unwrap().is_empty());

    fs::write(&path, "y,x\n1,1\n").unwrap();
    assert!(fixations::read(&path, 5, 4).is_err());
    fs::write(&path, "row,col\n1,-1\n").unwrap();
    assert!(fixations::read(&path, 5, 4).is_err());
    fs::write(&path, "row,col\n1.5,1\n").unwrap();
    assert!(fixations::read(&path, 5, 4).is_err());
}

#[test]
fn empty_set_writes_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.csv");
    fixations::write(&path, &FixationSet::empty(3, 3).unwrap()).unwrap();
    assert_eq!(fs::read_to_string(&path).unwrap(), "row,col\n");
}

#[test]
fn checkpoint_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let m = FcnModel::toy(1, Init::HeTrunk { head_sigma: 0.01 }, 9).unwrap();
    checkpoint::save(&path, &m).unwrap();
    let back = checkpoint::load(&path).unwrap();
    assert_eq!(back, m);
    let bytes = fs::read(&path).unwrap();
    assert_eq!(&bytes[..8], b"SALDIST1");
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 11);
    assert_eq!(bytes.len(), 12 + 5 * 22 + 6 + 8 * m.parameter_count());
}

#[test]
fn dataset_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        n_images: 3,
        height: 16,
        width: 24,
        fixations_per_image: 12,
        seed: 4,
        ..SynthConfig::default()
    };
    let samples = generate(&cfg).unwrap();
    let path = manifest::write_dataset(dir.path(), &samples).unwrap();
    let back = manifest::read_dataset(&path, &GtParams::synthetic()).unwrap();
    assert_eq!(back.len(), 3);
    for (a, b) in back.iter().zip(&samples) {
        assert_eq!(a.fixations, b.fixations);
        // Ground truth is rebuilt from the fixations, so it is exact.
        assert_eq!(a.gt, b.gt);
        assert_eq!(a.blobs, b.blobs);
        for (x, y) in a.image.data().iter().zip(b.image.data()) {
            assert_eq!(*x, *y as f32 as f64);
        }
    }
}
