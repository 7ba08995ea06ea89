use std::fs;

use segbias::checkpoint::{self, Checkpoint};
use segbias::core::corpus::{generate, Corpus, GenConfig, Sample};
use segbias::core::image::{GrayImage, RgbImage};
use segbias::core::inject::{inject, BiasSpec};
use segbias::core::learner::LearnerModel;
use segbias::core::mask::BinaryMask;
use segbias::core::rng;
use segbias::core::GroupId;
use segbias::manifest::{read_manifest, write_manifest};
use segbias::{pnm, Error};

fn small(n: usize) -> Corpus {
    generate(&GenConfig {
        n_samples: n,
        width: 20,
        height: 16,
        seed: 5,
        ..GenConfig::default()
    })
    .unwrap()
}

#[test]
fn pgm_bytes_are_plain_p5() {
    let dir = tempfile::tempdir().unwrap();
    let m = BinaryMask::from_vec(3, 2, vec![1, 0, 0, 0, 1, 1]).unwrap();
    let path = dir.path().join("m.pgm");
    pnm::write_mask(&path, &m).unwrap();
    let bytes = fs::read(&path).unwrap();
    assert_eq!(&bytes[..11], b"P5\n3 2\n255\n");
    assert_eq!(&bytes[11..], &[255, 0, 0, 0, 255, 255]);
    assert_eq!(pnm::read_mask(&path).unwrap(), m);
}

#[test]
fn pgm_header_comments_and_bad_values() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.pgm");
    fs::write(&path, b"P5 # written by hand\n2 1\n# maxval next\n255\n\xff\x00").unwrap();
    assert_eq!(pnm::read_mask(&path).unwrap().as_slice(), &[1, 0]);

    fs::write(&path, b"P5\n2 1\n255\n\x80\x00").unwrap();
    assert!(matches!(pnm::read_mask(&path), Err(Error::Parse { .. })));
    // grayscale images accept any value
    assert_eq!(pnm::read_gray(&path).unwrap().to_u8(), vec![128, 0]);

    fs::write(&path, b"P5\n2 2\n255\n\x00").unwrap();
    assert!(matches!(pnm::read_gray(&path), Err(Error::Parse { .. })));
    fs::write(&path, b"P5\n1 1\n65535\n\x00\x00").unwrap();
    assert!(matches!(pnm::read_gray(&path), Err(Error::Parse { .. })));
    fs::write(&path, b"P2\n1 1\n255\n0").unwrap();
    assert!(matches!(pnm::read_gray(&path), Err(Error::Parse { .. })));
}

#[test]
fn gray_and_rgb_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let bytes: Vec<u8> = (0..=255).collect();
    let img = GrayImage::from_u8(16, 16, &bytes).unwrap();
    pnm::write_gray(dir.path().join("g.pgm"), &img).unwrap();
    assert_eq!(pnm::read_gray(dir.path().join("g.pgm")).unwrap(), img);

    let px: Vec<[u8; 3]> = (0..12u8).map(|i| [i, 255 - i, i.wrapping_mul(17)]).collect();
    let rgb = RgbImage::from_vec(4, 3, px).unwrap();
    pnm::write_rgb(dir.path().join("c.ppm"), &rgb).unwrap();
    assert_eq!(pnm::read_rgb(dir.path().join("c.ppm")).unwrap(), rgb);
    assert!(matches!(pnm::read_mask(dir.path().join("c.ppm")), Err(Error::Parse { .. })));
}

#[test]
fn manifest_round_trip_is_lossless() {
    let dir = tempfile::tempdir().unwrap();
    let (biased, record) = inject(&small(10), &BiasSpec::default()).unwrap();
    assert_eq!(record.corrupted.len(), 3);
    let path = write_manifest(&biased, dir.path()).unwrap();
    assert_eq!(read_manifest(&path).unwrap(), biased);

    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    let entries = doc["samples"].as_array().unwrap();
    for (e, s) in entries.iter().zip(biased.samples()) {
        assert_eq!(e["id"], s.id());
        assert_eq!(e.get("mask_clean").is_some(), s.mask_clean().is_some());
        assert_eq!(e["corrupted"], s.corrupted());
    }
    assert_eq!(doc["width"], 20);
    assert_eq!(doc["height"], 16);
    assert_eq!(doc["clean_group"], 0);
}

#[test]
fn manifest_omits_missing_clean_masks_and_keeps_order() {
    let dir = tempfile::tempdir().unwrap();
    let c = small(100);
    let stripped: Vec<Sample> = c
        .samples()
        .iter()
        .map(|s| Sample::new(s.id(), s.group(), s.image().clone(), s.mask_obs().clone(), None, false).unwrap())
        .collect();
    let c = Corpus::new(stripped, c.clean_group()).unwrap();
    let path = write_manifest(&c, dir.path()).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    let entries = doc["samples"].as_array().unwrap();
    assert_eq!(entries.len(), 100);
    assert!(entries.iter().all(|e| e.get("mask_clean").is_none()));
    let ids: Vec<&str> = entries.iter().map(|e| e["id"].as_str().unwrap()).collect();
    let expected: Vec<&str> = c.samples().iter().map(|s| s.id()).collect();
    assert_eq!(ids, expected);
    assert_eq!(read_manifest(&path).unwrap(), c);
}

#[test]
fn malformed_manifests_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_manifest(&small(4), dir.path()).unwrap();
    let good = fs::read_to_string(&path).unwrap();

    fs::write(&path, "{ not json").unwrap();
    assert!(matches!(read_manifest(&path), Err(Error::Parse { entry: None, .. })));

    // a bad entry is reported by its id
    let mut doc: serde_json::Value = serde_json::from_str(&good).unwrap();
    doc["samples"][2]["group"] = "zero".into();
    fs::write(&path, doc.to_string()).unwrap();
    match read_manifest(&path) {
        Err(Error::Parse { entry: Some(id), .. }) => assert_eq!(id, "s0002"),
        other => panic!("expected a parse error, got {other:?}"),
    }

    // corrupted without a clean mask violates the sample invariant
    let mut doc: serde_json::Value = serde_json::from_str(&good).unwrap();
    doc["samples"][1]["corrupted"] = true.into();
    doc["samples"][1].as_object_mut().unwrap().remove("mask_clean");
    fs::write(&path, doc.to_string()).unwrap();
    let err = read_manifest(&path).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("s0001"), "{err}");
}

#[test]
fn mask_of_the_wrong_size_is_a_dimension_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let c = generate(&GenConfig {
        n_samples: 4,
        seed: 1,
        ..GenConfig::default()
    })
    .unwrap();
    let path = write_manifest(&c, dir.path()).unwrap();
    let victim = c.samples()[1].id();
    pnm::write_mask(dir.path().join(format!("masks/{victim}.pgm")), &BinaryMask::zeros(32, 32)).unwrap();
    match read_manifest(&path) {
        Err(Error::Core {
            source: segbias::core::Error::DimensionMismatch { id, expected, found },
            ..
        }) => {
            assert_eq!(id, victim);
            assert_eq!(expected, (64, 64));
            assert_eq!(found, (32, 32));
        }
        other => panic!("expected a dimension mismatch, got {other:?}"),
    }
}

#[test]
fn unsafe_ids_are_not_written() {
    let dir = tempfile::tempdir().unwrap();
    let c = small(2);
    let samples: Vec<Sample> = c
        .samples()
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let id = if i == 0 { "../escape".to_string() } else { s.id().to_string() };
            Sample::new(id, s.group(), s.image().clone(), s.mask_obs().clone(), None, false).unwrap()
        })
        .collect();
    let c = Corpus::new(samples, GroupId(0)).unwrap();
    assert!(matches!(write_manifest(&c, dir.path()), Err(Error::Invalid(_))));
}

#[test]
fn checkpoints_round_trip_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng::seeded(3);
    let model = LearnerModel::init(5, 1, &[GroupId(0), GroupId(1)], &mut r);
    let ck = Checkpoint {
        model,
        inference_group: Some(GroupId(0)),
    };
    let path = checkpoint::save(dir.path(), "m", &ck).unwrap();
    let back = checkpoint::load(&path).unwrap();
    assert_eq!(back, ck);
    let blob = fs::read(dir.path().join("m.bin")).unwrap();
    assert_eq!(blob.len(), 8 * ck.model.params().len());
    assert_eq!(&blob[..8], &ck.model.params()[0].to_le_bytes());

    fs::write(dir.path().join("m.bin"), &blob[..blob.len() - 8]).unwrap();
    assert!(matches!(checkpoint::load(&path), Err(Error::Parse { .. })));
}
