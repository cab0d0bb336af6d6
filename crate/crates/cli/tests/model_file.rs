use permdnn_cli::model_file::{Encoding, ModelFile, ModelFileError, Payload, MAGIC};
use permdnn_core::train::{ConvLayer, FcLayer, Layer, Model};
use permdnn_core::{Activation, FixedPointSpec};

fn model() -> Model<f64> {
    Model::new(vec![
        Layer::Conv(ConvLayer::new(4, 1, (3, 3), (8, 8), 2, Activation::Relu, 5).unwrap()),
        Layer::Fc(FcLayer::new(64, 256, 4, Activation::Tanh, 1).unwrap()),
        Layer::Fc(FcLayer::new(10, 64, 4, Activation::Identity, 2).unwrap()),
    ])
    .unwrap()
}

fn encodings() -> [Encoding; 3] {
    let spec = FixedPointSpec::default();
    [
        Encoding::Real32,
        Encoding::Fixed16(spec),
        Encoding::Tagged { tag_bits: 4, spec, seed: 3 },
    ]
}

#[test]
fn bytes_round_trip_identically() {
    for enc in encodings() {
        let file = ModelFile::from_model(&model(), enc).unwrap();
        let bytes = file.to_bytes().unwrap();
        let back = ModelFile::from_bytes(&bytes).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }
}

#[test]
fn real_payload_reloads_the_f32_weights() {
    let m = model();
    let back = ModelFile::from_model(&m, Encoding::Real32).unwrap().to_model().unwrap();
    for (a, b) in m.layers().iter().zip(back.layers()) {
        assert_eq!(a.perms(), b.perms());
        assert_eq!(a.activation(), b.activation());
        let Layer::Fc(fa) = a else { continue };
        let Layer::Fc(fb) = b else { unreachable!() };
        for (x, y) in fa.weights.values().iter().zip(fb.weights.values()) {
            assert_eq!(*x as f32 as f64, *y);
        }
    }
}

#[test]
fn tagged_payload_uses_few_bits() {
    let file = ModelFile::from_model(&model(), encodings()[2]).unwrap();
    let Payload::Tagged { codebook, .. } = &file.layers[1].payload else {
        panic!("expected tags")
    };
    assert!(codebook.centroids.len() <= 16);
    let real = ModelFile::from_model(&model(), Encoding::Real32).unwrap();
    assert!(file.to_bytes().unwrap().len() * 2 < real.to_bytes().unwrap().len());
}

#[test]
fn file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.pdnn");
    let file = ModelFile::from_model(&model(), Encoding::Real32).unwrap();
    file.store(&path).unwrap();
    assert_eq!(ModelFile::load(&path).unwrap(), file);
}

#[test]
fn every_single_byte_flip_is_detected() {
    let bytes = ModelFile::from_model(&model(), encodings()[1]).unwrap().to_bytes().unwrap();
    for pos in (0..bytes.len()).step_by(7) {
        let mut bad = bytes.clone();
        bad[pos] ^= 0x20;
        assert!(ModelFile::from_bytes(&bad).is_err(), "flip at {pos} accepted");
    }
    let mut bad = bytes.clone();
    bad[20] ^= 1;
    assert!(matches!(ModelFile::from_bytes(&bad), Err(ModelFileError::ChecksumMismatch { .. })));
}

#[test]
fn header_problems_are_classified() {
    let bytes = ModelFile::from_model(&model(), Encoding::Real32).unwrap().to_bytes().unwrap();
    let mut v0 = bytes.clone();
    v0[4..6].copy_from_slice(&0u16.to_le_bytes());
    assert!(matches!(
        ModelFile::from_bytes(&v0),
        Err(ModelFileError::UnsupportedVersion { found: 0 })
    ));
    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(matches!(ModelFile::from_bytes(&magic), Err(ModelFileError::BadMagic)));
    assert!(matches!(ModelFile::from_bytes(&bytes[..3]), Err(ModelFileError::Truncated)));
    assert!(matches!(ModelFile::from_bytes(MAGIC), Err(ModelFileError::Truncated)));
}

#[test]
fn every_truncation_is_an_error() {
    let bytes = ModelFile::from_model(&model(), encodings()[2]).unwrap().to_bytes().unwrap();
    for len in 0..bytes.len() {
        assert!(ModelFile::from_bytes(&bytes[..len]).is_err(), "prefix {len} accepted");
    }
}
