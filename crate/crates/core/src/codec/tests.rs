use super::*;
use crate::compress::{compress_with_importance, restore, CompressionConfig, ImportanceMap};
use crate::error::Error;
use crate::grid::{GridDims, OccupancyMask, Scale, ValuePrecision, VoxelGrid};
use crate::ncb::{NcbArch, NcbNetwork};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_grid(dims: GridDims, fill: f64, seed: u64) -> VoxelGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask = OccupancyMask::from_fn(dims.shape(), |_| rng.random::<f64>() < fill);
    let n = mask.count();
    let density = (0..n).map(|_| rng.random_range(0.0..5.0f32)).collect();
    let color = (0..n * dims.c).map(|_| rng.random_range(-1.0..1.0f32)).collect();
    VoxelGrid::new(dims, mask, density, color).unwrap()
}

fn random_model(seed: u64) -> crate::compress::CompressedModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = [3, 12, 27][rng.random_range(0..3)];
    let dims = GridDims::new(
        rng.random_range(4..10),
        rng.random_range(4..10),
        rng.random_range(4..10),
        c,
    )
    .unwrap();
    let g = random_grid(dims, rng.random_range(0.0..1.0), seed);
    let scores: Vec<f64> = (0..g.occupied()).map(|_| rng.random()).collect();
    let map = ImportanceMap::new(g.shape(), scores, 0.0, 1.0).unwrap();
    let scales = [Scale::Quarter, Scale::Half, Scale::Unit];
    let cfg = CompressionConfig {
        scale_color: scales[rng.random_range(0..3)],
        scale_density: scales[rng.random_range(0..3)],
        retain_fraction: rng.random_range(0.0..0.3),
        importance_rays: rng.random_range(1..1000),
        precision: if rng.random() { ValuePrecision::F16 } else { ValuePrecision::F32 },
    };
    let mut model = match compress_with_importance(&g, &map, &cfg) {
        Ok(m) => m,
        // quarter scale needs at least 8 voxels per axis
        Err(Error::DimensionTooSmall { .. }) => {
            let cfg = CompressionConfig {
                scale_color: Scale::Half,
                scale_density: Scale::Half,
                ..cfg
            };
            compress_with_importance(&g, &map, &cfg).unwrap()
        }
        Err(e) => panic!("{e}"),
    };
    if rng.random_bool(0.3) {
        model.ncb = Some(NcbNetwork::random(NcbArch::tiny(), c, seed).unwrap().cast(cfg.precision).unwrap());
    }
    model
}

#[test]
fn random_models_round_trip_bitwise() {
    for seed in 0..40 {
        let m = random_model(seed);
        let bytes = container_bytes(&m).unwrap();
        let back = decode_container(&bytes).unwrap();
        assert_eq!(back, m, "seed {seed}");
        assert_eq!(container_bytes(&back).unwrap(), bytes);
    }
}

#[test]
fn empty_grid_has_empty_tensor_sections() {
    let dims = GridDims::new(8, 8, 8, 27).unwrap();
    let g = VoxelGrid::empty(dims);
    let map = ImportanceMap::new(g.shape(), vec![], 0.0, 0.0).unwrap();
    let m = compress_with_importance(&g, &map, &CompressionConfig::default()).unwrap();
    let bytes = container_bytes(&m).unwrap();
    let h = read_header(&bytes).unwrap();
    for e in &h.sections {
        match SectionId::from_u16(e.id).unwrap() {
            SectionId::Mask => assert_eq!(e.raw_len, 64),
            SectionId::Meta => assert_eq!(e.raw_len, 16),
            _ => assert_eq!(e.raw_len, 0, "{}", e.name()),
        }
    }
    assert_eq!(decode_container(&bytes).unwrap(), m);
}

#[test]
fn header_fields_and_layout() {
    let m = random_model(3);
    let bytes = container_bytes(&m).unwrap();
    let h = read_header(&bytes).unwrap();
    assert_eq!(&bytes[..4], b"NCBC");
    assert_eq!(h.version, VERSION);
    assert_eq!(h.original_dims, m.original_dims);
    assert_eq!(h.retain_count, m.important.len() as u64);
    assert_eq!(h.has_ncb(), m.ncb.is_some());
    assert_eq!(h.precision(), m.config.precision);
    let mut at = h.byte_len() as u64;
    for e in &h.sections {
        assert_eq!(e.offset, at);
        at += e.compressed_len;
    }
    assert_eq!(at, bytes.len() as u64);
    let mask = h.sections.iter().find(|e| e.id == SectionId::Mask as u16).unwrap();
    assert_eq!(mask.raw_len as usize, m.original_dims.voxel_count().div_ceil(8));
}

#[test]
fn section_corruption_names_the_section() {
    let m = random_model(5);
    let bytes = container_bytes(&m).unwrap();
    let h = read_header(&bytes).unwrap();
    for e in &h.sections {
        let mut bad = bytes.clone();
        bad[(e.offset + e.compressed_len / 2) as usize] ^= 0x10;
        match decode_container(&bad) {
            Err(Error::ChecksumMismatch { section }) => assert_eq!(section, e.name()),
            other => panic!("{}: {other:?}", e.name()),
        }
    }
}

#[test]
fn every_header_byte_is_protected() {
    let bytes = container_bytes(&random_model(6)).unwrap();
    let hlen = read_header(&bytes).unwrap().byte_len();
    for i in 4..hlen {
        let mut bad = bytes.clone();
        bad[i] ^= 0x01;
        assert!(
            matches!(decode_container(&bad), Err(Error::ChecksumMismatch { .. })),
            "byte {i}"
        );
    }
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(decode_container(&bad), Err(Error::BadMagic { .. })));
}

#[test]
fn truncation_and_trailing_data_are_rejected() {
    let bytes = container_bytes(&random_model(7)).unwrap();
    for cut in [2, 30, bytes.len() - 1] {
        assert!(matches!(
            decode_container(&bytes[..cut]),
            Err(Error::TruncatedSection { .. })
        ));
    }
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(matches!(decode_container(&extra), Err(Error::MalformedSection { .. })));
}

#[test]
fn unknown_sections_need_the_skip_flag() {
    let m = random_model(8);
    let bytes = container_bytes(&m).unwrap();
    let h = read_header(&bytes).unwrap();
    let mut sections: Vec<(u16, u16, Vec<u8>)> = h
        .sections
        .iter()
        .map(|e| {
            let s = &bytes[e.offset as usize..(e.offset + e.compressed_len) as usize];
            let mut raw = Vec::new();
            std::io::Read::read_to_end(&mut flate2::read::ZlibDecoder::new(s), &mut raw).unwrap();
            (e.id, e.flags, raw)
        })
        .collect();
    sections.push((40, SECTION_UNKNOWN_OK, b"future".to_vec()));
    let build = |s: &[(u16, u16, Vec<u8>)]| {
        assemble(m.original_dims, (h.scale_color, h.scale_density), h.retain_count, h.flags, s).unwrap()
    };
    assert_eq!(decode_container(&build(&sections)).unwrap(), m);
    sections.last_mut().unwrap().1 = 0;
    assert!(matches!(
        decode_container(&build(&sections)),
        Err(Error::MalformedSection { .. })
    ));
    // a required section left out
    sections.pop();
    sections.retain(|s| s.0 != SectionId::Meta as u16);
    assert!(decode_container(&build(&sections)).is_err());
}

#[test]
fn identity_config_is_lossless_through_the_container() {
    let g = random_grid(GridDims::new(6, 7, 8, 12).unwrap(), 0.4, 11);
    let map = ImportanceMap::new(g.shape(), vec![0.0; g.occupied()], 0.0, 0.0).unwrap();
    let m = compress_with_importance(&g, &map, &CompressionConfig::identity()).unwrap();
    let back = decode_container(&container_bytes(&m).unwrap()).unwrap();
    assert_eq!(restore(&back, 1).unwrap(), g);
    let report = storage_report(&m).unwrap();
    assert!(report.ratio > 0.8 && report.ratio < 1.5, "{}", report.ratio);
}

#[test]
fn storage_report_accounts_for_every_byte() {
    let m = random_model(12);
    let r = storage_report(&m).unwrap();
    let sum: u64 = r.sections.iter().map(|s| s.compressed_bytes).sum();
    assert_eq!(sum + r.header_bytes, r.total_bytes);
    let n = m.full_mask.count() as u64;
    assert_eq!(r.baseline_bytes, 4 * (1 + m.original_dims.c as u64) * n + 4 * n);
    assert_eq!(r.ratio, r.baseline_bytes as f64 / r.total_bytes as f64);
}

#[test]
fn write_read_through_io() {
    let m = random_model(13);
    let mut buf = Vec::new();
    let n = write_container(&m, &mut buf).unwrap();
    assert_eq!(n as usize, buf.len());
    assert_eq!(read_container(&mut buf.as_slice()).unwrap(), m);
}
