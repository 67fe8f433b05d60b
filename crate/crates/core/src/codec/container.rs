use std::io::{Read, Write};

use flate2::read::ZlibDecoder;
use flate2::write::ZlibEncoder;
use flate2::Compression;

use crate::compress::{CompressedModel, CompressionConfig, ImportantVoxelSet};
use crate::error::{Error, Result};
use crate::grid::{coarsen_mask, GridDims, OccupancyMask, Scale, SparseVolume, ValuePrecision};
use crate::ncb::NcbNetwork;

pub const MAGIC: [u8; 4] = *b"NCBC";
pub const VERSION: u32 = 1;
pub const ZLIB_LEVEL: u32 = 6;

/// Bytes before the section table.
const FIXED_HEADER: usize = 48;
const ENTRY_BYTES: usize = 32;

pub const FLAG_HAS_NCB: u32 = 1;
pub const FLAG_F16: u32 = 1 << 1;

/// Per-section flag: readers that do not know the id may skip the section.
pub const SECTION_UNKNOWN_OK: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u16)]
pub enum SectionId {
    Mask = 1,
    DownDensity = 2,
    DownColor = 3,
    ImportantIdx = 4,
    ImportantVal = 5,
    NcbWeights = 6,
    Meta = 7,
}

impl SectionId {
    pub const ALL: [SectionId; 7] = [
        SectionId::Mask,
        SectionId::DownDensity,
        SectionId::DownColor,
        SectionId::ImportantIdx,
        SectionId::ImportantVal,
        SectionId::NcbWeights,
        SectionId::Meta,
    ];

    pub fn from_u16(v: u16) -> Option<Self> {
        Self::ALL.into_iter().find(|s| *s as u16 == v)
    }

    pub fn name(self) -> &'static str {
        match self {
            SectionId::Mask => "MASK",
            SectionId::DownDensity => "DOWN_DENSITY",
            SectionId::DownColor => "DOWN_COLOR",
            SectionId::ImportantIdx => "IMPORTANT_IDX",
            SectionId::ImportantVal => "IMPORTANT_VAL",
            SectionId::NcbWeights => "NCB_WEIGHTS",
            SectionId::Meta => "META",
        }
    }
}

fn section_name(id: u16) -> String {
    SectionId::from_u16(id)
        .map(|s| s.name().to_string())
        .unwrap_or_else(|| format!("#{id}"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SectionEntry {
    pub id: u16,
    pub flags: u16,
    /// Absolute byte offset of the compressed stream.
    pub offset: u64,
    pub compressed_len: u64,
    pub raw_len: u64,
    /// CRC-32 of the compressed bytes.
    pub checksum: u32,
}

impl SectionEntry {
    pub fn name(&self) -> String {
        section_name(self.id)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContainerHeader {
    pub version: u32,
    pub original_dims: GridDims,
    pub scale_color: Scale,
    pub scale_density: Scale,
    pub retain_count: u64,
    pub flags: u32,
    pub sections: Vec<SectionEntry>,
}

impl ContainerHeader {
    pub fn has_ncb(&self) -> bool {
        self.flags & FLAG_HAS_NCB != 0
    }

    pub fn precision(&self) -> ValuePrecision {
        if self.flags & FLAG_F16 != 0 {
            ValuePrecision::F16
        } else {
            ValuePrecision::F32
        }
    }

    /// Size of the encoded header including its trailing CRC.
    pub fn byte_len(&self) -> usize {
        header_len(self.sections.len())
    }
}

fn header_len(sections: usize) -> usize {
    FIXED_HEADER + ENTRY_BYTES * sections + 4
}

fn malformed(section: &str, reason: impl Into<String>) -> Error {
    Error::MalformedSection {
        section: section.into(),
        reason: reason.into(),
    }
}

fn scale_code(s: Scale) -> Result<u8> {
    s.denominator()
        .ok_or_else(|| Error::InvalidConfig(format!("scale {s} cannot be stored")))
}

fn put_varint(mut v: u64, out: &mut Vec<u8>) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

fn get_varint(bytes: &[u8], pos: &mut usize) -> Option<u64> {
    let mut v = 0u64;
    for shift in (0..64).step_by(7) {
        let b = *bytes.get(*pos)?;
        *pos += 1;
        let part = (b & 0x7f) as u64;
        if shift == 63 && part > 1 {
            return None;
        }
        v |= part << shift;
        if b & 0x80 == 0 {
            return Some(v);
        }
    }
    None
}

/// Delta-encoded LEB128 varints of strictly increasing indices.
pub(crate) fn encode_indices(indices: &[usize]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut prev = 0usize;
    for (i, &idx) in indices.iter().enumerate() {
        let delta = if i == 0 { idx } else { idx - prev };
        put_varint(delta as u64, &mut out);
        prev = idx;
    }
    out
}

pub(crate) fn decode_indices(bytes: &[u8], count: usize) -> Option<Vec<usize>> {
    let mut pos = 0;
    let mut out = Vec::with_capacity(count);
    let mut prev = 0u64;
    for i in 0..count {
        let d = get_varint(bytes, &mut pos)?;
        if i > 0 && d == 0 {
            return None;
        }
        prev = prev.checked_add(d)?;
        out.push(usize::try_from(prev).ok()?);
    }
    (pos == bytes.len()).then_some(out)
}

fn deflate(raw: &[u8]) -> Result<Vec<u8>> {
    let mut enc = ZlibEncoder::new(Vec::new(), Compression::new(ZLIB_LEVEL));
    enc.write_all(raw)?;
    Ok(enc.finish()?)
}

fn inflate(entry: &SectionEntry, compressed: &[u8]) -> Result<Vec<u8>> {
    let name = entry.name();
    let raw_len = usize::try_from(entry.raw_len).map_err(|_| malformed(&name, "raw length overflow"))?;
    let mut dec = ZlibDecoder::new(compressed);
    let mut out = Vec::with_capacity(raw_len.min(1 << 26));
    (&mut dec)
        .take(entry.raw_len + 1)
        .read_to_end(&mut out)
        .map_err(|e| malformed(&name, format!("inflate: {e}")))?;
    if out.len() != raw_len {
        return Err(malformed(&name, format!("inflated {} bytes, header says {raw_len}", out.len())));
    }
    if dec.total_in() != compressed.len() as u64 {
        return Err(malformed(&name, "bytes after the end of the zlib stream"));
    }
    Ok(out)
}

fn section_payloads(model: &CompressedModel) -> Vec<(SectionId, Vec<u8>)> {
    let precision = model.config.precision;
    let mut out = Vec::with_capacity(7);
    out.push((SectionId::Mask, model.full_mask.to_packed_bytes()));
    let tensor = |vol: &SparseVolume| {
        let mut b = Vec::new();
        precision.encode(vol.values(), &mut b);
        b
    };
    out.push((SectionId::DownDensity, tensor(&model.down_density)));
    out.push((SectionId::DownColor, tensor(&model.down_color)));
    let imp = &model.important;
    out.push((SectionId::ImportantIdx, encode_indices(imp.indices())));
    let mut vals = Vec::new();
    ValuePrecision::F32.encode(imp.density(), &mut vals);
    ValuePrecision::F32.encode(imp.color(), &mut vals);
    out.push((SectionId::ImportantVal, vals));
    if let Some(net) = &model.ncb {
        out.push((SectionId::NcbWeights, net.to_bytes()));
    }
    let mut meta = Vec::with_capacity(16);
    meta.extend_from_slice(&model.config.retain_fraction.to_bits().to_le_bytes());
    meta.extend_from_slice(&model.config.importance_rays.to_le_bytes());
    out.push((SectionId::Meta, meta));
    out
}

/// Lays out a header and the given sections. Sections keep their order.
pub(crate) fn assemble(
    dims: GridDims,
    scales: (Scale, Scale),
    retain_count: u64,
    flags: u32,
    sections: &[(u16, u16, Vec<u8>)],
) -> Result<Vec<u8>> {
    let mut compressed = Vec::with_capacity(sections.len());
    for (_, _, raw) in sections {
        compressed.push(deflate(raw)?);
    }
    let n = sections.len();
    let hlen = header_len(n);
    let mut out = Vec::with_capacity(hlen + compressed.iter().map(Vec::len).sum::<usize>());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&(hlen as u32).to_le_bytes());
    out.extend_from_slice(&(!(hlen as u32)).to_le_bytes());
    out.extend_from_slice(&VERSION.to_le_bytes());
    for d in [dims.h, dims.w, dims.k, dims.c] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.push(scale_code(scales.0)?);
    out.push(scale_code(scales.1)?);
    out.extend_from_slice(&(n as u16).to_le_bytes());
    out.extend_from_slice(&retain_count.to_le_bytes());
    out.extend_from_slice(&flags.to_le_bytes());
    debug_assert_eq!(out.len(), FIXED_HEADER);
    let mut offset = hlen as u64;
    for ((id, sflags, raw), comp) in sections.iter().zip(&compressed) {
        out.extend_from_slice(&id.to_le_bytes());
        out.extend_from_slice(&sflags.to_le_bytes());
        out.extend_from_slice(&offset.to_le_bytes());
        out.extend_from_slice(&(comp.len() as u64).to_le_bytes());
        out.extend_from_slice(&(raw.len() as u64).to_le_bytes());
        out.extend_from_slice(&crc32fast::hash(comp).to_le_bytes());
        offset += comp.len() as u64;
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    for comp in &compressed {
        out.extend_from_slice(comp);
    }
    Ok(out)
}

/// Serialises `model` (including its network, if any) to bytes.
pub fn container_bytes(model: &CompressedModel) -> Result<Vec<u8>> {
    model.validate()?;
    let mut flags = 0;
    if model.ncb.is_some() {
        flags |= FLAG_HAS_NCB;
    }
    if model.config.precision == ValuePrecision::F16 {
        flags |= FLAG_F16;
    }
    let sections: Vec<(u16, u16, Vec<u8>)> = section_payloads(model)
        .into_iter()
        .map(|(id, raw)| (id as u16, 0, raw))
        .collect();
    assemble(
        model.original_dims,
        (model.config.scale_color, model.config.scale_density),
        model.important.len() as u64,
        flags,
        &sections,
    )
}

/// Writes the container to `sink` and returns the number of bytes written.
pub fn write_container<W: Write>(model: &CompressedModel, sink: &mut W) -> Result<u64> {
    let bytes = container_bytes(model)?;
    sink.write_all(&bytes)?;
    Ok(bytes.len() as u64)
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes(b[at..at + 2].try_into().unwrap())
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn u64_at(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

const HEADER: &str = "HEADER";

/// Parses and verifies the header and section table. Section payloads are
/// not touched.
pub fn read_header(bytes: &[u8]) -> Result<ContainerHeader> {
    let truncated = || Error::TruncatedSection {
        section: HEADER.into(),
    };
    if bytes.len() < 4 {
        return Err(truncated());
    }
    if bytes[..4] != MAGIC {
        return Err(Error::BadMagic { expected: MAGIC });
    }
    if bytes.len() < 12 {
        return Err(truncated());
    }
    let hlen = u32_at(bytes, 4);
    if hlen != !u32_at(bytes, 8) {
        return Err(Error::ChecksumMismatch {
            section: HEADER.into(),
        });
    }
    let hlen = hlen as usize;
    if hlen < header_len(0) || (hlen - header_len(0)) % ENTRY_BYTES != 0 {
        return Err(malformed(HEADER, format!("header length {hlen}")));
    }
    if bytes.len() < hlen {
        return Err(truncated());
    }
    if crc32fast::hash(&bytes[..hlen - 4]) != u32_at(bytes, hlen - 4) {
        return Err(Error::ChecksumMismatch {
            section: HEADER.into(),
        });
    }
    let version = u32_at(bytes, 12);
    if version != VERSION {
        return Err(Error::UnsupportedVersion { version });
    }
    let dim = |i: usize| u32_at(bytes, 16 + 4 * i) as usize;
    let original_dims =
        GridDims::new(dim(0), dim(1), dim(2), dim(3)).map_err(|e| malformed(HEADER, e.to_string()))?;
    let scale = |at: usize| {
        Scale::from_denominator(bytes[at]).ok_or_else(|| malformed(HEADER, format!("scale code {}", bytes[at])))
    };
    let scale_color = scale(32)?;
    let scale_density = scale(33)?;
    let n = u16_at(bytes, 34) as usize;
    if header_len(n) != hlen {
        return Err(malformed(HEADER, "section count disagrees with header length"));
    }
    let retain_count = u64_at(bytes, 36);
    let flags = u32_at(bytes, 44);
    if flags & !(FLAG_HAS_NCB | FLAG_F16) != 0 {
        return Err(malformed(HEADER, format!("unknown flags {flags:#x}")));
    }
    let mut sections = Vec::with_capacity(n);
    let mut expect_offset = hlen as u64;
    for i in 0..n {
        let at = FIXED_HEADER + i * ENTRY_BYTES;
        let e = SectionEntry {
            id: u16_at(bytes, at),
            flags: u16_at(bytes, at + 2),
            offset: u64_at(bytes, at + 4),
            compressed_len: u64_at(bytes, at + 12),
            raw_len: u64_at(bytes, at + 20),
            checksum: u32_at(bytes, at + 28),
        };
        if e.offset != expect_offset {
            return Err(malformed(HEADER, format!("section {} at offset {}, expected {expect_offset}", e.name(), e.offset)));
        }
        if sections.iter().any(|s: &SectionEntry| s.id == e.id) {
            return Err(malformed(HEADER, format!("section {} declared twice", e.name())));
        }
        if let Some(prev) = sections.last() {
            if e.id < prev.id {
                return Err(malformed(HEADER, "sections out of order"));
            }
        }
        expect_offset = e
            .offset
            .checked_add(e.compressed_len)
            .ok_or_else(|| malformed(HEADER, "section length overflow"))?;
        sections.push(e);
    }
    Ok(ContainerHeader {
        version,
        original_dims,
        scale_color,
        scale_density,
        retain_count,
        flags,
        sections,
    })
}

/// Total byte length the header declares, for trailing-data checks.
fn declared_len(h: &ContainerHeader) -> u64 {
    h.sections
        .last()
        .map(|s| s.offset + s.compressed_len)
        .unwrap_or(h.byte_len() as u64)
}

/// Verifies a section's checksum and returns its compressed bytes.
fn section_slice<'a>(bytes: &'a [u8], e: &SectionEntry) -> Result<&'a [u8]> {
    let end = e.offset + e.compressed_len;
    if end > bytes.len() as u64 {
        return Err(Error::TruncatedSection { section: e.name() });
    }
    let s = &bytes[e.offset as usize..end as usize];
    if crc32fast::hash(s) != e.checksum {
        return Err(Error::ChecksumMismatch { section: e.name() });
    }
    Ok(s)
}

/// Decodes a container held in memory.
pub fn decode_container(bytes: &[u8]) -> Result<CompressedModel> {
    let header = read_header(bytes)?;
    let mut payloads: [Option<Vec<u8>>; 7] = Default::default();
    for e in &header.sections {
        let comp = section_slice(bytes, e)?;
        match SectionId::from_u16(e.id) {
            Some(id) => payloads[id as usize - 1] = Some(inflate(e, comp)?),
            None if e.flags & SECTION_UNKNOWN_OK != 0 => {}
            None => return Err(malformed(&e.name(), "unknown section id")),
        }
    }
    if (bytes.len() as u64) != declared_len(&header) {
        return Err(malformed(HEADER, "trailing bytes after the last section"));
    }
    let present = |id: SectionId| payloads[id as usize - 1].is_some();
    for id in SectionId::ALL {
        let required = id != SectionId::NcbWeights || header.has_ncb();
        if required != present(id) {
            let what = if required { "missing" } else { "unexpected" };
            return Err(malformed(HEADER, format!("{what} section {}", id.name())));
        }
    }
    let mut take = |id: SectionId| payloads[id as usize - 1].take().unwrap_or_default();

    let dims = header.original_dims;
    let shape = dims.shape();
    let full_mask = OccupancyMask::from_packed_bytes(shape, &take(SectionId::Mask))
        .map_err(|e| malformed("MASK", e.to_string()))?;

    let precision = header.precision();
    let volume = |id: SectionId, raw: Vec<u8>, scale: Scale, ch: usize| -> Result<SparseVolume> {
        let mask = coarsen_mask(&full_mask, scale).map_err(|e| malformed(id.name(), e.to_string()))?;
        let values = precision
            .decode(&raw)
            .ok_or_else(|| malformed(id.name(), "length is not a whole number of values"))?;
        SparseVolume::new(mask, ch, values).map_err(|e| malformed(id.name(), e.to_string()))
    };
    let down_density = volume(SectionId::DownDensity, take(SectionId::DownDensity), header.scale_density, 1)?;
    let down_color = volume(SectionId::DownColor, take(SectionId::DownColor), header.scale_color, dims.c)?;

    let count = usize::try_from(header.retain_count).map_err(|_| malformed(HEADER, "retain count overflow"))?;
    let indices = decode_indices(&take(SectionId::ImportantIdx), count)
        .ok_or_else(|| malformed("IMPORTANT_IDX", "bad varint stream"))?;
    let vals = ValuePrecision::F32
        .decode(&take(SectionId::ImportantVal))
        .filter(|v| v.len() == count * (1 + dims.c))
        .ok_or_else(|| malformed("IMPORTANT_VAL", "value count does not match the retain count"))?;
    let important = ImportantVoxelSet::new(indices, vals[..count].to_vec(), vals[count..].to_vec(), dims.c)
        .map_err(|e| malformed("IMPORTANT_IDX", e.to_string()))?;

    let ncb = match take(SectionId::NcbWeights) {
        raw if header.has_ncb() => Some(NcbNetwork::from_bytes(&raw)?),
        _ => None,
    };

    let meta = take(SectionId::Meta);
    if meta.len() != 16 {
        return Err(malformed("META", format!("{} bytes, expected 16", meta.len())));
    }
    let config = CompressionConfig {
        scale_color: header.scale_color,
        scale_density: header.scale_density,
        retain_fraction: f64::from_bits(u64_at(&meta, 0)),
        importance_rays: u64_at(&meta, 8),
        precision,
    };
    let model = CompressedModel {
        original_dims: dims,
        full_mask,
        down_density,
        down_color,
        important,
        ncb,
        config,
    };
    model.validate().map_err(|e| malformed(HEADER, e.to_string()))?;
    Ok(model)
}

/// Reads `source` to the end and decodes it.
pub fn read_container<R: Read>(source: &mut R) -> Result<CompressedModel> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    decode_container(&bytes)
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct SectionSize {
    pub name: String,
    pub raw_bytes: u64,
    pub compressed_bytes: u64,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct StorageReport {
    pub header_bytes: u64,
    pub sections: Vec<SectionSize>,
    pub total_bytes: u64,
    /// F32 sparse storage with a 4-byte pointer per occupied voxel.
    pub baseline_bytes: u64,
    pub ratio: f64,
}

/// `4 (1 + C) n + 4 n` bytes for `n` occupied voxels.
pub fn pointer_baseline_bytes(dims: GridDims, occupied: usize) -> u64 {
    (4 * (1 + dims.c) * occupied + 4 * occupied) as u64
}

pub fn report_from_bytes(bytes: &[u8], occupied: usize) -> Result<StorageReport> {
    let h = read_header(bytes)?;
    let sections = h
        .sections
        .iter()
        .map(|e| SectionSize {
            name: e.name(),
            raw_bytes: e.raw_len,
            compressed_bytes: e.compressed_len,
        })
        .collect();
    let total = bytes.len() as u64;
    let baseline = pointer_baseline_bytes(h.original_dims, occupied);
    Ok(StorageReport {
        header_bytes: h.byte_len() as u64,
        sections,
        total_bytes: total,
        baseline_bytes: baseline,
        ratio: baseline as f64 / total as f64,
    })
}

/// Per-section sizes of the container `model` serialises to.
pub fn storage_report(model: &CompressedModel) -> Result<StorageReport> {
    report_from_bytes(&container_bytes(model)?, model.full_mask.count())
}
