//! On-disk formats: the compressed `NCBC` container and the uncompressed
//! `VXGR` grid interchange file.

mod container;
mod raw;

pub use container::{
    container_bytes, decode_container, pointer_baseline_bytes, read_container, read_header,
    report_from_bytes, storage_report, write_container, ContainerHeader, SectionEntry, SectionId,
    SectionSize, StorageReport, FLAG_F16, FLAG_HAS_NCB, MAGIC, SECTION_UNKNOWN_OK, VERSION,
    ZLIB_LEVEL,
};
pub use raw::{decode_raw_grid, raw_grid_bytes, read_raw_grid, write_raw_grid, RAW_MAGIC};

#[cfg(test)]
pub(crate) use container::assemble;

#[cfg(test)]
mod tests;
