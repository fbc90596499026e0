//! Tagged log-structured filesystem over simulated sectored NOR flash.
//!
//! The design targets small non-volatile memories where programming can
//! only clear bits and erasure works on whole sectors. Values are stored
//! as self-checksummed tag/data blocks appended log-style; the index
//! lives only in RAM and is rebuilt by scanning the flash at mount. One
//! sector is kept erased at all times so any other sector can be
//! defragmented by copying its surviving blocks over.
//!
//! The crate is self-contained and embeds its own flash device model, so
//! it can also be used standalone for building and inspecting device
//! images offline.

pub mod block;
pub mod crc8;
pub mod device;
pub mod fs;

pub use block::{block_len, BlockError, BlockHeader, TAG_LEN_MAX, TAG_LEN_MIN};
pub use crc8::crc8;
pub use device::{DeviceError, FlashDevice, Geometry, SectorSpec};
pub use fs::{
    scan_device, BlockState, Filesystem, FsError, MountEntry, MountReport, MountTable,
    RawBlockInfo,
};
