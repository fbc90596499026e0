//! Simulated sectored NOR flash.
//!
//! The model enforces the two physical constraints the filesystem is built
//! around: programming may only clear bits (1 -> 0) at byte granularity,
//! and the only way to set bits back to 1 is erasing a whole sector.
//!
//! For crash testing, a program-operation budget can be armed: once the
//! budget is exhausted every further byte program (or sector erase) fails
//! with [`DeviceError::CrashInjected`], leaving the cells exactly as they
//! were at the cut point. An interrupted erase leaves the sector half
//! erased, which is how a power loss mid-erasure shows up on real parts.

use thiserror::Error;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum DeviceError {
    #[error("sector size {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("geometry has no sectors")]
    EmptyGeometry,
    #[error("address {addr:#x}..{end:#x} out of device bounds ({size:#x})")]
    OutOfBounds { addr: usize, end: usize, size: usize },
    #[error("sector index {0} out of range")]
    BadSector(usize),
    #[error("program would set bit 0->1 at address {addr:#x}")]
    BitSetViolation { addr: usize },
    #[error("snapshot length {got} does not match geometry size {expected}")]
    SnapshotSizeMismatch { got: usize, expected: usize },
    #[error("injected crash during flash operation")]
    CrashInjected,
}

/// One sector's placement inside the device address space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SectorSpec {
    pub offset: usize,
    pub size: usize,
}

impl SectorSpec {
    pub fn end(&self) -> usize {
        self.offset + self.size
    }

    pub fn contains(&self, addr: usize) -> bool {
        addr >= self.offset && addr < self.end()
    }
}

/// Sector layout of a flash bank. Sector sizes must be powers of two.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Geometry {
    sectors: Vec<SectorSpec>,
}

impl Geometry {
    pub fn new(sector_sizes: &[usize]) -> Result<Self, DeviceError> {
        if sector_sizes.is_empty() {
            return Err(DeviceError::EmptyGeometry);
        }
        let mut sectors = Vec::with_capacity(sector_sizes.len());
        let mut offset = 0;
        for &size in sector_sizes {
            if size == 0 || !size.is_power_of_two() {
                return Err(DeviceError::NotPowerOfTwo(size));
            }
            sectors.push(SectorSpec { offset, size });
            offset += size;
        }
        Ok(Geometry { sectors })
    }

    /// STM32F401RE single-bank layout: 4x16 KiB, 1x64 KiB, 3x128 KiB.
    pub fn stm32f401re() -> Self {
        const KIB: usize = 1024;
        Geometry::new(&[
            16 * KIB,
            16 * KIB,
            16 * KIB,
            16 * KIB,
            64 * KIB,
            128 * KIB,
            128 * KIB,
            128 * KIB,
        ])
        .expect("static geometry is valid")
    }

    pub fn sector_count(&self) -> usize {
        self.sectors.len()
    }

    pub fn sector(&self, id: usize) -> Result<SectorSpec, DeviceError> {
        self.sectors.get(id).copied().ok_or(DeviceError::BadSector(id))
    }

    pub fn sectors(&self) -> impl Iterator<Item = (usize, SectorSpec)> + '_ {
        self.sectors.iter().copied().enumerate()
    }

    pub fn total_size(&self) -> usize {
        self.sectors.last().map(SectorSpec::end).unwrap_or(0)
    }
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry::stm32f401re()
    }
}

/// Byte-addressable NOR flash with monotonic program semantics.
#[derive(Debug, Clone)]
pub struct FlashDevice {
    geometry: Geometry,
    cells: Vec<u8>,
    /// Remaining program operations before an injected crash, if armed.
    crash_budget: Option<u64>,
    /// Total byte programs and erases performed, for trace-length probing.
    op_count: u64,
}

impl FlashDevice {
    /// A freshly erased device: every cell reads 0xFF.
    pub fn new(geometry: Geometry) -> Self {
        let size = geometry.total_size();
        FlashDevice {
            geometry,
            cells: vec![0xFF; size],
            crash_budget: None,
            op_count: 0,
        }
    }

    pub fn from_snapshot(geometry: Geometry, cells: Vec<u8>) -> Result<Self, DeviceError> {
        if cells.len() != geometry.total_size() {
            return Err(DeviceError::SnapshotSizeMismatch {
                got: cells.len(),
                expected: geometry.total_size(),
            });
        }
        Ok(FlashDevice {
            geometry,
            cells,
            crash_budget: None,
            op_count: 0,
        })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    /// Raw image of the device, byte for byte.
    pub fn snapshot(&self) -> Vec<u8> {
        self.cells.clone()
    }

    /// Arms (or disarms) the crash budget. `Some(n)` allows exactly `n`
    /// further program/erase operations to succeed.
    pub fn set_crash_budget(&mut self, budget: Option<u64>) {
        self.crash_budget = budget;
    }

    pub fn op_count(&self) -> u64 {
        self.op_count
    }

    fn charge(&mut self) -> Result<(), DeviceError> {
        if let Some(budget) = self.crash_budget.as_mut() {
            if *budget == 0 {
                return Err(DeviceError::CrashInjected);
            }
            *budget -= 1;
        }
        self.op_count += 1;
        Ok(())
    }

    pub fn read(&self, addr: usize, len: usize) -> Result<&[u8], DeviceError> {
        let end = addr.checked_add(len).ok_or(DeviceError::OutOfBounds {
            addr,
            end: usize::MAX,
            size: self.cells.len(),
        })?;
        if end > self.cells.len() {
            return Err(DeviceError::OutOfBounds {
                addr,
                end,
                size: self.cells.len(),
            });
        }
        Ok(&self.cells[addr..end])
    }

    /// Programs `bytes` starting at `addr`. Each byte is a separate
    /// program operation: only 1 -> 0 transitions are permitted and each
    /// consumes one unit of the crash budget.
    pub fn program(&mut self, addr: usize, bytes: &[u8]) -> Result<(), DeviceError> {
        let end = addr.checked_add(bytes.len()).ok_or(DeviceError::OutOfBounds {
            addr,
            end: usize::MAX,
            size: self.cells.len(),
        })?;
        if end > self.cells.len() {
            return Err(DeviceError::OutOfBounds {
                addr,
                end,
                size: self.cells.len(),
            });
        }
        for (i, &b) in bytes.iter().enumerate() {
            let cell = &mut self.cells[addr + i];
            if b & !*cell != 0 {
                return Err(DeviceError::BitSetViolation { addr: addr + i });
            }
            if let Some(budget) = self.crash_budget.as_mut() {
                if *budget == 0 {
                    return Err(DeviceError::CrashInjected);
                }
                *budget -= 1;
            }
            self.op_count += 1;
            *cell &= b;
        }
        Ok(())
    }

    /// Erases a whole sector back to 0xFF. Counts as one operation against
    /// the crash budget; an interrupted erase leaves the first half of the
    /// sector erased and the rest untouched.
    pub fn erase_sector(&mut self, sector: usize) -> Result<(), DeviceError> {
        let spec = self.geometry.sector(sector)?;
        match self.charge() {
            Ok(()) => {
                self.cells[spec.offset..spec.end()].fill(0xFF);
                Ok(())
            }
            Err(DeviceError::CrashInjected) => {
                let half = spec.offset + spec.size / 2;
                self.cells[spec.offset..half].fill(0xFF);
                Err(DeviceError::CrashInjected)
            }
            Err(e) => Err(e),
        }
    }

    /// Fault-mode helper: erases only the first `bytes` cells of a sector,
    /// as a power loss mid-erasure would.
    pub fn partial_erase(&mut self, sector: usize, bytes: usize) -> Result<(), DeviceError> {
        let spec = self.geometry.sector(sector)?;
        let upto = spec.offset + bytes.min(spec.size);
        self.cells[spec.offset..upto].fill(0xFF);
        Ok(())
    }

    pub fn sector_bytes(&self, sector: usize) -> Result<&[u8], DeviceError> {
        let spec = self.geometry.sector(sector)?;
        Ok(&self.cells[spec.offset..spec.end()])
    }

    pub fn sector_is_erased(&self, sector: usize) -> Result<bool, DeviceError> {
        Ok(self.sector_bytes(sector)?.iter().all(|&b| b == 0xFF))
    }
}
