//! Offline toolchain that turns assembly-form package sources into a
//! bootable flash memory image.
//!
//! The pipeline: parse `.jca` packages ([`jca`]), register native methods
//! and build the executable component set per package ([`cap`]), generate
//! the native-call dispatcher header ([`dispatcher`]), serialize the
//! initial state into a tagged-filesystem flash image ([`image`]) and
//! emit it as Intel HEX ([`hexfile`]).

pub mod cap;
pub mod config;
pub mod dispatcher;
pub mod hexfile;
pub mod image;
pub mod jca;
pub mod opcodes;
