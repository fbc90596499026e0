//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with its number on success. Run with
//! `cargo test -p jcgen-cli --test acceptance -- --nocapture`.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use flashfs::fs::BlockState;
use flashfs::{crc8, scan_device, Filesystem, FlashDevice, FsError, Geometry};
use jcgen::cap::{assemble_method, build_cap, inject_native_stub, ComponentKind};
use jcgen::config::MemoryConfig;
use jcgen::hexfile::{decode_hex, encode_hex};
use jcgen::image::{build_initial_image, encode_applet_field, field_type, ImageError};
use jcgen::jca::model::*;
use jcgen::jca::{collect_native_methods, parse_package_text};
use jcgen_cli::cmd_build;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

struct BuiltCorpus {
    out_dir: PathBuf,
    report: jcgen_cli::BuildReport,
}

/// The reference fixture build, shared by several criteria.
fn built() -> &'static BuiltCorpus {
    static BUILT: OnceLock<BuiltCorpus> = OnceLock::new();
    BUILT.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap().keep();
        let report = cmd_build(&fixture("full.toml"), &fixture("jca"), &dir, None).unwrap();
        BuiltCorpus {
            out_dir: dir,
            report,
        }
    })
}

fn built_device() -> FlashDevice {
    let cells = fs::read(built().out_dir.join("flash.bin")).unwrap();
    FlashDevice::from_snapshot(Geometry::stm32f401re(), cells).unwrap()
}

fn pass(criterion: u32, what: &str) {
    println!("acceptance: criterion {criterion:02} ({what}) PASS");
}

// ---------------------------------------------------------------------
// 1. Worked-example serialization is byte-exact.
// ---------------------------------------------------------------------
#[test]
fn criterion_01_worked_example_serialization() {
    let device = built_device();

    // Static field of the sample package (id 3), field 0.
    let fs = Filesystem::mount(device.clone()).unwrap();
    let value = fs.read(&[0x02, 0x03, 0x00]).unwrap().expect("static block present");
    assert_eq!(value, vec![0x80, 0x01, 0x02, 0x03, 0x04]);

    // Raw framing: tag length 3, one-byte data length 5, committed.
    let entry = *fs.table().get([0x02, 0x03, 0x00].as_slice()).unwrap();
    let raw = device.read(entry.address, entry.block_len).unwrap();
    assert_eq!(raw[0], 0b0100_0110, "header: committed, tag_len 3, dl 0");
    assert_eq!(raw[1], 5, "data length byte");
    assert_eq!(&raw[2..5], &[0x02, 0x03, 0x00]);
    assert_eq!(&raw[5..10], &[0x80, 0x01, 0x02, 0x03, 0x04]);

    // Instance-field codec, as the runtime would emit the two fields of
    // the worked example's class (package 3, class 0, fields 0 and 1).
    let (tag, data) = encode_applet_field(3, 0, 0, field_type::SHORT, &[0x45, 0x67]).unwrap();
    assert_eq!(tag, vec![0x03, 0x03, 0x00, 0x00]);
    assert_eq!(data, vec![0x02, 0x45, 0x67]);
    let (tag, data) = encode_applet_field(3, 0, 1, field_type::OBJECT, &[]).unwrap();
    assert_eq!(tag, vec![0x03, 0x03, 0x00, 0x01]);
    assert_eq!(data, vec![0x04]);

    pass(1, "worked-example fixture bytes");
}

// ---------------------------------------------------------------------
// 2. Field type code table.
// ---------------------------------------------------------------------
#[test]
fn criterion_02_field_type_constants() {
    use field_type::*;
    assert_eq!(BYTE, 0);
    assert_eq!(BOOLEAN, 1);
    assert_eq!(SHORT, 2);
    assert_eq!(INT, 3);
    assert_eq!(OBJECT, 4);
    assert_eq!(ARRAY_BYTE, 0x80);
    assert_eq!(ARRAY_BOOLEAN, 0x81);
    assert_eq!(ARRAY_SHORT, 0x82);
    assert_eq!(ARRAY_INT, 0x83);
    assert_eq!(ARRAY_OBJECT, 0x84);
    assert_eq!(TRANSIENT_ARRAY_BYTE, 0xC0);
    assert_eq!(TRANSIENT_ARRAY_BOOLEAN, 0xC1);
    assert_eq!(TRANSIENT_ARRAY_SHORT, 0xC2);
    assert_eq!(TRANSIENT_ARRAY_INT, 0xC3);
    assert_eq!(TRANSIENT_ARRAY_OBJECT, 0xC4);
    pass(2, "field type code table");
}

// ---------------------------------------------------------------------
// 3. Dispatcher text structure.
// ---------------------------------------------------------------------
#[test]
fn criterion_03_dispatcher_fidelity() {
    let header = fs::read_to_string(built().out_dir.join("jni.h")).unwrap();

    // Starting tuple from the config: package 1, class 0, method 1.
    let p = header.find("#define STARTING_JAVACARD_PACKAGE 0x01").unwrap();
    let c = header.find("#define STARTING_JAVACARD_CLASS   0x00").unwrap();
    let m = header.find("#define STARTING_JAVACARD_METHOD  0x01").unwrap();
    assert!(p < c && c < m, "defines in order");

    // Index macros: first native is 0x0000, the transient-int maker sits
    // at 0x0021, the worked-example instance native right after.
    assert!(header.contains("NATIVEIMPLEMENTATION_ARRAYCOPYREPACK"));
    let line = header
        .lines()
        .find(|l| l.contains("NATIVEIMPLEMENTATION_ARRAYCOPYREPACK"))
        .unwrap();
    assert!(line.trim_end().ends_with("0x0000"), "{line}");
    let line = header
        .lines()
        .find(|l| l.contains("NATIVEIMPLEMENTATION_MAKETRANSIENTINTARRAY"))
        .unwrap();
    assert!(line.trim_end().ends_with("0x0021"), "{line}");
    let line = header
        .lines()
        .find(|l| l.contains("#define MYCLASS_MYNATIVEMETHOD"))
        .unwrap();
    assert!(line.trim_end().ends_with("0x0022"), "{line}");

    // Extern declarations use the abstract value type names.
    assert!(header.contains(
        "extern jshort_t NativeImplementation_arrayCopyRepack(jref_t, jshort_t, jshort_t, jref_t, jshort_t);"
    ));
    assert!(header.contains("extern jshort_t MyClass_myNativeMethod(jbyte_t, jbyte_t);"));

    // The worked-example case: pop p2, pop p1, call, push short.
    let case = &header[header.find("case MYCLASS_MYNATIVEMETHOD:").unwrap()..];
    let case = &case[..case.find("break;").unwrap()];
    let p1 = case.find("jbyte_t param_01 = stack.pop_Byte();").unwrap();
    let p0 = case.find("jbyte_t param_00 = stack.pop_Byte();").unwrap();
    let call = case
        .find("jshort_t ret = MyClass_myNativeMethod(param_00, param_01);")
        .unwrap();
    let push = case.find("stack.push_Short(ret);").unwrap();
    assert!(p1 < p0 && p0 < call && call < push, "case body order");

    // Five-argument case pops in exact reverse declaration order.
    let case = &header[header.find("case NATIVEIMPLEMENTATION_ARRAYCOPYREPACK:").unwrap()..];
    let case = &case[..case.find("break;").unwrap()];
    let pops: Vec<&str> = case
        .lines()
        .filter(|l| l.contains("stack.pop_"))
        .collect();
    assert_eq!(pops.len(), 5);
    assert!(pops[0].contains("param_04") && pops[0].contains("pop_Short"));
    assert!(pops[1].contains("param_03") && pops[1].contains("pop_Reference"));
    assert!(pops[2].contains("param_02") && pops[2].contains("pop_Short"));
    assert!(pops[3].contains("param_01") && pops[3].contains("pop_Short"));
    assert!(pops[4].contains("param_00") && pops[4].contains("pop_Reference"));

    // Default branch throws the security exception.
    let default = &header[header.find("default:").unwrap()..];
    assert!(default.contains("throw SecurityException();"));

    // Case count equals the table size (35 = 34 bridge natives + the
    // worked-example method).
    assert_eq!(header.matches("    case ").count(), 35);
    assert!(header.contains("NATIVE_METHOD_COUNT"));
    assert_eq!(built().report.native_method_count, 35);

    pass(3, "dispatcher text structure");
}

// ---------------------------------------------------------------------
// 4. Reserved trap opcodes and the stub/index space.
// ---------------------------------------------------------------------
#[test]
fn criterion_04_trap_anchors_and_index_space() {
    let instr = |mnemonic: &str| Instruction {
        opcode: jcgen::opcodes::table().by_mnemonic(mnemonic).unwrap().opcode,
        label: None,
        operands: vec![],
    };
    assert_eq!(assemble_method(&[instr("impdep1")]).unwrap().bytes, vec![254]);
    assert_eq!(assemble_method(&[instr("impdep2")]).unwrap().bytes, vec![255]);

    let native = |ret: Option<JavaType>| JcaMethod {
        name: "n".into(),
        sig: MethodSig { params: vec![], ret },
        visibility: Visibility::Public,
        is_abstract: false,
        is_static: true,
        is_final: false,
        is_native: true,
        token: None,
        max_stack: 0,
        nargs: 0,
        max_locals: 0,
        body: None,
        handlers: vec![],
    };
    // Stub shape: push index, trap, typed return.
    let stub = assemble_method(&inject_native_stub(&native(Some(JavaType::Short)), 0)).unwrap();
    assert_eq!(stub.bytes, vec![0x11, 0x00, 0x00, 0xFE, 0x76]);
    let stub = assemble_method(&inject_native_stub(&native(None), 7)).unwrap();
    assert_eq!(stub.bytes, vec![0x11, 0x00, 0x07, 0xFE, 0x78]);
    let stub = assemble_method(&inject_native_stub(&native(Some(JavaType::Int)), 3)).unwrap();
    assert_eq!(stub.bytes, vec![0x11, 0x00, 0x03, 0xFE, 0x77]);
    let stub = assemble_method(&inject_native_stub(
        &native(Some(JavaType::Array(Box::new(JavaType::Byte)))),
        4,
    ))
    .unwrap();
    assert_eq!(stub.bytes, vec![0x11, 0x00, 0x04, 0xFE, 0x75]);
    // Top of the index space encodes as the full 16-bit immediate.
    let stub =
        assemble_method(&inject_native_stub(&native(Some(JavaType::Short)), 65535)).unwrap();
    assert_eq!(&stub.bytes[..3], &[0x11, 0xFF, 0xFF]);

    // 65535 natives are accepted, 65536 are not.
    let make_pkg = |count: usize| {
        let methods: Vec<JcaMethod> = (0..count)
            .map(|i| {
                let mut m = native(None);
                m.name = format!("n{i}");
                m
            })
            .collect();
        JcaPackage {
            name: "big".into(),
            aid: vec![0xF0, 0, 0, 0, 0xFE],
            version: (1, 0),
            imports: vec![],
            applets: vec![],
            constant_pool: vec![],
            classes: vec![JcaClass {
                name: "N".into(),
                visibility: Visibility::Public,
                is_abstract: false,
                is_final: false,
                is_interface: false,
                extends: None,
                shareable_interfaces: vec![],
                remote_interfaces: vec![],
                fields: vec![],
                public_method_table: None,
                package_method_table: None,
                interface_impls: vec![],
                methods,
            }],
        }
    };
    let ok = make_pkg(65535);
    assert_eq!(
        collect_native_methods(std::slice::from_ref(&ok)).unwrap().len(),
        65535
    );
    let too_many = make_pkg(65536);
    let err = collect_native_methods(std::slice::from_ref(&too_many)).unwrap_err();
    assert_eq!(err.count, 65536);

    pass(4, "trap opcodes, stubs, index cap");
}

// ---------------------------------------------------------------------
// 5. Exhaustive crash injection over a write script.
// ---------------------------------------------------------------------
#[test]
fn criterion_05_crash_safety_exhaustive() {
    let started = Instant::now();
    let geometry = Geometry::new(&[2048, 2048, 2048]).unwrap();
    let mut rng = StdRng::seed_from_u64(0xC8A5_0001);

    let mut fs = Filesystem::mount(FlashDevice::new(geometry.clone())).unwrap();
    let mut model: HashMap<Vec<u8>, Vec<u8>> = HashMap::new();
    let mut cuts_total = 0u64;

    for step in 0..120u32 {
        let tag = vec![rng.gen_range(0..8u8), rng.gen_range(0..3u8)];
        let len = rng.gen_range(8..48usize);
        let data: Vec<u8> = (0..len).map(|_| rng.gen()).collect();

        let pre = fs.device().snapshot();
        // Probe the operation count of this write (including any
        // defragmentation it triggers).
        let mut probe =
            Filesystem::mount(FlashDevice::from_snapshot(geometry.clone(), pre.clone()).unwrap())
                .unwrap();
        let before = probe.device().op_count();
        probe.write(&tag, &data).unwrap();
        let ops = probe.device().op_count() - before;

        for cut in 0..ops {
            let dev = FlashDevice::from_snapshot(geometry.clone(), pre.clone()).unwrap();
            let mut crashed = Filesystem::mount(dev).unwrap();
            crashed.set_crash_budget(Some(cut));
            let err = crashed.write(&tag, &data).unwrap_err();
            assert!(
                matches!(err, FsError::Device(_)),
                "step {step} cut {cut}: {err}"
            );
            let mut dev = crashed.into_device();
            dev.set_crash_budget(None);
            let remounted = Filesystem::mount(dev).unwrap();

            // The written tag holds the old value or the new value.
            let got = remounted.read(&tag).unwrap();
            let old = model.get(&tag);
            let ok = match &got {
                Some(v) => v == &data || Some(v) == old,
                None => old.is_none(),
            };
            assert!(ok, "step {step} cut {cut}: tag {tag:02x?} torn: {got:02x?}");

            // No other tag is lost or changed.
            for (t, v) in &model {
                if t == &tag {
                    continue;
                }
                let read = remounted
                    .read(t)
                    .unwrap()
                    .unwrap_or_else(|| panic!("step {step} cut {cut}: lost {t:02x?}"));
                assert_eq!(&read, v, "step {step} cut {cut}: tag {t:02x?}");
            }
            cuts_total += 1;
        }

        fs.write(&tag, &data).unwrap();
        model.insert(tag, data);
    }
    assert!(cuts_total > 3000, "only {cuts_total} cut points exercised");
    println!(
        "acceptance: criterion 05 exercised {cuts_total} cut points in {:.1?}",
        started.elapsed()
    );
    pass(5, "exhaustive write crash injection");
}

// ---------------------------------------------------------------------
// 6. Persistence equivalence against an in-memory model.
// ---------------------------------------------------------------------
#[test]
fn criterion_06_persistence_equivalence() {
    let started = Instant::now();
    let geometry = Geometry::new(&[1024, 1024, 1024]).unwrap();
    let mut defrag_cycles = 0u64;

    for case in 0..1000u64 {
        let mut rng = StdRng::seed_from_u64(0x6000_0000 + case);
        let mut fs = Filesystem::mount(FlashDevice::new(geometry.clone())).unwrap();
        let mut model: HashMap<Vec<u8>, Vec<u8>> = HashMap::new();
        let ops = rng.gen_range(30..60);
        let mut reserved = fs.reserved_sector();
        for _ in 0..ops {
            let tag = vec![rng.gen_range(0..5u8)];
            let len = rng.gen_range(0..90usize);
            let data: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
            match fs.write(&tag, &data) {
                Ok(()) => {
                    model.insert(tag, data);
                }
                Err(FsError::FlashFull { .. }) => {}
                Err(e) => panic!("case {case}: {e}"),
            }
            // A rotated reserve means a defragmentation cycle ran.
            let now = fs.reserved_sector();
            if now != reserved {
                defrag_cycles += 1;
                reserved = now;
            }
        }
        // Remount from raw cells and compare against the model.
        let remounted = Filesystem::mount(fs.into_device()).unwrap();
        assert_eq!(
            remounted.table().len(),
            model.len(),
            "case {case}: entry count"
        );
        for (tag, value) in &model {
            let got = remounted
                .read(tag)
                .unwrap()
                .unwrap_or_else(|| panic!("case {case}: tag {tag:02x?} missing"));
            assert_eq!(&got, value, "case {case}: tag {tag:02x?}");
        }
    }
    assert!(
        defrag_cycles >= 3,
        "workload saw only {defrag_cycles} defragmentation cycles"
    );
    println!(
        "acceptance: criterion 06 replayed 1000 cases, {defrag_cycles} defrag cycles, in {:.1?}",
        started.elapsed()
    );
    pass(6, "persistence equivalence vs model");
}

// ---------------------------------------------------------------------
// 7. Checksum oracle and single-bit corruption detection.
// ---------------------------------------------------------------------
#[test]
fn criterion_07_crc8_oracle_and_corruption_detection() {
    let started = Instant::now();

    // Bit-serial long-division reference, independent of the library's
    // table-driven path.
    fn crc8_reference(bytes: &[u8]) -> u8 {
        let mut crc: u8 = 0;
        for &b in bytes {
            crc ^= b;
            for _ in 0..8 {
                crc = if crc & 0x80 != 0 { (crc << 1) ^ 0x07 } else { crc << 1 };
            }
        }
        crc
    }

    let mut rng = StdRng::seed_from_u64(0xC4C8_0007);
    for _ in 0..100_000 {
        let len = rng.gen_range(0..64usize);
        let msg: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
        assert_eq!(crc8(&msg), crc8_reference(&msg));
    }

    // Every single-bit corruption of a committed block is detected at
    // mount, with one precisely bounded exception class. A flip that
    // preserves the block framing (state bits, tag bytes, data bytes,
    // hashsum byte) is rejected deterministically: the state changes or
    // the hashsum fails. A flip inside the framing fields (header tag
    // length and length-width bits, or the data-length field) makes the
    // scanner parse a differently-framed span, and a one-byte checksum
    // cannot reject a reframed span with more than 255/256 probability.
    // Such aliases must stay rare and may only ever stem from framing
    // flips; the stored (tag -> value) pair itself never survives.
    let geometry = Geometry::new(&[512, 512]).unwrap();
    let mut flips_total = 0u64;
    let mut framing_aliases = 0u64;
    for case in 0..1000u32 {
        let mut rng = StdRng::seed_from_u64(0x0B17_0000 + case as u64);
        let tag_len = rng.gen_range(1..=4usize);
        let tag: Vec<u8> = (0..tag_len).map(|_| rng.gen()).collect();
        let data_len = rng.gen_range(0..16usize);
        let data: Vec<u8> = (0..data_len).map(|_| rng.gen()).collect();

        let mut fs = Filesystem::mount(FlashDevice::new(geometry.clone())).unwrap();
        fs.write_in_sector(1, &tag, &data).unwrap();
        let entry = *fs.table().get(&tag[..]).unwrap();
        let clean = fs.into_device().snapshot();
        let len_width = if data.len() > 0xFF { 4 } else { 1 };

        for bit in 0..entry.block_len * 8 {
            let byte_index = bit / 8;
            // Header bits 5..0 select tag length and length width; the
            // following len_width bytes hold the data length.
            let is_framing_flip = (byte_index == 0 && bit % 8 <= 5)
                || (1..=len_width).contains(&byte_index);

            let mut cells = clean.clone();
            cells[entry.address + byte_index] ^= 1 << (bit % 8);
            let device = FlashDevice::from_snapshot(geometry.clone(), cells).unwrap();
            let mounted = Filesystem::mount(device).unwrap();

            // The stored pair never survives corruption.
            assert_ne!(
                mounted.read(&tag).unwrap().as_deref(),
                Some(&data[..]),
                "case {case}: flip {bit} left the stored value intact"
            );
            if mounted.table().is_empty() {
                flips_total += 1;
                continue;
            }
            // Something surfaced: only a reframed parse can do that, so
            // the flip must sit in a framing field.
            assert!(
                is_framing_flip,
                "case {case}: flip {bit} of block {tag:02x?} went undetected \
                 outside the framing fields"
            );
            framing_aliases += mounted.table().len() as u64;
            flips_total += 1;
        }
    }
    // Aliasing requires an 8-bit checksum collision on the reframed
    // span; beyond the percent level it would be a detection bug.
    assert!(
        framing_aliases * 100 < flips_total,
        "{framing_aliases} aliases in {flips_total} flips"
    );
    println!(
        "acceptance: criterion 07 checked 100000 messages and {flips_total} bit flips \
         ({framing_aliases} reframing aliases) in {:.1?}",
        started.elapsed()
    );
    pass(7, "checksum oracle + corruption detection");
}

// ---------------------------------------------------------------------
// 8. HEX round trip.
// ---------------------------------------------------------------------
#[test]
fn criterion_08_hex_round_trip() {
    let started = Instant::now();
    assert_eq!(encode_hex(&[0xFF; 4096], 0x0800_0000), ":00000001FF\n");

    let mut rng = StdRng::seed_from_u64(0x4E58_0008);
    for case in 0..500u32 {
        let size = rng.gen_range(64..4096usize);
        let mut snap = vec![0xFF; size];
        for _ in 0..rng.gen_range(0..12) {
            let start = rng.gen_range(0..size);
            let len = rng.gen_range(1..48).min(size - start);
            for cell in &mut snap[start..start + len] {
                *cell = rng.gen_range(0..0xFF);
            }
        }
        let base = [0u32, 0x0800_0000, 0x0000_FFF0][case as usize % 3];
        let text = encode_hex(&snap, base);
        let map = decode_hex(&text).unwrap();
        for (i, &b) in snap.iter().enumerate() {
            let addr = base + i as u32;
            if b == 0xFF {
                assert!(!map.contains_key(&addr), "case {case}: {addr:#x} emitted");
            } else {
                assert_eq!(map.get(&addr), Some(&b), "case {case}: {addr:#x}");
            }
        }
        // Every checksum validates: flip one checksum and decoding fails.
        if let Some(first_line_end) = text.find('\n') {
            let mut tampered = text.clone();
            let cs_pos = first_line_end - 1;
            let orig = tampered.as_bytes()[cs_pos];
            let replacement = if orig == b'0' { '1' } else { '0' };
            tampered.replace_range(cs_pos..=cs_pos, &replacement.to_string());
            assert!(decode_hex(&tampered).is_err(), "case {case}: tamper undetected");
        }
    }
    println!(
        "acceptance: criterion 08 round-tripped 500 snapshots in {:.1?}",
        started.elapsed()
    );
    pass(8, "HEX encode/decode identity");
}

// ---------------------------------------------------------------------
// 9. Structural suite over the three-package corpus.
// ---------------------------------------------------------------------
#[test]
fn criterion_09_cap_structural_suite() {
    let names = ["corelib", "nativeimpl", "applets"];
    let packages: Vec<JcaPackage> = names
        .iter()
        .map(|n| {
            let text = fs::read_to_string(fixture(&format!("jca/{n}.jca"))).unwrap();
            parse_package_text(&text).unwrap()
        })
        .collect();
    assert!(
        packages[2].imports.len() == 2,
        "applet package imports both others"
    );
    let natives = collect_native_methods(&packages).unwrap();
    assert_eq!(natives.len(), 34);

    for (id, pkg) in packages.iter().enumerate() {
        let cap = build_cap(pkg, id as u8, &natives).unwrap();
        let cap2 = build_cap(pkg, id as u8, &natives).unwrap();
        assert_eq!(cap, cap2, "{}: byte determinism", pkg.name);

        // Directory sizes equal re-measured component lengths.
        let dir = &cap.component(ComponentKind::Directory).unwrap().body;
        for kind in ComponentKind::ALL {
            let i = kind.tag() as usize - 1;
            let recorded = u16::from_be_bytes([dir[2 * i], dir[2 * i + 1]]);
            let actual = cap.component(kind).map(|c| c.body.len() as u16).unwrap_or(0);
            assert_eq!(recorded, actual, "{}: {} size", pkg.name, kind.name());
        }

        // Every reference-location offset lands on an in-range pool
        // index inside the method component.
        let method = &cap.component(ComponentKind::Method).unwrap().body;
        let pool = &cap.component(ComponentKind::ConstantPool).unwrap().body;
        let pool_count = u16::from_be_bytes([pool[0], pool[1]]);
        let refloc = &cap.component(ComponentKind::ReferenceLocation).unwrap().body;
        let decode_jumps = |encoded: &[u8]| {
            let mut out = Vec::new();
            let mut position = 0u32;
            let mut pending = 0u32;
            for &b in encoded {
                if b == 255 {
                    pending += 255;
                    continue;
                }
                position += pending + b as u32;
                pending = 0;
                out.push(position as usize);
            }
            out
        };
        let one_len = u16::from_be_bytes([refloc[0], refloc[1]]) as usize;
        let one = decode_jumps(&refloc[2..2 + one_len]);
        let two_len =
            u16::from_be_bytes([refloc[2 + one_len], refloc[3 + one_len]]) as usize;
        let two = decode_jumps(&refloc[4 + one_len..4 + one_len + two_len]);
        for offset in &one {
            let index = method[*offset] as u16;
            assert!(index < pool_count, "{}: cp1 {index} at {offset}", pkg.name);
        }
        for offset in &two {
            let index = u16::from_be_bytes([method[*offset], method[*offset + 1]]);
            assert!(index < pool_count, "{}: cp2 {index} at {offset}", pkg.name);
        }
        if pkg.name == "applets" {
            assert!(!one.is_empty(), "cp1 relocations exercised");
            assert!(!two.is_empty(), "cp2 relocations exercised");

            // Applet install offset resolves into the method component.
            let applet = &cap.component(ComponentKind::Applet).unwrap().body;
            let aid_len = applet[1] as usize;
            let offset =
                u16::from_be_bytes([applet[2 + aid_len], applet[3 + aid_len]]) as usize;
            assert!(offset < method.len());
            let expected = cap
                .method_offsets
                .offset("DemoApplet", "install", "(byte[], short, byte)void")
                .unwrap() as usize;
            assert_eq!(offset, expected);
        }
    }

    // The CLI path over the same corpus is digest-deterministic.
    let out1 = tempfile::tempdir().unwrap();
    let out2 = tempfile::tempdir().unwrap();
    let r1 = cmd_build(&fixture("corpus3.toml"), &fixture("jca"), out1.path(), None).unwrap();
    let r2 = cmd_build(&fixture("corpus3.toml"), &fixture("jca"), out2.path(), None).unwrap();
    assert_eq!(r1.outputs, r2.outputs);
    assert!(r1.warnings.is_empty());

    pass(9, "structural suite over 3-package corpus");
}

// ---------------------------------------------------------------------
// 10. Geometry defaults, placement, overflow.
// ---------------------------------------------------------------------
#[test]
fn criterion_10_geometry_and_placement() {
    // Default configuration reproduces the reference sector map.
    let config = MemoryConfig::default();
    let kib: Vec<usize> = config.sector_sizes.iter().map(|s| s / 1024).collect();
    assert_eq!(kib, [16, 16, 16, 16, 64, 128, 128, 128]);
    assert_eq!(config.target_sector, 5);
    let geometry = Geometry::stm32f401re();
    assert_eq!(geometry.total_size(), 512 * 1024);
    assert_eq!(geometry.sector(5).unwrap().offset, 0x2_0000);
    assert_eq!(geometry.sector(5).unwrap().size, 128 * 1024);

    // Every block of the reference build sits in sector 5.
    let device = built_device();
    let (blocks, corrupt) = scan_device(&device).unwrap();
    assert!(corrupt.is_empty());
    assert!(!blocks.is_empty());
    for b in &blocks {
        assert_eq!(b.sector, 5, "block {:02x?} at {:#x}", b.tag, b.address);
        assert_eq!(b.state, BlockState::Committed);
        assert!(b.crc_ok);
    }

    // A corpus padded past 64 KiB cannot serialize into the 64 KiB
    // sector 4.
    let big_package = |name: &str, bytes: usize| {
        let text = format!(
            ".package {name} {{ .aid 0xF0:0x00:0x00:0x00:{:#04x}; .version 1.0; \
             .class public Blob {{ .fields {{ public static byte[] blob = {{ {} }}; }} }} }}",
            0x40 + bytes % 8,
            vec!["1"; bytes].join(", ")
        );
        parse_package_text(&text).unwrap()
    };
    // Each package serializes to roughly twice its array size (the
    // array lives in the static-field component and again in the
    // initial-value block), so two 16 KiB arrays pad the image past the
    // 64 KiB sector while still fitting the 128 KiB one.
    let natives = collect_native_methods(&[]).unwrap();
    let packages: Vec<_> = (0..2)
        .map(|i| {
            let pkg = big_package(&format!("pad{i}"), 16 * 1024);
            build_cap(&pkg, i as u8, &natives).unwrap()
        })
        .collect();
    let mut overflow_config = MemoryConfig {
        packages: vec!["pad0".into(), "pad1".into()],
        target_sector: 4,
        ..MemoryConfig::default()
    };
    overflow_config.entry_point.package = "pad0".into();
    match build_initial_image(&packages, &overflow_config) {
        Err(ImageError::SectorOverflow { required, available }) => {
            assert_eq!(available, 64 * 1024);
            assert!(required > available, "{required} <= {available}");
        }
        other => panic!("expected SectorOverflow, got {other:?}"),
    }
    // The same corpus fits the 128 KiB sector 5.
    overflow_config.target_sector = 5;
    let device = build_initial_image(&packages, &overflow_config).unwrap();
    let (blocks, _) = scan_device(&device).unwrap();
    assert_eq!(blocks.len(), 1 + 2 + 2, "table + 2 structures + 2 statics");

    pass(10, "geometry defaults, placement, overflow");
}
