//! AFL-style input mutation: deterministic walking stages plus stacked havoc.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const ARITH_MAX: u8 = 35;

pub const INTERESTING_8: [u8; 9] = [0x80, 0xFF, 0, 1, 16, 32, 64, 100, 0x7F];
pub const INTERESTING_16: [u16; 10] = [0x8000, 0xFF7F, 128, 255, 256, 512, 1000, 1024, 4096, 0x7FFF];
pub const INTERESTING_32: [u32; 8] = [
    0x8000_0000,
    0xFA00_00FA,
    0xFFFF_7FFF,
    0x8000,
    0xFFFF,
    0x1_0000,
    0x05FF_FF05,
    0x7FFF_FFFF,
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    /// Walking flip of `width` consecutive bits (1, 2 or 4).
    Bitflip(u8),
    /// Add and subtract 1..=35 at every byte.
    Arith,
    /// Interesting 8-bit values at every byte, 16-bit at even offsets and
    /// 32-bit at 4-aligned offsets, both byte orders.
    Interesting,
    Havoc,
}

impl Stage {
    pub const DETERMINISTIC: [Stage; 5] = [
        Stage::Bitflip(1),
        Stage::Bitflip(2),
        Stage::Bitflip(4),
        Stage::Arith,
        Stage::Interesting,
    ];
}

fn set16(buf: &mut [u8], at: usize, v: u16, big_endian: bool) {
    let b = if big_endian { v.to_be_bytes() } else { v.to_le_bytes() };
    buf[at..at + 2].copy_from_slice(&b);
}

fn set32(buf: &mut [u8], at: usize, v: u32, big_endian: bool) {
    let b = if big_endian { v.to_be_bytes() } else { v.to_le_bytes() };
    buf[at..at + 4].copy_from_slice(&b);
}

/// Every child of a deterministic stage, in a fixed order. Children equal
/// to the parent are omitted. `Havoc` yields nothing here.
pub fn deterministic(bytes: &[u8], stage: Stage) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    let mut push = |child: Vec<u8>| {
        if child != bytes {
            out.push(child);
        }
    };
    match stage {
        Stage::Bitflip(w) => {
            let w = w as usize;
            let bits = bytes.len() * 8;
            for start in 0..bits.saturating_sub(w - 1) {
                let mut c = bytes.to_vec();
                for bit in start..start + w {
                    c[bit / 8] ^= 0x80 >> (bit % 8);
                }
                push(c);
            }
        }
        Stage::Arith => {
            for i in 0..bytes.len() {
                for d in 1..=ARITH_MAX {
                    let mut c = bytes.to_vec();
                    c[i] = bytes[i].wrapping_add(d);
                    push(c.clone());
                    c[i] = bytes[i].wrapping_sub(d);
                    push(c);
                }
            }
        }
        Stage::Interesting => {
            for i in 0..bytes.len() {
                for v in INTERESTING_8 {
                    let mut c = bytes.to_vec();
                    c[i] = v;
                    push(c);
                }
            }
            for i in (0..bytes.len().saturating_sub(1)).step_by(2) {
                for v in INTERESTING_8.iter().map(|&b| b as i8 as i16 as u16).chain(INTERESTING_16) {
                    for be in [false, true] {
                        let mut c = bytes.to_vec();
                        set16(&mut c, i, v, be);
                        push(c);
                    }
                }
            }
            for i in (0..bytes.len().saturating_sub(3)).step_by(4) {
                let wide = INTERESTING_8
                    .iter()
                    .map(|&b| b as i8 as i32 as u32)
                    .chain(INTERESTING_16.iter().map(|&h| h as i16 as i32 as u32))
                    .chain(INTERESTING_32);
                for v in wide {
                    for be in [false, true] {
                        let mut c = bytes.to_vec();
                        set32(&mut c, i, v, be);
                        push(c);
                    }
                }
            }
        }
        Stage::Havoc => {}
    }
    out
}

/// One mutated child. Deterministic stages pick one of their children at
/// random; an empty input always becomes a single random byte.
pub fn mutate(bytes: &[u8], rng: &mut ChaCha8Rng, stage: Stage) -> Vec<u8> {
    if bytes.is_empty() {
        return vec![rng.gen()];
    }
    match stage {
        Stage::Havoc => havoc(bytes, rng, usize::MAX),
        det => {
            let children = deterministic(bytes, det);
            if children.is_empty() {
                havoc(bytes, rng, usize::MAX)
            } else {
                children[rng.gen_range(0..children.len())].clone()
            }
        }
    }
}

fn block_len(rng: &mut ChaCha8Rng, limit: usize) -> usize {
    // Mostly short blocks, occasionally long ones.
    let cap = match rng.gen_range(0..3) {
        0 => 4,
        1 => 32,
        _ => 256,
    };
    rng.gen_range(1..=cap.min(limit).max(1))
}

/// Stack 2..=64 random edits, keeping the length within `1..=max_len`.
pub fn havoc(bytes: &[u8], rng: &mut ChaCha8Rng, max_len: usize) -> Vec<u8> {
    let mut c = bytes.to_vec();
    if c.is_empty() {
        c.push(rng.gen());
    }
    let stack = 1usize << rng.gen_range(1..=6);
    for _ in 0..stack {
        let len = c.len();
        match rng.gen_range(0..12) {
            0 => {
                let bit = rng.gen_range(0..len * 8);
                c[bit / 8] ^= 0x80 >> (bit % 8);
            }
            1 => {
                let i = rng.gen_range(0..len);
                c[i] = INTERESTING_8[rng.gen_range(0..INTERESTING_8.len())];
            }
            2 if len >= 2 => {
                let i = rng.gen_range(0..len - 1);
                let v = INTERESTING_16[rng.gen_range(0..INTERESTING_16.len())];
                set16(&mut c, i, v, rng.gen());
            }
            3 if len >= 4 => {
                let i = rng.gen_range(0..len - 3);
                let v = INTERESTING_32[rng.gen_range(0..INTERESTING_32.len())];
                set32(&mut c, i, v, rng.gen());
            }
            4 => {
                let i = rng.gen_range(0..len);
                c[i] = c[i].wrapping_sub(rng.gen_range(1..=ARITH_MAX));
            }
            5 => {
                let i = rng.gen_range(0..len);
                c[i] = c[i].wrapping_add(rng.gen_range(1..=ARITH_MAX));
            }
            6 if len >= 2 => {
                let i = rng.gen_range(0..len - 1);
                let be = rng.gen();
                let old = if be {
                    u16::from_be_bytes([c[i], c[i + 1]])
                } else {
                    u16::from_le_bytes([c[i], c[i + 1]])
                };
                let d = rng.gen_range(1..=ARITH_MAX as u16);
                let v = if rng.gen() { old.wrapping_add(d) } else { old.wrapping_sub(d) };
                set16(&mut c, i, v, be);
            }
            7 if len >= 4 => {
                let i = rng.gen_range(0..len - 3);
                let old = u32::from_le_bytes([c[i], c[i + 1], c[i + 2], c[i + 3]]);
                let d = rng.gen_range(1..=ARITH_MAX as u32);
                let v = if rng.gen() { old.wrapping_add(d) } else { old.wrapping_sub(d) };
                set32(&mut c, i, v, false);
            }
            8 => {
                let i = rng.gen_range(0..len);
                c[i] ^= rng.gen_range(1..=255u8);
            }
            9 if len >= 2 => {
                let n = block_len(rng, len - 1);
                let at = rng.gen_range(0..=len - n);
                c.drain(at..at + n);
            }
            10 if len < max_len => {
                let n = block_len(rng, max_len - len);
                let at = rng.gen_range(0..=len);
                let block: Vec<u8> = if rng.gen_bool(0.75) {
                    let n = n.min(len);
                    let from = rng.gen_range(0..=len - n);
                    c[from..from + n].to_vec()
                } else {
                    vec![if rng.gen() { rng.gen() } else { c[rng.gen_range(0..len)] }; n]
                };
                c.splice(at..at, block);
            }
            11 if len >= 2 => {
                let n = block_len(rng, len - 1);
                let from = rng.gen_range(0..=len - n);
                let to = rng.gen_range(0..=len - n);
                if rng.gen_bool(0.75) {
                    c.copy_within(from..from + n, to);
                } else {
                    let v = rng.gen();
                    c[to..to + n].fill(v);
                }
            }
            _ => {
                let i = rng.gen_range(0..len);
                c[i] = rng.gen();
            }
        }
    }
    c
}
