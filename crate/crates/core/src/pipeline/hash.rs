//! Configurable ECMP hash pipeline.
//!
//! Application order is fixed: concatenate the selected fields (big-endian,
//! in `fields` order), rotate the key left by `pre_shift` bits, run the
//! seed-initialized hash function, then AND with `post_mask`.

use super::header::{IpAddrs, PacketHeader};
use super::PipelineError;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HeaderField {
    SrcIp,
    DstIp,
    Proto,
    SrcPort,
    DstPort,
    FlowLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum HashFunction {
    /// XOR of big-endian 32-bit words of the key (zero-padded, seed-mixed),
    /// folded to 16 bits so every key bit reaches the modulo range.
    XorFold,
    /// CRC-16/CCITT (poly 0x1021, MSB-first), init = low 16 bits of seed.
    Crc16,
    /// Reflected CRC-32 (poly 0xEDB88320), init = seed, no final xor.
    Crc32,
    /// Byte-indexed table mix: h = table[(h ^ byte) & 0xff] ^ (h >> 8).
    TableLookup(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HashConfig {
    pub fields: Vec<HeaderField>,
    pub function: HashFunction,
    pub seed: u32,
    /// Left bit-rotation of the concatenated key.
    pub pre_shift: u8,
    pub post_mask: u32,
}

impl HashConfig {
    pub fn five_tuple(function: HashFunction, seed: u32) -> Self {
        HashConfig {
            fields: vec![
                HeaderField::SrcIp,
                HeaderField::DstIp,
                HeaderField::Proto,
                HeaderField::SrcPort,
                HeaderField::DstPort,
            ],
            function,
            seed,
            pre_shift: 0,
            post_mask: u32::MAX,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.fields.is_empty() {
            return Err(PipelineError::InvalidHashConfig(
                "field selection must be nonempty".into(),
            ));
        }
        if let HashFunction::TableLookup(t) = &self.function {
            if t.len() != 256 {
                return Err(PipelineError::InvalidHashConfig(format!(
                    "lookup table has {} entries, need 256",
                    t.len()
                )));
            }
        }
        Ok(())
    }
}

fn push_field(
    key: &mut Vec<u8>,
    field: HeaderField,
    h: &PacketHeader,
) -> Result<(), PipelineError> {
    match field {
        HeaderField::SrcIp => match h.addrs {
            IpAddrs::V4 { src, .. } => key.extend_from_slice(&src.to_be_bytes()),
            IpAddrs::V6 { src, .. } => key.extend_from_slice(&src.to_be_bytes()),
        },
        HeaderField::DstIp => match h.addrs {
            IpAddrs::V4 { dst, .. } => key.extend_from_slice(&dst.to_be_bytes()),
            IpAddrs::V6 { dst, .. } => key.extend_from_slice(&dst.to_be_bytes()),
        },
        HeaderField::Proto => key.push(h.proto),
        HeaderField::SrcPort => {
            let (s, _) = h.ports.ok_or(PipelineError::MissingField(field))?;
            key.extend_from_slice(&s.to_be_bytes());
        }
        HeaderField::DstPort => {
            let (_, d) = h.ports.ok_or(PipelineError::MissingField(field))?;
            key.extend_from_slice(&d.to_be_bytes());
        }
        HeaderField::FlowLabel => {
            let label = h.flow_label().ok_or(PipelineError::MissingField(field))?;
            // 20 bits carried in 3 bytes.
            key.extend_from_slice(&label.to_be_bytes()[1..4]);
        }
    }
    Ok(())
}

/// Build the hash key for `h` under `cfg`, erroring on absent fields.
pub fn hash_key(cfg: &HashConfig, h: &PacketHeader) -> Result<Vec<u8>, PipelineError> {
    let mut key = Vec::with_capacity(16);
    for &f in &cfg.fields {
        push_field(&mut key, f, h)?;
    }
    rotate_left_bits(&mut key, cfg.pre_shift as u32);
    Ok(key)
}

/// Same as [`hash_key`] but silently skipping absent fields, the behavior the
/// forwarding path uses for headers without ports or flow labels.
pub fn hash_key_lenient(cfg: &HashConfig, h: &PacketHeader) -> Vec<u8> {
    let mut key = Vec::with_capacity(16);
    for &f in &cfg.fields {
        let _ = push_field(&mut key, f, h);
    }
    if !key.is_empty() {
        rotate_left_bits(&mut key, cfg.pre_shift as u32);
    }
    key
}

/// Circular left shift of a byte string by `bits`.
fn rotate_left_bits(buf: &mut [u8], bits: u32) {
    let n = buf.len();
    if n == 0 {
        return;
    }
    let total = n as u32 * 8;
    let bits = bits % total;
    if bits == 0 {
        return;
    }
    let byte_shift = (bits / 8) as usize;
    let bit_shift = bits % 8;
    let orig = buf.to_vec();
    for i in 0..n {
        let hi = orig[(i + byte_shift) % n];
        let lo = orig[(i + byte_shift + 1) % n];
        buf[i] = if bit_shift == 0 {
            hi
        } else {
            (hi << bit_shift) | (lo >> (8 - bit_shift))
        };
    }
}

pub fn hash_bytes(function: &HashFunction, seed: u32, key: &[u8]) -> u32 {
    match function {
        HashFunction::XorFold => xor_fold(seed, key),
        HashFunction::Crc16 => crc16_ccitt(seed as u16, key) as u32,
        HashFunction::Crc32 => crc32_reflected(seed, key),
        HashFunction::TableLookup(t) => table_mix(seed, t, key),
    }
}

/// Full pipeline: key extraction, pre-shift, hash, post-mask.
pub fn ecmp_hash(cfg: &HashConfig, h: &PacketHeader) -> Result<u32, PipelineError> {
    let key = hash_key(cfg, h)?;
    Ok(hash_bytes(&cfg.function, cfg.seed, &key) & cfg.post_mask)
}

pub(crate) fn ecmp_hash_lenient(cfg: &HashConfig, h: &PacketHeader) -> u32 {
    let key = hash_key_lenient(cfg, h);
    hash_bytes(&cfg.function, cfg.seed, &key) & cfg.post_mask
}

fn xor_fold(seed: u32, key: &[u8]) -> u32 {
    let mut acc = seed;
    for chunk in key.chunks(4) {
        let mut word = [0u8; 4];
        word[..chunk.len()].copy_from_slice(chunk);
        acc ^= u32::from_be_bytes(word);
    }
    (acc >> 16) ^ (acc & 0xffff)
}

fn crc16_table() -> &'static [u16; 256] {
    static TABLE: OnceLock<[u16; 256]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [0u16; 256];
        for (i, slot) in t.iter_mut().enumerate() {
            let mut crc = (i as u16) << 8;
            for _ in 0..8 {
                crc = if crc & 0x8000 != 0 {
                    (crc << 1) ^ 0x1021
                } else {
                    crc << 1
                };
            }
            *slot = crc;
        }
        t
    })
}

fn crc16_ccitt(init: u16, key: &[u8]) -> u16 {
    let table = crc16_table();
    let mut crc = init;
    for &b in key {
        crc = (crc << 8) ^ table[((crc >> 8) ^ b as u16) as usize & 0xff];
    }
    crc
}

fn crc32_table() -> &'static [u32; 256] {
    static TABLE: OnceLock<[u32; 256]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [0u32; 256];
        for (i, slot) in t.iter_mut().enumerate() {
            let mut crc = i as u32;
            for _ in 0..8 {
                crc = if crc & 1 != 0 {
                    (crc >> 1) ^ 0xedb8_8320
                } else {
                    crc >> 1
                };
            }
            *slot = crc;
        }
        t
    })
}

fn crc32_reflected(init: u32, key: &[u8]) -> u32 {
    let table = crc32_table();
    let mut crc = init;
    for &b in key {
        crc = (crc >> 8) ^ table[((crc ^ b as u32) & 0xff) as usize];
    }
    crc
}

fn table_mix(seed: u32, table: &[u32], key: &[u8]) -> u32 {
    let mut h = seed;
    for &b in key {
        h = table[((h ^ b as u32) & 0xff) as usize] ^ (h >> 8);
    }
    h
}

/// Deterministic 256-entry lookup table for TableLookup configs.
pub fn lookup_table_from_seed(seed: u64) -> Vec<u32> {
    let mut state = seed ^ 0x9e37_79b9_7f4a_7c15;
    (0..256)
        .map(|_| {
            // splitmix64 step
            state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
            (z ^ (z >> 31)) as u32
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::header::PROTO_TCP;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Bit-by-bit CRC-16/CCITT, independent of the table-driven path.
    fn crc16_bitwise(init: u16, data: &[u8]) -> u16 {
        let mut crc = init;
        for &b in data {
            crc ^= (b as u16) << 8;
            for _ in 0..8 {
                crc = if crc & 0x8000 != 0 {
                    (crc << 1) ^ 0x1021
                } else {
                    crc << 1
                };
            }
        }
        crc
    }

    /// Bit-by-bit reflected CRC-32.
    fn crc32_bitwise(init: u32, data: &[u8]) -> u32 {
        let mut crc = init;
        for &b in data {
            crc ^= b as u32;
            for _ in 0..8 {
                crc = if crc & 1 != 0 {
                    (crc >> 1) ^ 0xedb8_8320
                } else {
                    crc >> 1
                };
            }
        }
        crc
    }

    fn zero_header() -> PacketHeader {
        PacketHeader {
            src_mac: 0,
            dst_mac: 0,
            addrs: IpAddrs::V4 { src: 0, dst: 0 },
            proto: PROTO_TCP,
            ports: Some((0, 0)),
            ttl: 64,
            ecn: 0,
            payload_len: 0,
        }
    }

    #[test]
    fn xorfold_zero_key_is_zero() {
        // XOR identity: an all-zero key (every selected field zero, proto
        // included) folds to the seed.
        let cfg = HashConfig::five_tuple(HashFunction::XorFold, 0);
        let mut h = zero_header();
        h.proto = 0;
        assert_eq!(ecmp_hash(&cfg, &h).unwrap(), 0);
        let seeded = HashConfig { seed: 77, ..cfg };
        assert_eq!(ecmp_hash(&seeded, &h).unwrap(), 77);
    }

    #[test]
    fn crc16_matches_bitwise_oracle() {
        let data: Vec<u8> = (1..=8).collect();
        assert_eq!(crc16_ccitt(0, &data), crc16_bitwise(0, &data));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let len = rng.gen_range(0..32);
            let data: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
            let seed: u16 = rng.gen();
            assert_eq!(crc16_ccitt(seed, &data), crc16_bitwise(seed, &data));
        }
    }

    #[test]
    fn crc32_matches_bitwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let len = rng.gen_range(0..32);
            let data: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
            let seed: u32 = rng.gen();
            assert_eq!(crc32_reflected(seed, &data), crc32_bitwise(seed, &data));
        }
        // Standard vector: CRC-32 of "123456789" with full init and final
        // xor applied externally equals 0xcbf43926.
        let check = crc32_reflected(0xffff_ffff, b"123456789") ^ 0xffff_ffff;
        assert_eq!(check, 0xcbf4_3926);
    }

    #[test]
    fn unselected_fields_do_not_affect_hash() {
        let cfg = HashConfig {
            fields: vec![HeaderField::SrcIp, HeaderField::DstIp],
            function: HashFunction::Crc16,
            seed: 5,
            pre_shift: 0,
            post_mask: u32::MAX,
        };
        let a = PacketHeader::tcp_v4(0x0a000101, 0x0a000202, 1234, 80);
        let mut b = a;
        b.ports = Some((9999, 443));
        b.ttl = 3;
        assert_eq!(ecmp_hash(&cfg, &a).unwrap(), ecmp_hash(&cfg, &b).unwrap());
    }

    #[test]
    fn missing_field_is_an_error() {
        let cfg = HashConfig::five_tuple(HashFunction::XorFold, 0);
        let mut h = zero_header();
        h.proto = 1; // ICMP
        h.ports = None;
        assert_eq!(
            ecmp_hash(&cfg, &h),
            Err(PipelineError::MissingField(HeaderField::SrcPort))
        );
        let cfg2 = HashConfig {
            fields: vec![HeaderField::FlowLabel],
            ..cfg
        };
        assert!(matches!(
            ecmp_hash(&cfg2, &zero_header()),
            Err(PipelineError::MissingField(HeaderField::FlowLabel))
        ));
    }

    #[test]
    fn rotate_is_circular() {
        let mut buf = vec![0b1000_0000u8, 0, 0];
        rotate_left_bits(&mut buf, 1);
        assert_eq!(buf, vec![0, 0, 1]);
        let mut buf = vec![0xab, 0xcd];
        let orig = buf.clone();
        rotate_left_bits(&mut buf, 16);
        assert_eq!(buf, orig);
        rotate_left_bits(&mut buf, 8);
        assert_eq!(buf, vec![0xcd, 0xab]);
    }

    #[test]
    fn pre_shift_and_mask_change_results_deterministically() {
        let h = PacketHeader::tcp_v4(0x0a000101, 0x0a000202, 1234, 80);
        let base = HashConfig::five_tuple(HashFunction::Crc32, 99);
        let shifted = HashConfig {
            pre_shift: 5,
            ..base.clone()
        };
        assert_ne!(ecmp_hash(&base, &h), ecmp_hash(&shifted, &h));
        let masked = HashConfig {
            post_mask: 0xff,
            ..base.clone()
        };
        assert_eq!(
            ecmp_hash(&masked, &h).unwrap(),
            ecmp_hash(&base, &h).unwrap() & 0xff
        );
    }

    #[test]
    fn table_lookup_requires_256_entries() {
        let cfg = HashConfig {
            fields: vec![HeaderField::SrcIp],
            function: HashFunction::TableLookup(vec![1, 2, 3]),
            seed: 0,
            pre_shift: 0,
            post_mask: u32::MAX,
        };
        assert!(cfg.validate().is_err());
        let ok = HashConfig {
            function: HashFunction::TableLookup(lookup_table_from_seed(3)),
            ..cfg
        };
        ok.validate().unwrap();
        assert!(ecmp_hash(&ok, &zero_header()).is_ok());
    }
}
