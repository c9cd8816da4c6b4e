//! MSB-first bit packing with Exp-Golomb codes.

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    bit_len: u64,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Exact number of bits written (excludes the zero padding of the last byte).
    pub fn bit_len(&self) -> u64 {
        self.bit_len
    }

    pub fn write_bit(&mut self, bit: bool) {
        let offset = (self.bit_len % 8) as u32;
        if offset == 0 {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().unwrap() |= 0x80 >> offset;
        }
        self.bit_len += 1;
    }

    /// Writes the low `n` bits of `value`, most significant first.
    pub fn write_bits(&mut self, value: u64, n: u32) {
        for i in (0..n).rev() {
            self.write_bit((value >> i) & 1 == 1);
        }
    }

    /// Unsigned Exp-Golomb `ue(v)`.
    pub fn write_ue(&mut self, v: u64) {
        let x = v + 1;
        let len = 64 - x.leading_zeros();
        self.write_bits(0, len - 1);
        self.write_bits(x, len);
    }

    /// Signed Exp-Golomb `se(v)`: `k > 0 -> 2k - 1`, `k <= 0 -> -2k`.
    pub fn write_se(&mut self, v: i64) {
        self.write_ue(se_to_ue(v));
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }
}

#[inline]
fn se_to_ue(v: i64) -> u64 {
    if v > 0 {
        2 * v as u64 - 1
    } else {
        2 * v.unsigned_abs()
    }
}

/// Length in bits of `ue(v)`.
#[inline]
pub fn ue_len(v: u64) -> u64 {
    let len = 64 - (v + 1).leading_zeros();
    u64::from(2 * len - 1)
}

/// Length in bits of `se(v)`.
#[inline]
pub fn se_len(v: i64) -> u64 {
    ue_len(se_to_ue(v))
}

pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: u64,
    limit: u64,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        BitReader {
            bytes,
            pos: 0,
            limit: bytes.len() as u64 * 8,
        }
    }

    pub fn position(&self) -> u64 {
        self.pos
    }

    pub fn read_bit(&mut self) -> Result<bool> {
        if self.pos >= self.limit {
            return Err(Error::Truncated);
        }
        let byte = self.bytes[(self.pos / 8) as usize];
        let bit = byte & (0x80 >> (self.pos % 8)) != 0;
        self.pos += 1;
        Ok(bit)
    }

    pub fn read_bits(&mut self, n: u32) -> Result<u64> {
        let mut v = 0u64;
        for _ in 0..n {
            v = (v << 1) | u64::from(self.read_bit()?);
        }
        Ok(v)
    }

    pub fn read_ue(&mut self) -> Result<u64> {
        let mut zeros = 0u32;
        while !self.read_bit()? {
            zeros += 1;
            if zeros > 63 {
                return Err(Error::format("exp-golomb code", "prefix too long"));
            }
        }
        let rest = self.read_bits(zeros)?;
        Ok(((1u64 << zeros) | rest) - 1)
    }

    pub fn read_se(&mut self) -> Result<i64> {
        let u = self.read_ue()?;
        Ok(if u % 2 == 1 {
            (u.div_ceil(2)) as i64
        } else {
            -((u / 2) as i64)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits_of(w: &BitWriter) -> String {
        (0..w.bit_len())
            .map(|i| {
                if w.bytes()[(i / 8) as usize] & (0x80 >> (i % 8)) != 0 {
                    '1'
                } else {
                    '0'
                }
            })
            .collect()
    }

    #[test]
    fn code_tables() {
        let table = [
            (0u64, "1"),
            (1, "010"),
            (2, "011"),
            (3, "00100"),
            (7, "0001000"),
        ];
        for (v, code) in table {
            let mut w = BitWriter::new();
            w.write_ue(v);
            assert_eq!(bits_of(&w), code);
            assert_eq!(ue_len(v), code.len() as u64);
        }
        let signed = [
            (0i64, "1"),
            (1, "010"),
            (-1, "011"),
            (2, "00100"),
            (-2, "00101"),
        ];
        for (v, code) in signed {
            let mut w = BitWriter::new();
            w.write_se(v);
            assert_eq!(bits_of(&w), code);
            assert_eq!(se_len(v), code.len() as u64);
        }
    }

    #[test]
    fn reader_inverts_writer() {
        let values = [0i64, 1, -1, 17, -300, 65_535, -1_000_000];
        let mut w = BitWriter::new();
        for &v in &values {
            w.write_se(v);
            w.write_ue(v.unsigned_abs());
        }
        let bytes = w.into_bytes();
        let mut r = BitReader::new(&bytes);
        for &v in &values {
            assert_eq!(r.read_se().unwrap(), v);
            assert_eq!(r.read_ue().unwrap(), v.unsigned_abs());
        }
    }

    #[test]
    fn truncation_is_detected() {
        let mut w = BitWriter::new();
        w.write_ue(1000);
        let bytes = w.into_bytes();
        let mut r = BitReader::new(&bytes[..1]);
        assert!(matches!(r.read_ue(), Err(Error::Truncated)));
    }
}
