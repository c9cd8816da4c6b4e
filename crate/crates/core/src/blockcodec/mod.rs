//! Hybrid intra codec: block DCT, uniform quantization with a QP-derived
//! step, Exp-Golomb coefficient coding and a decodable bitstream.
//!
//! There is no spatial prediction. Each block codes its own DCT after the
//! samples are centered at 0.5. The QP step is defined on the 8-bit sample
//! scale, so the step applied to `[0, 1]` samples is `delta_of_qp(qp) / 255`.
//!
//! Bitstream file layout (header little-endian): `"LNRC"`, u8 version = 1,
//! u16 width, u16 height, u8 channels, u8 base_qp, then the MSB-first bit
//! payload with the last byte zero-padded. Each macroblock codes a partition
//! flag bit (0 = 16x16, 1 = 4x4 split), `se(delta_qp)`, then the blocks of
//! each plane (Y, Cb, Cr) in raster order. A block codes `ue(eob)` followed by
//! `se(level)` for the first `eob` zigzag positions.

mod bitio;
mod transform;

pub use bitio::{se_len, ue_len, BitReader, BitWriter};
pub use transform::{dct2, idct2, zigzag, BLOCK_SIZES};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{rgb_to_ycbcr, ycbcr_to_rgb, Geometry, Image, MACROBLOCK};

pub const MAX_QP: i32 = 51;
pub const DEFAULT_CHROMA_QP_OFFSET: i32 = 3;
/// Ratio between the 8-bit sample scale the QP step is defined on and the
/// `[0, 1]` sample domain.
pub const PIXEL_SCALE: f64 = 255.0;

pub const BITSTREAM_MAGIC: &[u8; 4] = b"LNRC";
pub const BITSTREAM_VERSION: u8 = 1;
pub const HEADER_BYTES: usize = 11;
pub const HEADER_BITS: u64 = HEADER_BYTES as u64 * 8;

/// Quantizer step for `qp` on the 8-bit scale: `2^((qp - 4) / 6)`.
pub fn delta_of_qp(qp: i32) -> Result<f64> {
    if !(0..=MAX_QP).contains(&qp) {
        return Err(Error::invalid(format!("qp {qp} outside [0, {MAX_QP}]")));
    }
    Ok(2f64.powf(f64::from(qp - 4) / 6.0))
}

/// Quantizer step for `qp` in the `[0, 1]` sample domain.
pub fn pixel_step(qp: i32) -> Result<f64> {
    Ok(delta_of_qp(qp)? / PIXEL_SCALE)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QpParams {
    pub base_qp: i32,
    pub chroma_offset: i32,
}

impl QpParams {
    pub fn new(base_qp: i32) -> Result<Self> {
        delta_of_qp(base_qp)?;
        Ok(QpParams {
            base_qp,
            chroma_offset: DEFAULT_CHROMA_QP_OFFSET,
        })
    }

    /// QP used for `plane` (0 = luma) under a macroblock `delta_qp`.
    pub fn effective(&self, delta_qp: i32, plane: usize) -> i32 {
        let offset = if plane > 0 { self.chroma_offset } else { 0 };
        (self.base_qp + delta_qp + offset).clamp(0, MAX_QP)
    }
}

/// Level for coefficient `c`: `c / step` rounded half away from zero.
#[inline]
pub fn quantize(c: f64, step: f64) -> i32 {
    (c / step).round() as i32
}

#[inline]
pub fn dequantize(level: i32, step: f64) -> f64 {
    f64::from(level) * step
}

/// Exact coded size of a zigzag-ordered level vector.
pub fn block_bits(levels: &[i32]) -> u64 {
    let eob = end_of_block(levels);
    ue_len(eob as u64)
        + levels[..eob]
            .iter()
            .map(|&l| se_len(i64::from(l)))
            .sum::<u64>()
}

fn end_of_block(levels: &[i32]) -> usize {
    levels.iter().rposition(|&l| l != 0).map_or(0, |i| i + 1)
}

pub fn write_block(w: &mut BitWriter, levels: &[i32]) {
    let eob = end_of_block(levels);
    w.write_ue(eob as u64);
    for &l in &levels[..eob] {
        w.write_se(i64::from(l));
    }
}

pub fn read_block(r: &mut BitReader<'_>, n_coeffs: usize) -> Result<Vec<i32>> {
    let eob = r.read_ue()?;
    if eob > n_coeffs as u64 {
        return Err(Error::format(
            "block",
            format!("end of block {eob} beyond {n_coeffs} coefficients"),
        ));
    }
    let mut levels = vec![0; n_coeffs];
    for l in levels.iter_mut().take(eob as usize) {
        let v = r.read_se()?;
        *l = i32::try_from(v).map_err(|_| Error::format("block", "level out of range"))?;
    }
    Ok(levels)
}

/// Codes a zigzag-ordered level vector; returns `(bit count, bytes)`.
pub fn code_block(levels: &[i32]) -> (u64, Vec<u8>) {
    let mut w = BitWriter::new();
    write_block(&mut w, levels);
    (w.bit_len(), w.into_bytes())
}

pub fn decode_block(bytes: &[u8], n_coeffs: usize) -> Result<Vec<i32>> {
    read_block(&mut BitReader::new(bytes), n_coeffs)
}

/// Result of coding one square block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockCoding {
    /// Clamped reconstruction, row-major.
    pub reconstruction: Vec<f64>,
    /// Levels in zigzag order.
    pub levels: Vec<i32>,
    pub bits: u64,
}

/// Quantizes raster-order DCT coefficients of a centered block.
pub fn code_coefficients(coeffs: &[f64], step: f64) -> Result<BlockCoding> {
    let n = match coeffs.len() {
        16 => 4,
        256 => 16,
        len => return Err(Error::invalid(format!("block of {len} coefficients"))),
    };
    let zz = zigzag(n)?;
    let levels: Vec<i32> = zz.iter().map(|&i| quantize(coeffs[i], step)).collect();
    let bits = block_bits(&levels);
    let reconstruction = reconstruct_levels(&levels, step)?;
    Ok(BlockCoding {
        reconstruction,
        levels,
        bits,
    })
}

/// Decoder-side reconstruction of a block from zigzag levels.
pub fn reconstruct_levels(levels: &[i32], step: f64) -> Result<Vec<f64>> {
    let len = levels.len();
    if levels.iter().all(|&l| l == 0) {
        return Ok(vec![0.5; len]);
    }
    let n = if len == 16 { 4 } else { 16 };
    let zz = zigzag(n)?;
    let mut coeffs = vec![0.0; len];
    for (&l, &i) in levels.iter().zip(zz) {
        coeffs[i] = dequantize(l, step);
    }
    let mut out = idct2(&coeffs)?;
    for v in &mut out {
        *v = (*v + 0.5).clamp(0.0, 1.0);
    }
    Ok(out)
}

/// Forward transform of a block after centering at 0.5.
pub fn centered_dct(samples: &[f64]) -> Result<Vec<f64>> {
    let centered: Vec<f64> = samples.iter().map(|v| v - 0.5).collect();
    dct2(&centered)
}

/// Transform, quantize at `qp`, code and reconstruct one block.
pub fn reconstruct_block(samples: &[f64], qp: i32) -> Result<BlockCoding> {
    code_coefficients(&centered_dct(samples)?, pixel_step(qp)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Partition {
    Whole16,
    Split4,
}

impl Partition {
    pub fn block_size(self) -> usize {
        match self {
            Partition::Whole16 => 16,
            Partition::Split4 => 4,
        }
    }

    pub fn blocks_per_plane(self) -> usize {
        let per_side = MACROBLOCK / self.block_size();
        per_side * per_side
    }

    /// Offsets (row, col) of the blocks inside a macroblock, raster order.
    pub fn block_offsets(self) -> impl Iterator<Item = (usize, usize)> {
        let size = self.block_size();
        let per_side = MACROBLOCK / size;
        (0..per_side * per_side).map(move |i| ((i / per_side) * size, (i % per_side) * size))
    }
}

/// Side information bits of a macroblock: partition flag plus `se(delta_qp)`.
pub fn side_bits(delta_qp: i32) -> u64 {
    1 + se_len(i64::from(delta_qp))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MacroblockDecision {
    pub partition: Partition,
    pub delta_qp: i32,
    /// Zigzag levels per block, plane-major then raster order.
    pub levels: Vec<Vec<i32>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Header {
    pub width: u16,
    pub height: u16,
    pub channels: u8,
    pub base_qp: u8,
}

impl Header {
    pub fn for_image(geometry: Geometry, base_qp: i32) -> Result<Self> {
        delta_of_qp(base_qp)?;
        let width =
            u16::try_from(geometry.width).map_err(|_| Error::invalid("width exceeds 65535"))?;
        let height =
            u16::try_from(geometry.height).map_err(|_| Error::invalid("height exceeds 65535"))?;
        Ok(Header {
            width,
            height,
            channels: geometry.channels as u8,
            base_qp: base_qp as u8,
        })
    }

    pub fn geometry(&self) -> Result<Geometry> {
        Geometry::new(
            usize::from(self.width),
            usize::from(self.height),
            usize::from(self.channels),
        )
    }

    pub fn padded_geometry(&self) -> Result<Geometry> {
        let g = self.geometry()?;
        Ok(Geometry {
            width: g.width.div_ceil(MACROBLOCK) * MACROBLOCK,
            height: g.height.div_ceil(MACROBLOCK) * MACROBLOCK,
            channels: g.channels,
        })
    }

    pub fn macroblocks(&self) -> Result<usize> {
        let g = self.padded_geometry()?;
        Ok((g.width / MACROBLOCK) * (g.height / MACROBLOCK))
    }

    fn to_bytes(self) -> [u8; HEADER_BYTES] {
        let mut out = [0u8; HEADER_BYTES];
        out[..4].copy_from_slice(BITSTREAM_MAGIC);
        out[4] = BITSTREAM_VERSION;
        out[5..7].copy_from_slice(&self.width.to_le_bytes());
        out[7..9].copy_from_slice(&self.height.to_le_bytes());
        out[9] = self.channels;
        out[10] = self.base_qp;
        out
    }

    fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_BYTES {
            return Err(Error::Truncated);
        }
        if &bytes[..4] != BITSTREAM_MAGIC {
            return Err(Error::format("bitstream", "bad magic"));
        }
        if bytes[4] != BITSTREAM_VERSION {
            return Err(Error::format(
                "bitstream",
                format!("unsupported version {}", bytes[4]),
            ));
        }
        let header = Header {
            width: u16::from_le_bytes([bytes[5], bytes[6]]),
            height: u16::from_le_bytes([bytes[7], bytes[8]]),
            channels: bytes[9],
            base_qp: bytes[10],
        };
        header.geometry()?;
        delta_of_qp(i32::from(header.base_qp))?;
        Ok(header)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bitstream {
    pub header: Header,
    payload: Vec<u8>,
    payload_bits: u64,
}

impl Bitstream {
    /// Rate: header plus exact payload bit count, excluding byte padding.
    pub fn total_bits(&self) -> u64 {
        HEADER_BITS + self.payload_bits
    }

    pub fn payload_bits(&self) -> u64 {
        self.payload_bits
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_BYTES + self.payload.len());
        out.extend_from_slice(&self.header.to_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Parses a stored stream. The payload bit count is recovered by parsing
    /// every macroblock, so malformed payloads are rejected here.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header = Header::parse(bytes)?;
        let payload = bytes[HEADER_BYTES..].to_vec();
        let mut reader = BitReader::new(&payload);
        let geometry = header.padded_geometry()?;
        for _ in 0..header.macroblocks()? {
            read_macroblock(&mut reader, geometry.channels)?;
        }
        let payload_bits = reader.position();
        Ok(Bitstream {
            header,
            payload,
            payload_bits,
        })
    }
}

fn write_macroblock(w: &mut BitWriter, d: &MacroblockDecision) {
    w.write_bit(d.partition == Partition::Split4);
    w.write_se(i64::from(d.delta_qp));
    for levels in &d.levels {
        write_block(w, levels);
    }
}

fn read_macroblock(r: &mut BitReader<'_>, channels: usize) -> Result<MacroblockDecision> {
    let partition = if r.read_bit()? {
        Partition::Split4
    } else {
        Partition::Whole16
    };
    let delta_qp = i32::try_from(r.read_se()?)
        .map_err(|_| Error::format("macroblock", "delta qp out of range"))?;
    let size = partition.block_size();
    let n_blocks = partition.blocks_per_plane() * channels;
    let levels = (0..n_blocks)
        .map(|_| read_block(r, size * size))
        .collect::<Result<Vec<_>>>()?;
    Ok(MacroblockDecision {
        partition,
        delta_qp,
        levels,
    })
}

/// Serializes per-macroblock decisions (raster order) behind `header`.
pub fn assemble(header: Header, decisions: &[MacroblockDecision]) -> Result<Bitstream> {
    let expected = header.macroblocks()?;
    if decisions.len() != expected {
        return Err(Error::invalid(format!(
            "{} macroblock decisions for {expected} macroblocks",
            decisions.len()
        )));
    }
    let channels = usize::from(header.channels);
    let mut w = BitWriter::new();
    for d in decisions {
        if d.levels.len() != d.partition.blocks_per_plane() * channels {
            return Err(Error::invalid(
                "macroblock block count does not match partition",
            ));
        }
        write_macroblock(&mut w, d);
    }
    let payload_bits = w.bit_len();
    Ok(Bitstream {
        header,
        payload: w.into_bytes(),
        payload_bits,
    })
}

/// Writes the reconstruction of `d` into the coding-domain image `recon`
/// for the macroblock at (`row`, `col`).
pub fn reconstruct_macroblock(
    recon: &mut Image,
    qp: &QpParams,
    row: usize,
    col: usize,
    d: &MacroblockDecision,
) -> Result<()> {
    let per_plane = d.partition.blocks_per_plane();
    let size = d.partition.block_size();
    for plane in 0..recon.channels() {
        let step = pixel_step(qp.effective(d.delta_qp, plane))?;
        for (b, (dr, dc)) in d.partition.block_offsets().enumerate() {
            let samples = reconstruct_levels(&d.levels[plane * per_plane + b], step)?;
            recon.put_block(plane, row + dr, col + dc, size, &samples);
        }
    }
    Ok(())
}

/// Maps a padded coding-domain reconstruction to the output image: colour
/// conversion back to RGB, clamp, crop to the original size.
pub fn finish_reconstruction(coded: &Image, geometry: Geometry) -> Result<Image> {
    let rgb = if coded.channels() == 3 {
        ycbcr_to_rgb(coded).clamped()
    } else {
        coded.clone()
    };
    rgb.crop(geometry.width, geometry.height)
}

/// Coding-domain input: Y'CbCr for colour images, padded to macroblocks.
pub fn coding_domain(img: &Image) -> Image {
    rgb_to_ycbcr(img).pad_to_multiple(MACROBLOCK)
}

/// Decodes a bitstream to the cropped output image.
pub fn decode(stream: &Bitstream) -> Result<Image> {
    let header = stream.header;
    let padded = header.padded_geometry()?;
    let qp = QpParams::new(i32::from(header.base_qp))?;
    let mut reader = BitReader::new(&stream.payload);
    let mut recon = Image::filled(padded, 0.0);
    let mbs_per_row = padded.width / MACROBLOCK;
    for mb in 0..header.macroblocks()? {
        let d = read_macroblock(&mut reader, padded.channels)?;
        let (row, col) = (
            (mb / mbs_per_row) * MACROBLOCK,
            (mb % mbs_per_row) * MACROBLOCK,
        );
        reconstruct_macroblock(&mut recon, &qp, row, col, &d)?;
    }
    finish_reconstruction(&recon, header.geometry()?)
}

/// Encodes with one fixed partition and no QP adaptation. Returns the stream
/// and the encoder-side reconstruction.
pub fn encode_fixed(img: &Image, base_qp: i32, partition: Partition) -> Result<(Bitstream, Image)> {
    let header = Header::for_image(img.geometry(), base_qp)?;
    let qp = QpParams::new(base_qp)?;
    let coded = coding_domain(img);
    let padded = coded.geometry();
    let mut recon = Image::filled(padded, 0.0);
    let mut decisions = Vec::new();
    let size = partition.block_size();
    for row in (0..padded.height).step_by(MACROBLOCK) {
        for col in (0..padded.width).step_by(MACROBLOCK) {
            let mut levels = Vec::new();
            for plane in 0..padded.channels {
                let q = qp.effective(0, plane);
                for (dr, dc) in partition.block_offsets() {
                    let samples = coded.block(plane, row + dr, col + dc, size)?.samples();
                    levels.push(reconstruct_block(&samples, q)?.levels);
                }
            }
            let d = MacroblockDecision {
                partition,
                delta_qp: 0,
                levels,
            };
            reconstruct_macroblock(&mut recon, &qp, row, col, &d)?;
            decisions.push(d);
        }
    }
    let stream = assemble(header, &decisions)?;
    Ok((stream, finish_reconstruction(&recon, img.geometry())?))
}
