//! The on-disk compressed record.
//!
//! ```text
//! offset size  field
//!      0    6  magic "DLACS\0"
//!      6    1  version (1)
//!      7    1  flags: bit0 entropy coded, bit1 RGB planes, bit2 decode kernel
//!              present; bits 3..7 reserved for sample depth, zero = 8-bit
//!      8    4  width (u32)
//!     12    4  height (u32)
//!     16    2  kx (u16)
//!     18    2  ky (u16)
//!     20    1  n_c
//!     21    1  mask bit depth
//!     22    4  Q_scale (u32)
//!     26    4  sc_W (f32)
//!     30       n_c*kx*ky signed mask bytes
//!              [n_c*kx*ky f32 decode weights, if bit2]
//!              payload length (u64)
//!              payload
//! ```
//!
//! All integers are little-endian. The payload is the quantized bytes of
//! each plane back to back (three planes in RGB mode). With entropy coding
//! each plane is a framed stream (`u64` length, coded bytes).

use crate::bytes::{put_f32s, put_i8s, Reader};
use crate::encoder::CompQ;
use crate::entropy::{ec_encode, EcStream};
use crate::masks::check_bits;
use crate::{Error, Kernel, MaskSet, Result};

pub const MAGIC: &[u8; 6] = b"DLACS\0";
pub const VERSION: u8 = 1;
/// Bytes before the mask weights.
pub const FIXED_HEADER_LEN: usize = 30;

pub const FLAG_EC: u8 = 1;
pub const FLAG_RGB: u8 = 1 << 1;
pub const FLAG_DECODE: u8 = 1 << 2;
const KNOWN_FLAGS: u8 = FLAG_EC | FLAG_RGB | FLAG_DECODE;

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub width: u32,
    pub height: u32,
    pub entropy_coded: bool,
    pub rgb: bool,
    pub bits: u8,
    pub q_scale: u32,
    pub sc_w: f32,
    pub w_int: Kernel<i8>,
    pub decode: Option<Kernel<f32>>,
    pub payload: Vec<u8>,
}

impl Container {
    pub fn plane_count(&self) -> usize {
        if self.rgb {
            3
        } else {
            1
        }
    }

    fn blocks(&self) -> (usize, usize) {
        (
            self.width as usize / self.w_int.kx(),
            self.height as usize / self.w_int.ky(),
        )
    }

    /// Raw quantized bytes per plane.
    pub fn plane_len(&self) -> usize {
        let (bx, by) = self.blocks();
        CompQ::payload_len(bx, by, self.w_int.n_c())
    }

    /// Pack quantized planes sharing one mask set.
    pub fn from_planes(
        width: usize,
        height: usize,
        masks: &MaskSet,
        planes: &[CompQ],
        entropy_coded: bool,
        include_decode: bool,
    ) -> Result<Self> {
        let rgb = match planes.len() {
            1 => false,
            3 => true,
            n => return Err(Error::invalid(format!("{n} planes; expected 1 or 3"))),
        };
        let (bx, by) = (width / masks.kx(), height / masks.ky());
        if bx * masks.kx() != width || by * masks.ky() != height {
            return Err(Error::DimensionMismatch(
                "frame dims not divisible by masks".into(),
            ));
        }
        let mut payload = Vec::new();
        for p in planes {
            if (p.blocks_x, p.blocks_y, p.n_c) != (bx, by, masks.n_c())
                || p.q_scale != planes[0].q_scale
            {
                return Err(Error::DimensionMismatch(
                    "plane shape or Q_scale differs".into(),
                ));
            }
            if entropy_coded {
                payload.extend(ec_encode(&p.data).to_bytes());
            } else {
                payload.extend_from_slice(&p.data);
            }
        }
        let decode = if include_decode {
            Some(masks.decode.clone().ok_or(Error::DecodeKernelUnavailable)?)
        } else {
            None
        };
        Ok(Self {
            width: u32::try_from(width).map_err(|_| Error::invalid("width exceeds u32"))?,
            height: u32::try_from(height).map_err(|_| Error::invalid("height exceeds u32"))?,
            entropy_coded,
            rgb,
            bits: masks.bits,
            q_scale: planes[0].q_scale,
            sc_w: masks.sc_w,
            w_int: masks.w_int.clone(),
            decode,
            payload,
        })
    }

    /// Unpack (and entropy decode, if flagged) every plane.
    pub fn planes(&self) -> Result<Vec<CompQ>> {
        let (bx, by) = self.blocks();
        let len = self.plane_len();
        let mut out = Vec::with_capacity(self.plane_count());
        let mut rest = &self.payload[..];
        for _ in 0..self.plane_count() {
            let data = if self.entropy_coded {
                let (data, used) = EcStream::decode_framed(rest)?;
                rest = &rest[used..];
                data
            } else {
                let data = rest.get(..len).ok_or(Error::UnexpectedEof)?.to_vec();
                rest = &rest[len..];
                data
            };
            if data.len() != len {
                return Err(Error::malformed(
                    "container",
                    format!("plane holds {} bytes, expected {len}", data.len()),
                ));
            }
            out.push(CompQ {
                blocks_x: bx,
                blocks_y: by,
                n_c: self.w_int.n_c(),
                data,
                q_scale: self.q_scale,
            });
        }
        if !rest.is_empty() {
            return Err(Error::malformed("container", "trailing payload bytes"));
        }
        Ok(out)
    }

    /// The mask set recorded in the container (no float masks).
    pub fn mask_set(&self) -> Result<MaskSet> {
        let mut m = MaskSet::from_integer(self.w_int.clone(), self.bits, self.sc_w)?;
        m.decode = self.decode.clone();
        m.q_scale = self.q_scale;
        Ok(m)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut flags = 0;
        if self.entropy_coded {
            flags |= FLAG_EC;
        }
        if self.rgb {
            flags |= FLAG_RGB;
        }
        if self.decode.is_some() {
            flags |= FLAG_DECODE;
        }
        let mut out = Vec::with_capacity(
            FIXED_HEADER_LEN + self.w_int.weights().len() * 5 + 8 + self.payload.len(),
        );
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(flags);
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&(self.w_int.kx() as u16).to_le_bytes());
        out.extend_from_slice(&(self.w_int.ky() as u16).to_le_bytes());
        out.push(self.w_int.n_c() as u8);
        out.push(self.bits);
        out.extend_from_slice(&self.q_scale.to_le_bytes());
        out.extend_from_slice(&self.sc_w.to_le_bytes());
        put_i8s(&mut out, self.w_int.weights());
        if let Some(d) = &self.decode {
            put_f32s(&mut out, d.weights());
        }
        out.extend_from_slice(&(self.payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::BadMagic("container"));
        }
        let version = r.u8()?;
        if version != VERSION {
            return Err(Error::VersionMismatch {
                what: "container",
                found: version,
                expected: VERSION,
            });
        }
        let flags = r.u8()?;
        if flags & !KNOWN_FLAGS != 0 {
            return Err(Error::malformed(
                "container",
                format!("unsupported flags {flags:#04x} (only 8-bit samples are supported)"),
            ));
        }
        let width = r.u32()?;
        let height = r.u32()?;
        let kx = r.u16()? as usize;
        let ky = r.u16()? as usize;
        let n_c = r.u8()? as usize;
        let bits = r.u8()?;
        check_bits(bits)?;
        let q_scale = r.u32()?;
        if q_scale == 0 {
            return Err(Error::malformed("container", "Q_scale is zero"));
        }
        let sc_w = r.f32()?;
        let n = kx * ky * n_c;
        let w_int = Kernel::new(kx, ky, n_c, r.i8s(n)?)?;
        let decode = if flags & FLAG_DECODE != 0 {
            Some(Kernel::new(kx, ky, n_c, r.f32s(n)?)?)
        } else {
            None
        };
        let payload_len = usize::try_from(r.u64()?).map_err(|_| Error::UnexpectedEof)?;
        let payload = r.take(payload_len)?.to_vec();
        if r.remaining() != 0 {
            return Err(Error::malformed(
                "container",
                "trailing bytes after payload",
            ));
        }
        if !(width as usize).is_multiple_of(kx) || !(height as usize).is_multiple_of(ky) {
            return Err(Error::malformed(
                "container",
                "dims not divisible by mask size",
            ));
        }
        let c = Self {
            width,
            height,
            entropy_coded: flags & FLAG_EC != 0,
            rgb: flags & FLAG_RGB != 0,
            bits,
            q_scale,
            sc_w,
            w_int,
            decode,
            payload,
        };
        if !c.entropy_coded && c.payload.len() != c.plane_len() * c.plane_count() {
            return Err(Error::malformed(
                "container",
                format!(
                    "payload holds {} bytes, expected {}",
                    c.payload.len(),
                    c.plane_len() * c.plane_count()
                ),
            ));
        }
        Ok(c)
    }
}
