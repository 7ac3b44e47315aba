//! Binary record layout.
//!
//! Header (20 bytes, little endian):
//! `payload_len u32 | family u16 | split u8 | ic_kind u8 | param_count u16 |
//! width u16 | n_times u32 | crc32 u32`.
//!
//! Payload: `sample u32 | description_index u16 | params f32[param_count] |
//! ic f32[width] | times f32[n_times] | values f32[n_times * width] |
//! sentence (u32 len + utf8) | description (u32 len + utf8)`.

use crate::catalog::IcFamily;

pub const HEADER_LEN: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub family: u16,
    pub split: u8,
    pub ic_kind: IcFamily,
    pub sample: u32,
    pub description_index: u16,
    pub params: Vec<f32>,
    pub ic: Vec<f32>,
    pub times: Vec<f32>,
    pub width: usize,
    pub values: Vec<f32>,
    pub sentence: String,
    pub description: String,
}

pub fn ic_code(kind: IcFamily) -> u8 {
    match kind {
        IcFamily::UniformState => 0,
        IcFamily::SineMixture => 1,
        IcFamily::StepFunction => 2,
        IcFamily::GaussianBump => 3,
    }
}

fn ic_from_code(c: u8) -> Option<IcFamily> {
    Some(match c {
        0 => IcFamily::UniformState,
        1 => IcFamily::SineMixture,
        2 => IcFamily::StepFunction,
        3 => IcFamily::GaussianBump,
        _ => return None,
    })
}

fn put_f32s(buf: &mut Vec<u8>, v: &[f32]) {
    for x in v {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

pub fn encode(r: &RawRecord) -> Vec<u8> {
    let mut payload = Vec::new();
    payload.extend_from_slice(&r.sample.to_le_bytes());
    payload.extend_from_slice(&r.description_index.to_le_bytes());
    put_f32s(&mut payload, &r.params);
    put_f32s(&mut payload, &r.ic);
    put_f32s(&mut payload, &r.times);
    put_f32s(&mut payload, &r.values);
    put_str(&mut payload, &r.sentence);
    put_str(&mut payload, &r.description);

    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&r.family.to_le_bytes());
    out.push(r.split);
    out.push(ic_code(r.ic_kind));
    out.extend_from_slice(&(r.params.len() as u16).to_le_bytes());
    out.extend_from_slice(&(r.width as u16).to_le_bytes());
    out.extend_from_slice(&(r.times.len() as u32).to_le_bytes());
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    out.extend_from_slice(&payload);
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.buf.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(s)
    }
    fn u16(&mut self) -> Option<u16> {
        Some(u16::from_le_bytes(self.take(2)?.try_into().ok()?))
    }
    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }
    fn f32s(&mut self, n: usize) -> Option<Vec<f32>> {
        let b = self.take(n.checked_mul(4)?)?;
        Some(b.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }
    fn string(&mut self) -> Option<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).ok()
    }
}

/// Decodes the record starting at `buf[0]`. Returns the record and its total
/// length, or `None` if the bytes are truncated, malformed or fail the CRC.
pub fn decode(buf: &[u8]) -> Option<(RawRecord, usize)> {
    let mut h = Cursor { buf, pos: 0 };
    let len = h.u32()? as usize;
    let family = h.u16()?;
    let split = *h.take(1)?.first()?;
    let ic_kind = ic_from_code(*h.take(1)?.first()?)?;
    let n_params = h.u16()? as usize;
    let width = h.u16()? as usize;
    let n_times = h.u32()? as usize;
    let crc = h.u32()?;
    let payload = buf.get(HEADER_LEN..HEADER_LEN + len)?;
    if crc32fast::hash(payload) != crc {
        return None;
    }
    let mut p = Cursor { buf: payload, pos: 0 };
    let sample = p.u32()?;
    let description_index = p.u16()?;
    let params = p.f32s(n_params)?;
    let ic = p.f32s(width)?;
    let times = p.f32s(n_times)?;
    let values = p.f32s(n_times.checked_mul(width)?)?;
    let sentence = p.string()?;
    let description = p.string()?;
    if p.pos != payload.len() {
        return None;
    }
    Some((
        RawRecord {
            family,
            split,
            ic_kind,
            sample,
            description_index,
            params,
            ic,
            times,
            width,
            values,
            sentence,
            description,
        },
        HEADER_LEN + len,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record() -> RawRecord {
        RawRecord {
            family: 13,
            split: 1,
            ic_kind: IcFamily::SineMixture,
            sample: 7,
            description_index: 3,
            params: vec![0.003],
            ic: vec![0.1, f32::MIN_POSITIVE, -0.0],
            times: vec![0.0, 1.0],
            width: 3,
            values: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            sentence: "The equation is u_t = c u_{xx} .".into(),
            description: "Heat diffuses.".into(),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let r = record();
        let bytes = encode(&r);
        let (back, n) = decode(&bytes).unwrap();
        assert_eq!(n, bytes.len());
        assert_eq!(back, r);
        assert_eq!(back.ic[2].to_bits(), (-0.0f32).to_bits());
    }

    #[test]
    fn corruption_is_detected() {
        let mut bytes = encode(&record());
        let last = bytes.len() - 1;
        bytes[last] ^= 1;
        assert!(decode(&bytes).is_none());
        assert!(decode(&bytes[..10]).is_none());
    }
}
