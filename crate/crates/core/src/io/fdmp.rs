//! FDMP feature dumps: a fixed 33-byte little-endian header followed by
//! columnar f32 features, f32 probabilities, optional u16 labels and
//! optional u32 coordinate pairs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::FeatureGrid;
use crate::record::{check_consistent, Domain, FeatureRecord, ProbabilityVector};

pub const MAGIC: [u8; 4] = *b"FDMP";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: u64 = 33;
pub const FLAG_LABELS: u16 = 1;
pub const FLAG_COORDS: u16 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FdmpHeader {
    pub flags: u16,
    pub n: u64,
    pub d: u32,
    pub n_classes: u32,
    pub height: u32,
    pub width: u32,
    pub domain: Domain,
}

impl FdmpHeader {
    pub fn has_labels(&self) -> bool {
        self.flags & FLAG_LABELS != 0
    }

    pub fn has_coords(&self) -> bool {
        self.flags & FLAG_COORDS != 0
    }

    /// Total file length implied by the header.
    pub fn file_len(&self) -> Result<u64> {
        let n = self.n;
        let per = 4 * (self.d as u64 + self.n_classes as u64)
            + if self.has_labels() { 2 } else { 0 }
            + if self.has_coords() { 8 } else { 0 };
        n.checked_mul(per)
            .and_then(|b| b.checked_add(HEADER_LEN))
            .ok_or_else(|| Error::Parse("FDMP header implies an impossible size".into()))
    }

    fn encode(&self) -> [u8; HEADER_LEN as usize] {
        let mut b = [0u8; HEADER_LEN as usize];
        b[0..4].copy_from_slice(&MAGIC);
        b[4..6].copy_from_slice(&VERSION.to_le_bytes());
        b[6..8].copy_from_slice(&self.flags.to_le_bytes());
        b[8..16].copy_from_slice(&self.n.to_le_bytes());
        b[16..20].copy_from_slice(&self.d.to_le_bytes());
        b[20..24].copy_from_slice(&self.n_classes.to_le_bytes());
        b[24..28].copy_from_slice(&self.height.to_le_bytes());
        b[28..32].copy_from_slice(&self.width.to_le_bytes());
        b[32] = self.domain.as_u8();
        b
    }

    /// Parses a header; magic and version are checked before anything else.
    pub fn decode(b: &[u8]) -> Result<Self> {
        if b.len() < 4 {
            return Err(Error::Truncated { expected: HEADER_LEN, found: b.len() as u64 });
        }
        let found: [u8; 4] = b[0..4].try_into().unwrap();
        if found != MAGIC {
            return Err(Error::BadMagic { expected: MAGIC, found });
        }
        if b.len() < 6 {
            return Err(Error::Truncated { expected: HEADER_LEN, found: b.len() as u64 });
        }
        let version = u16::from_le_bytes([b[4], b[5]]);
        if version != VERSION {
            return Err(Error::VersionMismatch { expected: VERSION, found: version });
        }
        if (b.len() as u64) < HEADER_LEN {
            return Err(Error::Truncated { expected: HEADER_LEN, found: b.len() as u64 });
        }
        let u32_at = |o: usize| u32::from_le_bytes(b[o..o + 4].try_into().unwrap());
        let flags = u16::from_le_bytes([b[6], b[7]]);
        if flags & !(FLAG_LABELS | FLAG_COORDS) != 0 {
            return Err(Error::Parse(format!("unknown FDMP flag bits {flags:#06x}")));
        }
        let h = Self {
            flags,
            n: u64::from_le_bytes(b[8..16].try_into().unwrap()),
            d: u32_at(16),
            n_classes: u32_at(20),
            height: u32_at(24),
            width: u32_at(28),
            domain: Domain::from_u8(b[32]).map_err(|_| Error::Parse(format!("unknown domain byte {}", b[32])))?,
        };
        if h.d == 0 || h.n_classes < 2 {
            return Err(Error::Parse(format!("invalid shape d={} C={}", h.d, h.n_classes)));
        }
        if (h.height == 0) != (h.width == 0) {
            return Err(Error::Parse("height and width must both be zero or both positive".into()));
        }
        if h.height > 0 && h.height as u64 * h.width as u64 != h.n {
            return Err(Error::Parse(format!("{}x{} grid but n = {}", h.height, h.width, h.n)));
        }
        Ok(h)
    }
}

/// Contents of one FDMP file. `height`/`width` are 0 for non-grid dumps.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub domain: Domain,
    pub height: u32,
    pub width: u32,
    pub records: Vec<FeatureRecord>,
}

impl FeatureSet {
    pub fn from_records(domain: Domain, records: Vec<FeatureRecord>) -> Self {
        Self { domain, height: 0, width: 0, records }
    }

    pub fn from_grid(grid: FeatureGrid) -> Self {
        Self {
            domain: grid.domain(),
            height: grid.height() as u32,
            width: grid.width() as u32,
            records: grid.into_records(),
        }
    }

    pub fn is_grid(&self) -> bool {
        self.height > 0
    }

    pub fn into_grid(self) -> Result<FeatureGrid> {
        if !self.is_grid() {
            return Err(Error::validation("feature set has no grid shape"));
        }
        FeatureGrid::from_coords(self.height as usize, self.width as usize, self.domain, self.records)
    }

    /// Labels of every record, or [`Error::LabelsAbsent`].
    pub fn labels(&self) -> Result<Vec<usize>> {
        self.records.iter().map(|r| r.label.ok_or(Error::LabelsAbsent)).collect()
    }

    pub fn probs(&self) -> Vec<ProbabilityVector> {
        self.records.iter().map(|r| r.probs.clone()).collect()
    }

    fn header(&self) -> Result<FdmpHeader> {
        let (d, c) = check_consistent(&self.records)?;
        if self.records.iter().any(|r| r.domain != self.domain) {
            return Err(Error::validation("records mix domains"));
        }
        let labels = self.records.iter().filter(|r| r.label.is_some()).count();
        let coords = self.records.iter().filter(|r| r.coord.is_some()).count();
        let n = self.records.len();
        if (labels != 0 && labels != n) || (coords != 0 && coords != n) {
            return Err(Error::validation("labels and coords must be present on all records or none"));
        }
        if c > u16::MAX as usize + 1 {
            return Err(Error::validation("too many classes for u16 labels"));
        }
        let mut flags = 0;
        if labels == n {
            flags |= FLAG_LABELS;
        }
        if coords == n {
            flags |= FLAG_COORDS;
        }
        if self.is_grid() && self.height as u64 * self.width as u64 != n as u64 {
            return Err(Error::validation("grid shape does not match the record count"));
        }
        Ok(FdmpHeader {
            flags,
            n: n as u64,
            d: d as u32,
            n_classes: c as u32,
            height: self.height,
            width: self.width,
            domain: self.domain,
        })
    }
}

/// Serializes to bytes. Values are stored as f32.
pub fn encode_fdmp(set: &FeatureSet) -> Result<Vec<u8>> {
    let h = set.header()?;
    let mut out = Vec::with_capacity(h.file_len()? as usize);
    out.extend_from_slice(&h.encode());
    for r in &set.records {
        for &v in &r.features {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    for r in &set.records {
        for &v in r.probs.as_slice() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    if h.has_labels() {
        for r in &set.records {
            out.extend_from_slice(&(r.label.unwrap() as u16).to_le_bytes());
        }
    }
    if h.has_coords() {
        for r in &set.records {
            let (a, b) = r.coord.unwrap();
            out.extend_from_slice(&a.to_le_bytes());
            out.extend_from_slice(&b.to_le_bytes());
        }
    }
    Ok(out)
}

/// Parses a whole FDMP buffer. The length is validated against the header
/// before any record is decoded.
pub fn decode_fdmp(bytes: &[u8]) -> Result<FeatureSet> {
    let h = FdmpHeader::decode(bytes)?;
    let expected = h.file_len()?;
    let found = bytes.len() as u64;
    if found < expected {
        return Err(Error::Truncated { expected, found });
    }
    if found > expected {
        return Err(Error::TrailingData { expected, found });
    }
    let n = h.n as usize;
    let (d, c) = (h.d as usize, h.n_classes as usize);
    let f32s = |off: usize, count: usize| -> Vec<f64> {
        bytes[off..off + 4 * count]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect()
    };
    let mut off = HEADER_LEN as usize;
    let feats = f32s(off, n * d);
    off += 4 * n * d;
    let probs = f32s(off, n * c);
    off += 4 * n * c;
    let labels: Option<Vec<usize>> = h.has_labels().then(|| {
        let v = bytes[off..off + 2 * n]
            .chunks_exact(2)
            .map(|b| u16::from_le_bytes([b[0], b[1]]) as usize)
            .collect();
        off += 2 * n;
        v
    });
    let coords: Option<Vec<(u32, u32)>> = h.has_coords().then(|| {
        bytes[off..off + 8 * n]
            .chunks_exact(8)
            .map(|b| {
                (u32::from_le_bytes(b[0..4].try_into().unwrap()), u32::from_le_bytes(b[4..8].try_into().unwrap()))
            })
            .collect()
    });

    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let p = ProbabilityVector::from_ingest(probs[i * c..(i + 1) * c].to_vec())
            .map_err(|e| Error::Parse(format!("record {i}: {e}")))?;
        let mut r = FeatureRecord::new(feats[i * d..(i + 1) * d].to_vec(), p, h.domain)
            .map_err(|e| Error::Parse(format!("record {i}: {e}")))?;
        if let Some(l) = &labels {
            r = r.with_label(l[i]).map_err(|e| Error::Parse(format!("record {i}: {e}")))?;
        }
        if let Some(cs) = &coords {
            r = r.with_coord(cs[i].0, cs[i].1);
        }
        records.push(r);
    }
    Ok(FeatureSet { domain: h.domain, height: h.height, width: h.width, records })
}

pub fn write_fdmp(set: &FeatureSet, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_fdmp(set)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

pub fn read_fdmp(path: impl AsRef<Path>) -> Result<FeatureSet> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    decode_fdmp(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(labels: bool, coords: bool) -> FeatureSet {
        let records = (0..6)
            .map(|i| {
                let p = ProbabilityVector::new(vec![0.25, 0.5, 0.25]).unwrap();
                let mut r = FeatureRecord::new(vec![i as f64, 0.5, -1.25], p, Domain::Hi).unwrap();
                if labels {
                    r = r.with_label(i % 3).unwrap();
                }
                if coords {
                    r = r.with_coord((i / 3) as u32, (i % 3) as u32);
                }
                r
            })
            .collect();
        FeatureSet { domain: Domain::Hi, height: if coords { 2 } else { 0 }, width: if coords { 3 } else { 0 }, records }
    }

    #[test]
    fn header_layout() {
        let bytes = encode_fdmp(&sample(true, true)).unwrap();
        assert_eq!(&bytes[0..4], b"FDMP");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(u16::from_le_bytes([bytes[6], bytes[7]]), 3);
        assert_eq!(bytes[32], 1);
        assert_eq!(bytes.len(), 33 + 6 * (4 * 3 + 4 * 3 + 2 + 8));
    }

    #[test]
    fn round_trip_all_flag_combinations() {
        for (l, c) in [(false, false), (true, false), (false, true), (true, true)] {
            let s = sample(l, c);
            assert_eq!(decode_fdmp(&encode_fdmp(&s).unwrap()).unwrap(), s);
        }
    }

    #[test]
    fn rejections() {
        let bytes = encode_fdmp(&sample(true, false)).unwrap();
        assert!(matches!(decode_fdmp(&bytes[..bytes.len() - 1]), Err(Error::Truncated { .. })));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(decode_fdmp(&long), Err(Error::TrailingData { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_fdmp(&bad), Err(Error::BadMagic { .. })));
        let mut ver = bytes;
        ver[4] = 2;
        assert!(matches!(decode_fdmp(&ver), Err(Error::VersionMismatch { expected: 1, found: 2 })));
    }

    #[test]
    fn labels_absent() {
        let s = decode_fdmp(&encode_fdmp(&sample(false, false)).unwrap()).unwrap();
        assert!(matches!(s.labels(), Err(Error::LabelsAbsent)));
    }
}
