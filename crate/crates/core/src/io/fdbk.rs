//! FDBK model files: both domain models and the resolvability banks of a
//! [`FittedModel`], little-endian, values as f64.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::distance::{DistanceBank, GaussianBank, NeighborBank, PcaProjector};
use crate::dynamic::ResolvabilityBanks;
use crate::error::{Error, Result};
use crate::pipeline::{DomainModel, FittedModel};
use crate::record::Domain;
use crate::taxonomy::Thresholds;

pub const MAGIC: [u8; 4] = *b"FDBK";
pub const VERSION: u16 = 1;

const KIND_GAUSSIAN: u8 = 0;
const KIND_NEIGHBOR: u8 = 1;

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn bank(&mut self, bank: &DistanceBank) {
        match bank {
            DistanceBank::Gaussian(g) => {
                self.u8(KIND_GAUSSIAN);
                self.u32(g.dim() as u32);
                self.u32(g.group_ids().len() as u32);
                for &id in g.group_ids() {
                    self.u32(id);
                }
                for m in g.means() {
                    self.f64s(m);
                }
                // row-major
                let inv = g.shared_cov_inv();
                for r in 0..g.dim() {
                    for c in 0..g.dim() {
                        self.f64s(&[inv[(r, c)]]);
                    }
                }
            }
            DistanceBank::Neighbor(nb) => {
                self.u8(KIND_NEIGHBOR);
                self.u32(nb.dim() as u32);
                self.u64(nb.len() as u64);
                self.u32(nb.k() as u32);
                self.u8(nb.unit_norm() as u8);
                self.f64s(nb.points());
            }
        }
    }

    fn domain_model(&mut self, m: &DomainModel) {
        self.u8(m.thresholds.domain().as_u8());
        self.f64s(&[m.thresholds.tau_eu(), m.thresholds.tau_au()]);
        self.bank(&m.eu_bank);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(Error::Truncated {
            expected: (self.pos as u64).saturating_add(n as u64),
            found: self.buf.len() as u64,
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = n.checked_mul(8).ok_or_else(|| Error::Parse("FDBK length overflow".into()))?;
        Ok(self.take(bytes)?.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect())
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(self.f64s(1)?[0])
    }

    fn bank(&mut self) -> Result<DistanceBank> {
        match self.u8()? {
            KIND_GAUSSIAN => {
                let d = self.u32()? as usize;
                let g = self.u32()? as usize;
                let ids = (0..g).map(|_| self.u32()).collect::<Result<Vec<_>>>()?;
                let means = (0..g).map(|_| self.f64s(d)).collect::<Result<Vec<_>>>()?;
                let flat = self.f64s(d * d)?;
                let inv = DMatrix::from_row_slice(d, d, &flat);
                Ok(DistanceBank::Gaussian(GaussianBank::from_inverse(ids, means, inv)?))
            }
            KIND_NEIGHBOR => {
                let d = self.u32()? as usize;
                let n = self.u64()? as usize;
                let k = self.u32()? as usize;
                let unit_norm = self.u8()? != 0;
                let pts = self.f64s(n.checked_mul(d).ok_or_else(|| Error::Parse("FDBK length overflow".into()))?)?;
                Ok(DistanceBank::Neighbor(NeighborBank::from_stored(d, pts, k, unit_norm)?))
            }
            other => Err(Error::Parse(format!("unknown bank kind {other}"))),
        }
    }

    fn domain_model(&mut self, n_classes: usize) -> Result<DomainModel> {
        let domain = Domain::from_u8(self.u8()?)?;
        let tau_eu = self.f64()?;
        let tau_au = self.f64()?;
        let thresholds = Thresholds::new(tau_eu, tau_au, domain, n_classes)?;
        Ok(DomainModel { eu_bank: self.bank()?, thresholds })
    }
}

pub fn encode_fdbk(model: &FittedModel) -> Vec<u8> {
    let mut w = Writer::default();
    w.0.extend_from_slice(&MAGIC);
    w.u16(VERSION);
    w.u32(model.n_classes as u32);
    w.domain_model(&model.li);
    w.domain_model(&model.hi);
    let rb = &model.resolvability;
    w.bank(&rb.uar);
    w.bank(&rb.uai);
    match &rb.projector {
        None => w.u8(0),
        Some(p) => {
            w.u8(1);
            w.u32(p.input_dim() as u32);
            w.u32(p.output_dim() as u32);
            w.f64s(p.mean());
            w.f64s(p.components());
        }
    }
    w.0
}

pub fn decode_fdbk(bytes: &[u8]) -> Result<FittedModel> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic { expected: MAGIC, found: magic });
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::VersionMismatch { expected: VERSION, found: version });
    }
    let n_classes = r.u32()? as usize;
    let li = r.domain_model(n_classes)?;
    let hi = r.domain_model(n_classes)?;
    if li.thresholds.domain() != Domain::Li || hi.thresholds.domain() != Domain::Hi {
        return Err(Error::Parse("FDBK domain models out of order".into()));
    }
    let uar = r.bank()?;
    let uai = r.bank()?;
    let projector = match r.u8()? {
        0 => None,
        1 => {
            let d = r.u32()? as usize;
            let m = r.u32()? as usize;
            let mean = r.f64s(d)?;
            let comps = r.f64s(m * d)?;
            Some(PcaProjector::from_parts(mean, comps, m)?)
        }
        other => return Err(Error::Parse(format!("bad projector flag {other}"))),
    };
    if r.pos != bytes.len() {
        return Err(Error::TrailingData { expected: r.pos as u64, found: bytes.len() as u64 });
    }
    Ok(FittedModel { n_classes, li, hi, resolvability: ResolvabilityBanks::new(uar, uai, projector)? })
}

pub fn write_fdbk(model: &FittedModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_fdbk(model))?;
    Ok(())
}

pub fn read_fdbk(path: impl AsRef<Path>) -> Result<FittedModel> {
    decode_fdbk(&fs::read(path)?)
}
