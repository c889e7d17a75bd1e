//! Binary model file, all integers and floats little-endian:
//!
//! ```text
//! u8        format version
//! [u8; 4]   magic "RFFN"
//! u8        loss tag (0 squared, 1 cross-entropy)
//! u16 + ..  generator id, UTF-8
//! u64 u64   p, s
//! f64 f64 u64 u64 u64 f64 u64
//!           eta, mu, patience, max_epochs, batch_size, val_fraction, seed
//! f64 × s·p frequencies, row-major
//! f64 × s   phases
//! f64 × s   coefficients β
//! f64 × p   relevances λ
//! f64 × p   feature means
//! f64 × p   feature scales
//! u8        1 if feature names follow, else 0
//! (u32 + ..) × p  feature names, UTF-8
//! ```

use ndarray::{Array1, Array2};

use super::{ConfigEcho, Model};
use crate::data::StandardizationStats;
use crate::error::{Error, Result};
use crate::objective::LossKind;
use crate::spectral::{FourierFeatures, RelevanceVector};

pub const FORMAT_VERSION: u8 = 1;
pub const MAGIC: &[u8; 4] = b"RFFN";

pub(super) fn encode(m: &Model) -> Vec<u8> {
    let ff = &m.features;
    let (s, p) = (ff.num_features(), ff.dim());
    let mut out = Vec::with_capacity(64 + 8 * (s * p + 2 * s + 3 * p));
    out.push(FORMAT_VERSION);
    out.extend_from_slice(MAGIC);
    out.push(match m.loss {
        LossKind::SquaredError => 0,
        LossKind::BinaryCrossEntropy => 1,
    });
    out.extend_from_slice(&(m.rng_id.len() as u16).to_le_bytes());
    out.extend_from_slice(m.rng_id.as_bytes());
    for v in [p as u64, s as u64] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let c = &m.config;
    out.extend_from_slice(&c.eta.to_le_bytes());
    out.extend_from_slice(&c.mu.to_le_bytes());
    for v in [c.patience, c.max_epochs, c.batch_size] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&c.val_fraction.to_le_bytes());
    out.extend_from_slice(&c.seed.to_le_bytes());
    let floats = ff
        .omega()
        .iter()
        .chain(ff.phases().iter())
        .chain(&m.beta)
        .chain(m.lambda.as_slice())
        .chain(&m.stats.mean)
        .chain(&m.stats.std);
    for v in floats {
        out.extend_from_slice(&v.to_le_bytes());
    }
    match &m.feature_names {
        None => out.push(0),
        Some(names) => {
            out.push(1);
            for name in names {
                out.extend_from_slice(&(name.len() as u32).to_le_bytes());
                out.extend_from_slice(name.as_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(corrupt(format!("truncated while reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| corrupt("size overflow"))?, what)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn string(&mut self, len: usize, what: &str) -> Result<String> {
        String::from_utf8(self.take(len, what)?.to_vec())
            .map_err(|_| corrupt(format!("{what} is not valid UTF-8")))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Serialization(msg.into())
}

pub(super) fn decode(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let version = r.u8("version")?;
    if version != FORMAT_VERSION {
        return Err(corrupt(format!(
            "unsupported format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    if r.take(4, "magic")? != MAGIC {
        return Err(corrupt("not a model file (bad magic)"));
    }
    let loss = match r.u8("loss tag")? {
        0 => LossKind::SquaredError,
        1 => LossKind::BinaryCrossEntropy,
        t => return Err(corrupt(format!("unknown loss tag {t}"))),
    };
    let id_len = r.u16("generator id length")? as usize;
    let rng_id = r.string(id_len, "generator id")?;
    let p = r.u64("input dimension")? as usize;
    let s = r.u64("feature count")? as usize;
    if p == 0 || s == 0 {
        return Err(corrupt(format!("invalid dimensions p={p}, s={s}")));
    }
    let config = ConfigEcho {
        eta: r.f64("config")?,
        mu: r.f64("config")?,
        patience: r.u64("config")?,
        max_epochs: r.u64("config")?,
        batch_size: r.u64("config")?,
        val_fraction: r.f64("config")?,
        seed: r.u64("config")?,
    };
    let needed = s
        .checked_mul(p)
        .and_then(|sp| sp.checked_add(2 * s + 3 * p))
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| corrupt("dimensions overflow"))?;
    if r.remaining() < needed {
        return Err(corrupt(format!(
            "truncated: dimensions p={p}, s={s} need {needed} bytes of parameters, {} left",
            r.remaining()
        )));
    }
    let omega = r.f64s(s * p, "frequencies")?;
    let phases = r.f64s(s, "phases")?;
    let beta = r.f64s(s, "coefficients")?;
    let lambda = r.f64s(p, "relevances")?;
    let mean = r.f64s(p, "feature means")?;
    let std = r.f64s(p, "feature scales")?;
    let feature_names = match r.u8("feature-name flag")? {
        0 => None,
        1 => {
            let mut names = Vec::with_capacity(p);
            for _ in 0..p {
                let len = r.u32("feature name length")? as usize;
                names.push(r.string(len, "feature name")?);
            }
            Some(names)
        }
        f => return Err(corrupt(format!("bad feature-name flag {f}"))),
    };
    if r.remaining() != 0 {
        return Err(corrupt(format!("{} trailing bytes", r.remaining())));
    }

    let invalid = |e: Error| corrupt(format!("inconsistent contents: {e}"));
    let omega = Array2::from_shape_vec((s, p), omega).map_err(|e| corrupt(e.to_string()))?;
    let features = FourierFeatures::new(omega, Array1::from(phases)).map_err(invalid)?;
    let lambda = RelevanceVector::new(lambda).map_err(invalid)?;
    let mut model = Model::from_parts(
        features,
        beta,
        lambda,
        loss,
        StandardizationStats { mean, std },
        config,
        feature_names,
    )
    .map_err(invalid)?;
    model.rng_id = rng_id;
    Ok(model)
}
