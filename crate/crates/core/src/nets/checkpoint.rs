//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"ADSG" | version: u32 | header_len: u64 | header: UTF-8 TOML | f64 arrays
//! ```
//!
//! The header names the network kind, its spec, the quantizer config when
//! present, and the shape of every array that follows, in declaration order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Classifier, Generator, GeneratorSpec, NetworkSpec, QuantizedClassifier};
use crate::engine::{RngStream, Tensor};
use crate::error::{Error, Result};
use crate::nets::layers::Stack;
use crate::quant::QuantConfig;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ADSG";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum Network {
    FullPrecision(Classifier),
    Quantized(QuantizedClassifier),
    Generator(Generator),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Kind {
    FullPrecision,
    Quantized,
    Generator,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    kind: Kind,
    bn_eps: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    quant: Option<QuantConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    network: Option<NetworkSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    generator: Option<GeneratorSpec>,
    shapes: Vec<Vec<usize>>,
}

impl Network {
    fn arrays(&self) -> Vec<&Tensor> {
        match self {
            Network::FullPrecision(p) => p.stack.arrays(),
            Network::Quantized(q) => q.stack.arrays(),
            Network::Generator(g) => {
                let mut a = vec![&g.embedding];
                a.extend(g.stack.arrays());
                a
            }
        }
    }

    fn stack(&self) -> &Stack {
        match self {
            Network::FullPrecision(p) => &p.stack,
            Network::Quantized(q) => &q.stack,
            Network::Generator(g) => &g.stack,
        }
    }
}

fn bad(path: &Path, detail: impl Into<String>) -> Error {
    Error::Checkpoint {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

pub fn save_checkpoint(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bn_eps = net.stack().bn_layers().first().map_or(1e-5, |b| b.eps);
    let mut header = Header {
        kind: Kind::FullPrecision,
        bn_eps,
        quant: None,
        network: None,
        generator: None,
        shapes: net.arrays().iter().map(|t| t.shape().to_vec()).collect(),
    };
    match net {
        Network::FullPrecision(p) => header.network = Some(p.spec.clone()),
        Network::Quantized(q) => {
            header.kind = Kind::Quantized;
            header.network = Some(q.spec.clone());
            header.quant = Some(q.quant);
        }
        Network::Generator(g) => {
            header.kind = Kind::Generator;
            header.generator = Some(g.spec.clone());
        }
    }
    let text = toml::to_string(&header).map_err(|e| bad(path, e.to_string()))?;

    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(text.len() as u64).to_le_bytes());
    buf.extend_from_slice(text.as_bytes());
    for t in net.arrays() {
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, buf)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| bad(self.path, "truncated file"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
        path,
    };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(bad(path, "bad magic bytes"));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(bad(
            path,
            format!("unsupported version {version}, expected {CHECKPOINT_VERSION}"),
        ));
    }
    let header_len = usize::try_from(r.u64()?).map_err(|_| bad(path, "header too large"))?;
    let text =
        std::str::from_utf8(r.take(header_len)?).map_err(|_| bad(path, "header is not UTF-8"))?;
    let header: Header = toml::from_str(text).map_err(|e| bad(path, format!("header: {e}")))?;

    // Build a skeleton of the right structure, then overwrite every array.
    let mut rng = RngStream::seeded(0);
    let mut net = match header.kind {
        Kind::FullPrecision | Kind::Quantized => {
            let spec = header
                .network
                .clone()
                .ok_or_else(|| bad(path, "missing network spec"))?;
            let p = Classifier::build(spec, &mut rng).map_err(|e| bad(path, e.to_string()))?;
            if header.kind == Kind::Quantized {
                let quant = header
                    .quant
                    .ok_or_else(|| bad(path, "missing quantizer config"))?;
                let q = super::init_q_from_p(&p, quant).map_err(|e| bad(path, e.to_string()))?;
                Network::Quantized(q)
            } else {
                Network::FullPrecision(p)
            }
        }
        Kind::Generator => {
            let spec = header
                .generator
                .clone()
                .ok_or_else(|| bad(path, "missing generator spec"))?;
            Network::Generator(
                Generator::build(spec, &mut rng).map_err(|e| bad(path, e.to_string()))?,
            )
        }
    };

    let expected: Vec<Vec<usize>> = net.arrays().iter().map(|t| t.shape().to_vec()).collect();
    if expected != header.shapes {
        return Err(bad(path, "array shapes do not match the declared spec"));
    }
    let mut loaded = Vec::with_capacity(expected.len());
    for shape in &expected {
        let n: usize = shape.iter().product();
        let raw = r.take(n * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        loaded.push(Tensor::new(shape.clone(), data)?);
    }
    if r.pos != bytes.len() {
        return Err(bad(path, "trailing bytes after arrays"));
    }

    let mut slots: Vec<&mut Tensor> = match &mut net {
        Network::FullPrecision(p) => p.stack.arrays_mut(),
        Network::Quantized(q) => q.stack.arrays_mut(),
        Network::Generator(g) => {
            let mut s = vec![&mut g.embedding];
            s.extend(g.stack.arrays_mut());
            s
        }
    };
    for (slot, t) in slots.iter_mut().zip(loaded) {
        **slot = t;
    }
    let stack = match &mut net {
        Network::FullPrecision(p) => &mut p.stack,
        Network::Quantized(q) => &mut q.stack,
        Network::Generator(g) => &mut g.stack,
    };
    for l in &mut stack.layers {
        if let Some(bn) = &mut l.bn {
            bn.eps = header.bn_eps;
        }
    }
    Ok(net)
}
