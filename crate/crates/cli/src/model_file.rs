//! Binary model container.
//!
//! Layout (little-endian): `"PDNN"`, `u16` version, `u16` reserved, `u32`
//! layer count, the layer records, then a CRC-32 of every preceding byte.

use std::fs;
use std::path::Path;

use permdnn_core::train::{ConvLayer, FcLayer, Layer, Model};
use permdnn_core::{
    build_codebook, Activation, BpdConvTensor, BpdMatrix, Codebook, FixedPointSpec,
};
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"PDNN";
pub const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("not a model file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported model file version {found} (this reader handles {VERSION})")]
    UnsupportedVersion { found: u16 },
    #[error("model file is truncated")]
    Truncated,
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("malformed model file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, ModelFileError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Fc,
    Conv,
}

/// Stored weights, aligned with the layer's packed slots (times the kernel
/// size for convolutions).
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Real32(Vec<f32>),
    Fixed16 {
        spec: FixedPointSpec,
        codes: Vec<i16>,
    },
    Tagged {
        spec: FixedPointSpec,
        codebook: Codebook,
    },
}

impl Payload {
    pub fn len(&self) -> usize {
        match self {
            Payload::Real32(v) => v.len(),
            Payload::Fixed16 { codes, .. } => codes.len(),
            Payload::Tagged { codebook, .. } => codebook.tags.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bits_per_weight(&self) -> u32 {
        match self {
            Payload::Real32(_) => 32,
            Payload::Fixed16 { spec, .. } => spec.total_bits,
            Payload::Tagged { codebook, .. } => codebook.tag_bits,
        }
    }

    pub fn decode(&self) -> Vec<f64> {
        match self {
            Payload::Real32(v) => v.iter().map(|&x| x as f64).collect(),
            Payload::Fixed16 { spec, codes } => {
                codes.iter().map(|&c| spec.dequantize(c as i64)).collect()
            }
            Payload::Tagged { codebook, .. } => codebook.decoded(),
        }
    }
}

/// Requested storage for [`ModelFile::from_model`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Encoding {
    Real32,
    Fixed16(FixedPointSpec),
    Tagged {
        tag_bits: u32,
        spec: FixedPointSpec,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerRecord {
    pub kind: LayerKind,
    pub activation: Activation,
    /// Output rows or output channels.
    pub rows: usize,
    /// Input columns or input channels.
    pub cols: usize,
    pub kernel: (usize, usize),
    /// Feature map size for convolutions, `(0, 0)` otherwise.
    pub map: (usize, usize),
    pub block: usize,
    pub perms: Vec<usize>,
    pub payload: Payload,
    pub bias: Vec<f32>,
}

impl LayerRecord {
    fn blocks(&self) -> usize {
        self.rows.div_ceil(self.block) * self.cols.div_ceil(self.block)
    }

    fn expected_payload(&self) -> usize {
        self.blocks() * self.block * self.kernel.0 * self.kernel.1
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelFileError::Malformed(m));
        if self.rows == 0 || self.cols == 0 || self.block == 0 {
            return bad(format!(
                "layer {}x{} with block {} is empty",
                self.rows, self.cols, self.block
            ));
        }
        if self.kind == LayerKind::Fc && self.kernel != (1, 1) {
            return bad("fully connected layer with a spatial kernel".into());
        }
        if self.kernel.0 == 0 || self.kernel.1 == 0 {
            return bad("zero kernel size".into());
        }
        if self.perms.len() != self.blocks() {
            return bad(format!(
                "{} perms for {} blocks",
                self.perms.len(),
                self.blocks()
            ));
        }
        if let Some(k) = self.perms.iter().find(|&&k| k >= self.block) {
            return bad(format!("perm value {k} not below block size {}", self.block));
        }
        if self.payload.len() != self.expected_payload() {
            return bad(format!(
                "payload holds {} weights, layer needs {}",
                self.payload.len(),
                self.expected_payload()
            ));
        }
        if self.bias.len() != self.rows {
            return bad(format!("{} biases for {} outputs", self.bias.len(), self.rows));
        }
        Ok(())
    }

    /// Weights of a fully connected record as a matrix.
    pub fn matrix(&self) -> Result<BpdMatrix<f64>> {
        if self.kind != LayerKind::Fc {
            return Err(ModelFileError::Malformed("layer is not fully connected".into()));
        }
        BpdMatrix::from_parts(self.rows, self.cols, self.block, self.perms.clone(), self.payload.decode())
            .map_err(|e| ModelFileError::Malformed(e.to_string()))
    }

    pub fn to_layer(&self) -> Result<Layer<f64>> {
        let bias = self.bias.iter().map(|&b| b as f64).collect();
        Ok(match self.kind {
            LayerKind::Fc => Layer::Fc(FcLayer {
                weights: self.matrix()?,
                bias,
                activation: self.activation,
            }),
            LayerKind::Conv => Layer::Conv(ConvLayer {
                filter: BpdConvTensor::from_parts(
                    self.rows,
                    self.cols,
                    self.kernel,
                    self.block,
                    self.perms.clone(),
                    self.payload.decode(),
                )
                .map_err(|e| ModelFileError::Malformed(e.to_string()))?,
                bias,
                width: self.map.0,
                height: self.map.1,
                activation: self.activation,
            }),
        })
    }

    pub fn from_layer(layer: &Layer<f64>, enc: Encoding) -> Result<Self> {
        let (kind, rows, cols, kernel, map, values, live): (_, _, _, _, _, &[f64], Vec<bool>) = match layer {
            Layer::Fc(f) => {
                let w = &f.weights;
                let live = (0..w.slot_count()).map(|s| w.is_live_slot(s)).collect();
                (LayerKind::Fc, w.rows(), w.cols(), (1, 1), (0, 0), w.values(), live)
            }
            Layer::Conv(c) => {
                let t = &c.filter;
                let ks = t.kernel_size();
                let live = (0..t.values().len()).map(|i| t.is_live_slot(i / ks)).collect();
                (
                    LayerKind::Conv,
                    t.out_channels(),
                    t.in_channels(),
                    t.kernel_dims(),
                    (c.width, c.height),
                    t.values(),
                    live,
                )
            }
        };
        let payload = match enc {
            Encoding::Real32 => Payload::Real32(values.iter().map(|&v| v as f32).collect()),
            Encoding::Fixed16(spec) => {
                if spec.total_bits > 16 {
                    return Err(ModelFileError::Malformed(format!(
                        "{}-bit codes do not fit the 16-bit payload",
                        spec.total_bits
                    )));
                }
                Payload::Fixed16 {
                    spec,
                    codes: values.iter().map(|&v| spec.quantize(v) as i16).collect(),
                }
            }
            Encoding::Tagged {
                tag_bits,
                spec,
                seed,
            } => {
                let live_values: Vec<f64> = values
                    .iter()
                    .zip(&live)
                    .filter(|(_, &l)| l)
                    .map(|(&v, _)| v)
                    .collect();
                let mut book = build_codebook(&live_values, tag_bits, seed)
                    .map_err(|e| ModelFileError::Malformed(e.to_string()))?;
                let zero = book.nearest(0.0);
                let mut it = book.tags.iter();
                book.tags = live
                    .iter()
                    .map(|&l| if l { *it.next().unwrap() } else { zero })
                    .collect();
                Payload::Tagged {
                    spec,
                    codebook: book,
                }
            }
        };
        let rec = LayerRecord {
            kind,
            activation: layer.activation(),
            rows,
            cols,
            kernel,
            map,
            block: layer.block(),
            perms: layer.perms().to_vec(),
            payload,
            bias: layer.bias().iter().map(|&b| b as f32).collect(),
        };
        rec.validate()?;
        Ok(rec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub layers: Vec<LayerRecord>,
}

fn activation_code(a: Activation) -> u8 {
    match a {
        Activation::Identity => 0,
        Activation::Relu => 1,
        Activation::Tanh => 2,
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(ModelFileError::Truncated)?;
        let s = self.bytes.get(self.pos..end).ok_or(ModelFileError::Truncated)?;
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

    fn usize(&mut self) -> Result<usize> {
        self.u32().map(|v| v as usize)
    }

    /// Reads a count of items of `size` bytes, refusing counts the remaining
    /// input cannot hold.
    fn count(&mut self, size: usize) -> Result<usize> {
        let n = self.usize()?;
        if n.saturating_mul(size) > self.bytes.len() - self.pos {
            return Err(ModelFileError::Truncated);
        }
        Ok(n)
    }
}

impl ModelFile {
    pub fn from_model(model: &Model<f64>, enc: Encoding) -> Result<Self> {
        let layers = model
            .layers()
            .iter()
            .map(|l| LayerRecord::from_layer(l, enc))
            .collect::<Result<Vec<_>>>()?;
        Ok(ModelFile { layers })
    }

    pub fn to_model(&self) -> Result<Model<f64>> {
        let layers = self
            .layers
            .iter()
            .map(LayerRecord::to_layer)
            .collect::<Result<Vec<_>>>()?;
        Model::new(layers).map_err(|e| ModelFileError::Malformed(e.to_string()))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        put_u32(&mut out, self.layers.len())?;
        for l in &self.layers {
            l.validate()?;
            out.push(match l.kind {
                LayerKind::Fc => 0,
                LayerKind::Conv => 1,
            });
            out.push(activation_code(l.activation));
            for v in [l.rows, l.cols, l.kernel.0, l.kernel.1, l.map.0, l.map.1, l.block] {
                put_u32(&mut out, v)?;
            }
            put_u32(&mut out, l.perms.len())?;
            for &k in &l.perms {
                put_u32(&mut out, k)?;
            }
            match &l.payload {
                Payload::Real32(v) => {
                    out.push(0);
                    put_u32(&mut out, v.len())?;
                    v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
                }
                Payload::Fixed16 { spec, codes } => {
                    out.push(1);
                    out.push(spec.total_bits as u8);
                    out.push(spec.frac_bits as u8);
                    put_u32(&mut out, codes.len())?;
                    codes.iter().for_each(|c| out.extend_from_slice(&c.to_le_bytes()));
                }
                Payload::Tagged { spec, codebook } => {
                    out.push(2);
                    out.push(codebook.tag_bits as u8);
                    out.push(spec.total_bits as u8);
                    out.push(spec.frac_bits as u8);
                    put_u32(&mut out, codebook.centroids.len())?;
                    codebook
                        .centroids
                        .iter()
                        .for_each(|c| out.extend_from_slice(&c.to_le_bytes()));
                    put_u32(&mut out, codebook.tags.len())?;
                    out.extend(pack_tags(&codebook.tags, codebook.tag_bits));
                }
            }
            put_u32(&mut out, l.bias.len())?;
            l.bias.iter().for_each(|b| out.extend_from_slice(&b.to_le_bytes()));
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(if MAGIC.starts_with(bytes) {
                ModelFileError::Truncated
            } else {
                ModelFileError::BadMagic
            });
        }
        if &bytes[..4] != MAGIC {
            return Err(ModelFileError::BadMagic);
        }
        if bytes.len() < 6 {
            return Err(ModelFileError::Truncated);
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(ModelFileError::UnsupportedVersion { found: version });
        }
        if bytes.len() < 16 {
            return Err(ModelFileError::Truncated);
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(ModelFileError::ChecksumMismatch { stored, computed });
        }
        let mut r = Reader { bytes: body, pos: 8 };
        let n_layers = r.count(1)?;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            layers.push(read_layer(&mut r)?);
        }
        if r.pos != body.len() {
            return Err(ModelFileError::Malformed(format!(
                "{} trailing bytes after the last layer",
                body.len() - r.pos
            )));
        }
        Ok(ModelFile { layers })
    }

    pub fn store(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v)
        .map_err(|_| ModelFileError::Malformed(format!("{v} does not fit a 32-bit field")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn pack_tags(tags: &[u8], bits: u32) -> Vec<u8> {
    let mut out = vec![0u8; (tags.len() * bits as usize).div_ceil(8)];
    for (i, &t) in tags.iter().enumerate() {
        for b in 0..bits as usize {
            if t >> b & 1 == 1 {
                let bit = i * bits as usize + b;
                out[bit / 8] |= 1 << (bit % 8);
            }
        }
    }
    out
}

fn unpack_tags(bytes: &[u8], count: usize, bits: u32) -> Vec<u8> {
    (0..count)
        .map(|i| {
            (0..bits as usize).fold(0u8, |acc, b| {
                let bit = i * bits as usize + b;
                acc | ((bytes[bit / 8] >> (bit % 8)) & 1) << b
            })
        })
        .collect()
}

fn read_spec(total: u8, frac: u8) -> Result<FixedPointSpec> {
    FixedPointSpec::new(total as u32, frac as u32).map_err(|e| ModelFileError::Malformed(e.to_string()))
}

fn read_layer(r: &mut Reader<'_>) -> Result<LayerRecord> {
    let kind = match r.u8()? {
        0 => LayerKind::Fc,
        1 => LayerKind::Conv,
        k => return Err(ModelFileError::Malformed(format!("unknown layer kind {k}"))),
    };
    let activation = match r.u8()? {
        0 => Activation::Identity,
        1 => Activation::Relu,
        2 => Activation::Tanh,
        a => return Err(ModelFileError::Malformed(format!("unknown activation {a}"))),
    };
    let mut dims = [0usize; 7];
    for d in &mut dims {
        *d = r.usize()?;
    }
    let [rows, cols, kw, kh, mw, mh, block] = dims;
    let n_perms = r.count(4)?;
    let perms = (0..n_perms).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
    let payload = match r.u8()? {
        0 => {
            let n = r.count(4)?;
            Payload::Real32(
                (0..n)
                    .map(|_| r.u32().map(f32::from_bits))
                    .collect::<Result<_>>()?,
            )
        }
        1 => {
            let spec = read_spec(r.u8()?, r.u8()?)?;
            if spec.total_bits > 16 {
                return Err(ModelFileError::Malformed("fixed-point codes wider than 16 bits".into()));
            }
            let n = r.count(2)?;
            Payload::Fixed16 {
                spec,
                codes: (0..n)
                    .map(|_| r.u16().map(|v| v as i16))
                    .collect::<Result<_>>()?,
            }
        }
        2 => {
            let tag_bits = r.u8()? as u32;
            let spec = read_spec(r.u8()?, r.u8()?)?;
            if !(1..=8).contains(&tag_bits) {
                return Err(ModelFileError::Malformed(format!("tag width {tag_bits} outside 1..=8")));
            }
            let n_c = r.count(8)?;
            let centroids = (0..n_c)
                .map(|_| r.take(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())))
                .collect::<Result<Vec<_>>>()?;
            let n = r.usize()?;
            let packed = r.take(n.saturating_mul(tag_bits as usize).div_ceil(8))?;
            let codebook = Codebook::from_parts(tag_bits, centroids, unpack_tags(packed, n, tag_bits))
                .map_err(|e| ModelFileError::Malformed(e.to_string()))?;
            Payload::Tagged { spec, codebook }
        }
        k => return Err(ModelFileError::Malformed(format!("unknown payload kind {k}"))),
    };
    let n_bias = r.count(4)?;
    let bias = (0..n_bias)
        .map(|_| r.u32().map(f32::from_bits))
        .collect::<Result<Vec<_>>>()?;
    let rec = LayerRecord {
        kind,
        activation,
        rows,
        cols,
        kernel: (kw, kh),
        map: (mw, mh),
        block,
        perms,
        payload,
        bias,
    };
    rec.validate()?;
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tag_packing_round_trips() {
        for bits in 1..=8u32 {
            let tags: Vec<u8> = (0..37).map(|i| (i * 7 % (1 << bits)) as u8).collect();
            assert_eq!(unpack_tags(&pack_tags(&tags, bits), tags.len(), bits), tags);
        }
    }

    #[test]
    fn short_inputs_are_classified() {
        assert!(matches!(ModelFile::from_bytes(b"PD"), Err(ModelFileError::Truncated)));
        assert!(matches!(ModelFile::from_bytes(b"XY"), Err(ModelFileError::BadMagic)));
        assert!(matches!(ModelFile::from_bytes(b""), Err(ModelFileError::Truncated)));
        assert!(matches!(
            ModelFile::from_bytes(b"PDNN\x00\x00"),
            Err(ModelFileError::UnsupportedVersion { found: 0 })
        ));
    }
}
