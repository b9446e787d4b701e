//! Binary checkpoint format.
//!
//! ```text
//! "BLNZ"  u16 version
//! u32 H  u32 W  u32 C  u32 layer_count
//! per layer: u8 tag, then u32 fields (conv: kernel, out_channels; pool: window; fc: out)
//! per parametric layer: weights then bias as little-endian f64, row-major
//! ```
//!
//! Parameter shapes are implied by the spec, so identical parameters always
//! serialize to identical bytes.

use std::fs;
use std::path::Path;

use crate::error::{CoreError, Result};
use crate::network::Network;
use crate::scalar::Scalar;
use crate::spec::{LayerSpec, NetworkSpec};

pub const MAGIC: &[u8; 4] = b"BLNZ";
pub const VERSION: u16 = 1;

const TAG_CONV: u8 = 0;
const TAG_RELU: u8 = 1;
const TAG_POOL: u8 = 2;
const TAG_FLATTEN: u8 = 3;
const TAG_FC: u8 = 4;
const TAG_SOFTMAX: u8 = 5;

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| CoreError::Checkpoint(format!("value {v} exceeds u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn encode_spec(spec: &NetworkSpec, out: &mut Vec<u8>) -> Result<()> {
    for &d in &spec.input_shape {
        put_u32(out, d)?;
    }
    put_u32(out, spec.layers.len())?;
    for layer in &spec.layers {
        match *layer {
            LayerSpec::Conv { kernel, out_channels } => {
                out.push(TAG_CONV);
                put_u32(out, kernel)?;
                put_u32(out, out_channels)?;
            }
            LayerSpec::Relu => out.push(TAG_RELU),
            LayerSpec::MaxPool { window } => {
                out.push(TAG_POOL);
                put_u32(out, window)?;
            }
            LayerSpec::Flatten => out.push(TAG_FLATTEN),
            LayerSpec::Fc { out: n } => {
                out.push(TAG_FC);
                put_u32(out, n)?;
            }
            LayerSpec::Softmax => out.push(TAG_SOFTMAX),
        }
    }
    Ok(())
}

pub fn encode<T: Scalar>(net: &Network<T>) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(64 + net.num_params() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    encode_spec(net.spec(), &mut out)?;
    for t in net.params() {
        for v in t.data() {
            out.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(CoreError::Checkpoint(format!("truncated while reading {what}")));
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

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<Network<T>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(CoreError::Checkpoint(format!("bad magic {magic:02x?}, expected \"BLNZ\"")));
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(CoreError::Checkpoint(format!("unsupported version {version}")));
    }
    let input_shape = [r.u32("input shape")?, r.u32("input shape")?, r.u32("input shape")?];
    let n = r.u32("layer count")?;
    if n > 4096 {
        return Err(CoreError::Checkpoint(format!("implausible layer count {n}")));
    }
    let mut layers = Vec::with_capacity(n);
    for _ in 0..n {
        let layer = match r.u8("layer tag")? {
            TAG_CONV => LayerSpec::Conv {
                kernel: r.u32("conv kernel")?,
                out_channels: r.u32("conv channels")?,
            },
            TAG_RELU => LayerSpec::Relu,
            TAG_POOL => LayerSpec::MaxPool { window: r.u32("pool window")? },
            TAG_FLATTEN => LayerSpec::Flatten,
            TAG_FC => LayerSpec::Fc { out: r.u32("fc outputs")? },
            TAG_SOFTMAX => LayerSpec::Softmax,
            t => return Err(CoreError::Checkpoint(format!("unknown layer tag {t}"))),
        };
        layers.push(layer);
    }
    let spec = NetworkSpec::new(input_shape, layers)?;
    let mut net = Network::<T>::zeros(&spec)?;
    for t in net.params_mut() {
        for v in t.data_mut() {
            *v = T::from_f64_lossy(r.f64("parameters")?);
        }
    }
    if r.pos != bytes.len() {
        return Err(CoreError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(net)
}

pub fn save<T: Scalar>(path: impl AsRef<Path>, net: &Network<T>) -> Result<()> {
    fs::write(path, encode(net)?)?;
    Ok(())
}

pub fn load<T: Scalar>(path: impl AsRef<Path>) -> Result<Network<T>> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::init_params;
    use crate::spec::Preset;

    #[test]
    fn round_trip_is_exact() {
        let net = init_params::<f64>(&Preset::Cnn2.spec(), 8).unwrap();
        let bytes = encode(&net).unwrap();
        assert_eq!(&bytes[..4], b"BLNZ");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        let back: Network<f64> = decode(&bytes).unwrap();
        assert_eq!(back, net);
        assert_eq!(encode(&back).unwrap(), bytes);
    }

    #[test]
    fn byte_length_matches_layout() {
        let net = init_params::<f64>(&Preset::Cnn1.spec(), 1).unwrap();
        let bytes = encode(&net).unwrap();
        // header 6, shape+count 16, tags 11, u32 payloads: 2 convs*2 + 2 pools + 2 fcs = 8
        assert_eq!(bytes.len(), 6 + 16 + 11 + 8 * 4 + net.num_params() * 8);
    }

    #[test]
    fn f32_network_loads() {
        let net = init_params::<f32>(&Preset::Cnn1.spec(), 1).unwrap();
        let back: Network<f32> = decode(&encode(&net).unwrap()).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let net = init_params::<f64>(&Preset::Cnn1.spec(), 1).unwrap();
        let mut bytes = encode(&net).unwrap();
        assert!(decode::<f64>(&bytes[..bytes.len() - 3]).is_err());
        bytes.push(0);
        assert!(decode::<f64>(&bytes).is_err());
        bytes[0] = b'X';
        let err = decode::<f64>(&bytes).unwrap_err().to_string();
        assert!(err.contains("BLNZ"), "{err}");
    }
}
