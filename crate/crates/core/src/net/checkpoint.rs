//! `TEANET01` network checkpoints.
//!
//! Little-endian layout:
//!
//! | field | type |
//! |---|---|
//! | magic | `b"TEANET01"` |
//! | hidden activation, output activation | `u8`, `u8` (0 = relu, 1 = linear) |
//! | layer count `L` (number of sizes) | `u32` |
//! | sizes | `L x u32` |
//! | per layer: weights (`out x in`, row-major), biases (`out`) | `f64` |
//! | Adam step counter | `u64` |
//! | per layer: first moments (weights, biases) then second moments | `f64` |

use std::io::{Read, Write};

use super::{Activation, AdamState, Dense, Mlp, NetError, NetSpec, Result};

pub const NET_MAGIC: &[u8; 8] = b"TEANET01";

fn activation_code(a: Activation) -> u8 {
    match a {
        Activation::Relu => 0,
        Activation::Linear => 1,
    }
}

fn activation_from(code: u8) -> Result<Activation> {
    match code {
        0 => Ok(Activation::Relu),
        1 => Ok(Activation::Linear),
        c => Err(NetError::Format(format!("unknown activation code {c}"))),
    }
}

fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_net<W: Write>(w: &mut W, net: &Mlp) -> Result<()> {
    let spec = net.spec();
    w.write_all(NET_MAGIC)?;
    w.write_all(&[activation_code(spec.hidden_activation), activation_code(spec.output_activation)])?;
    w.write_all(&(spec.layer_sizes.len() as u32).to_le_bytes())?;
    for &s in &spec.layer_sizes {
        w.write_all(&(s as u32).to_le_bytes())?;
    }
    for l in &net.layers {
        write_f64s(w, &l.weights)?;
        write_f64s(w, &l.biases)?;
    }
    w.write_all(&net.adam.step.to_le_bytes())?;
    for moments in [&net.adam.first, &net.adam.second] {
        for l in moments {
            write_f64s(w, &l.weights)?;
            write_f64s(w, &l.biases)?;
        }
    }
    Ok(())
}

fn read_exact<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => NetError::Format("truncated checkpoint".into()),
        _ => NetError::Io(e),
    })?;
    Ok(buf)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(read_exact(r)?))
}

fn read_dense<R: Read>(r: &mut R, inputs: usize, outputs: usize) -> Result<Dense> {
    let mut read_vec = |n: usize| -> Result<Vec<f64>> {
        (0..n).map(|_| Ok(f64::from_le_bytes(read_exact(r)?))).collect()
    };
    let weights = read_vec(inputs * outputs)?;
    let biases = read_vec(outputs)?;
    Ok(Dense {
        inputs,
        outputs,
        weights,
        biases,
    })
}

pub fn read_net<R: Read>(r: &mut R) -> Result<Mlp> {
    let magic: [u8; 8] = read_exact(r)?;
    if &magic != NET_MAGIC {
        return Err(NetError::Format("bad magic".into()));
    }
    let [hidden, output] = read_exact::<R, 2>(r)?;
    let count = read_u32(r)? as usize;
    if count > 64 {
        return Err(NetError::Format(format!("implausible layer count {count}")));
    }
    let sizes = (0..count).map(|_| Ok(read_u32(r)? as usize)).collect::<Result<Vec<_>>>()?;
    let spec = NetSpec {
        layer_sizes: sizes,
        hidden_activation: activation_from(hidden)?,
        output_activation: activation_from(output)?,
    };
    spec.validate()?;
    let read_layers = |r: &mut R| -> Result<Vec<Dense>> {
        spec.layer_sizes.windows(2).map(|p| read_dense(r, p[0], p[1])).collect()
    };
    let layers = read_layers(r)?;
    let step = u64::from_le_bytes(read_exact(r)?);
    let first = read_layers(r)?;
    let second = read_layers(r)?;
    Ok(Mlp::from_parts(spec, layers, AdamState { step, first, second }))
}

impl Mlp {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut bytes = Vec::new();
        write_net(&mut bytes, self)?;
        std::fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let mut cursor = bytes.as_slice();
        let net = read_net(&mut cursor)?;
        if !cursor.is_empty() {
            return Err(NetError::Format("trailing bytes after checkpoint".into()));
        }
        Ok(net)
    }
}
