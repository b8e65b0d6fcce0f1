//! Binary network checkpoints.
//!
//! Layout, all little-endian: the 8-byte magic `CPREPQN1`, a `u32` layer
//! count `L`, `L` dims as `u64`, the seed (`u64`), the number of environment
//! steps trained (`u64`), the parameter count (`u64`), then the parameters as
//! `f64` in the network's flat order: per layer, the weights with
//! `w[i * out + j]` connecting input `i` to unit `j`, then the `out` biases.

use std::io::{Read, Write};
use std::path::Path;

use super::net::QNetwork;
use super::AgentError;

const MAGIC: &[u8; 8] = b"CPREPQN1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: QNetwork,
    pub seed: u64,
    pub steps: u64,
}

pub fn write_checkpoint<W: Write>(out: &mut W, ckpt: &Checkpoint) -> std::io::Result<()> {
    let dims = ckpt.network.dims();
    out.write_all(MAGIC)?;
    out.write_all(&(dims.len() as u32).to_le_bytes())?;
    for &d in dims {
        out.write_all(&(d as u64).to_le_bytes())?;
    }
    out.write_all(&ckpt.seed.to_le_bytes())?;
    out.write_all(&ckpt.steps.to_le_bytes())?;
    out.write_all(&(ckpt.network.params().len() as u64).to_le_bytes())?;
    for &p in ckpt.network.params() {
        out.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64, AgentError> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_checkpoint<R: Read>(input: &mut R) -> Result<Checkpoint, AgentError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(AgentError::Checkpoint("bad magic".into()));
    }
    let mut b4 = [0u8; 4];
    input.read_exact(&mut b4)?;
    let layers = u32::from_le_bytes(b4) as usize;
    if !(2..=64).contains(&layers) {
        return Err(AgentError::Checkpoint(format!("implausible layer count {layers}")));
    }
    let dims = (0..layers)
        .map(|_| read_u64(input).map(|d| d as usize))
        .collect::<Result<Vec<_>, _>>()?;
    let seed = read_u64(input)?;
    let steps = read_u64(input)?;
    let count = read_u64(input)? as usize;
    let expected: usize = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    if count != expected {
        return Err(AgentError::Checkpoint(format!(
            "parameter count {count} does not match dims ({expected})"
        )));
    }
    let mut params = Vec::with_capacity(count);
    let mut b = [0u8; 8];
    for _ in 0..count {
        input.read_exact(&mut b)?;
        params.push(f64::from_le_bytes(b));
    }
    Ok(Checkpoint {
        network: QNetwork::from_params(&dims, params)?,
        seed,
        steps,
    })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), AgentError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint(&mut out, ckpt)?;
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, AgentError> {
    read_checkpoint(&mut std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ckpt = Checkpoint {
            network: QNetwork::new(&[7, 64, 64, 5], &mut rng),
            seed: 42,
            steps: 123_456,
        };
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &ckpt).unwrap();
        assert_eq!(bytes.len(), 8 + 4 + 4 * 8 + 3 * 8 + ckpt.network.params().len() * 8);
        assert_eq!(read_checkpoint(&mut bytes.as_slice()).unwrap(), ckpt);
    }

    #[test]
    fn corrupt_input_is_rejected() {
        assert!(read_checkpoint(&mut &b"NOTACKPT"[..]).is_err());
        let ckpt = Checkpoint {
            network: QNetwork::zeros(&[2, 2]),
            seed: 0,
            steps: 0,
        };
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &ckpt).unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(read_checkpoint(&mut bytes.as_slice()).is_err());
    }
}
