//! Checkpoint files: `FNCK` magic, version word, length-prefixed JSON
//! header, length-prefixed little-endian `f64` blob (network states, then
//! optimizer moments), SHA-256 trailer over everything before it.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Checkpoint, Model, ModelConfig, ModelError};
use crate::datagen::DatasetMeta;
use crate::nn::{Adam, AdamConfig, AdamState, LayerSpec, Network};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"FNCK";

#[derive(Serialize, Deserialize)]
struct NetHeader {
    name: String,
    input_dim: usize,
    arch: Vec<LayerSpec>,
}

#[derive(Serialize, Deserialize)]
struct OptHeader {
    net: String,
    config: AdamConfig,
    step: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    epoch: u64,
    config: ModelConfig,
    config_fingerprint: String,
    dataset_fingerprint: String,
    data_meta: DatasetMeta,
    nets: Vec<NetHeader>,
    optimizers: Vec<OptHeader>,
}

fn parts(model: &Model) -> Vec<(&'static str, &Network, &Adam)> {
    match model {
        Model::Fnn { net, adam } => vec![("fnn", net, adam)],
        Model::Cgan {
            generator,
            discriminator,
            g_adam,
            d_adam,
        } => vec![("generator", generator, g_adam), ("discriminator", discriminator, d_adam)],
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<(), ModelError> {
    let parts = parts(&ckpt.model);
    let header = Header {
        epoch: ckpt.epoch,
        config: ckpt.config.clone(),
        config_fingerprint: ckpt.config.fingerprint(),
        dataset_fingerprint: ckpt.dataset_fingerprint.clone(),
        data_meta: ckpt.data_meta.clone(),
        nets: parts
            .iter()
            .map(|(name, net, _)| NetHeader {
                name: name.to_string(),
                input_dim: net.input_dim(),
                arch: net.architecture(),
            })
            .collect(),
        optimizers: parts
            .iter()
            .map(|(name, _, adam)| OptHeader {
                net: name.to_string(),
                config: adam.config,
                step: adam.state.step,
            })
            .collect(),
    };
    let mut blob = Vec::new();
    for (_, net, _) in &parts {
        blob.extend(net.state_blob());
    }
    for (_, _, adam) in &parts {
        for acc in adam.state.first.iter().chain(&adam.state.second) {
            blob.extend_from_slice(acc);
        }
    }
    let json = serde_json::to_string(&header).map_err(|e| ModelError::Format(e.to_string()))?;
    let mut bytes = Vec::with_capacity(32 + json.len() + 8 * blob.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(json.as_bytes());
    bytes.extend_from_slice(&(blob.len() as u64).to_le_bytes());
    for v in &blob {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let digest = Sha256::digest(&bytes);
    bytes.extend_from_slice(&digest);
    fs::write(path, bytes)?;
    Ok(())
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8], ModelError> {
    let end = pos.checked_add(n).ok_or(ModelError::Truncated)?;
    if end > bytes.len() {
        return Err(ModelError::Truncated);
    }
    let s = &bytes[*pos..end];
    *pos = end;
    Ok(s)
}

fn read_u64(bytes: &[u8], pos: &mut usize) -> Result<u64, ModelError> {
    Ok(u64::from_le_bytes(take(bytes, pos, 8)?.try_into().expect("8 bytes")))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, ModelError> {
    let bytes = fs::read(path)?;
    let mut pos = 0;
    if take(&bytes, &mut pos, 4)? != MAGIC {
        return Err(ModelError::Format("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(take(&bytes, &mut pos, 4)?.try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(ModelError::Version {
            found: version,
            supported: CHECKPOINT_VERSION,
        });
    }
    let header_len = read_u64(&bytes, &mut pos)? as usize;
    let json = take(&bytes, &mut pos, header_len)?;
    let n = read_u64(&bytes, &mut pos)? as usize;
    let raw = take(&bytes, &mut pos, n.checked_mul(8).ok_or(ModelError::Truncated)?)?;
    let body_end = pos;
    let trailer = take(&bytes, &mut pos, 32)?;
    if pos != bytes.len() {
        return Err(ModelError::Format("trailing bytes".into()));
    }
    if Sha256::digest(&bytes[..body_end])[..] != *trailer {
        return Err(ModelError::Checksum);
    }
    let header: Header = serde_json::from_slice(json).map_err(|e| ModelError::Format(format!("header: {e}")))?;
    let found = header.config.fingerprint();
    if found != header.config_fingerprint {
        return Err(ModelError::Fingerprint {
            what: "config",
            expected: header.config_fingerprint,
            found,
        });
    }
    let blob: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();

    let mut offset = 0;
    let mut nets = Vec::new();
    for h in &header.nets {
        let len = Network::state_len(&h.arch);
        let slice = blob.get(offset..offset + len).ok_or(ModelError::Truncated)?;
        nets.push(Network::from_state(h.input_dim, &h.arch, slice)?);
        offset += len;
    }
    if header.optimizers.len() != nets.len() {
        return Err(ModelError::Format("one optimizer per network expected".into()));
    }
    let mut adams = Vec::new();
    for (opt, net) in header.optimizers.iter().zip(&nets) {
        let shapes: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
        let read = |offset: &mut usize| -> Result<Vec<Vec<f64>>, ModelError> {
            shapes
                .iter()
                .map(|&len| {
                    let v = blob.get(*offset..*offset + len).ok_or(ModelError::Truncated)?.to_vec();
                    *offset += len;
                    Ok(v)
                })
                .collect()
        };
        let first = read(&mut offset)?;
        let second = read(&mut offset)?;
        adams.push(Adam::from_state(
            opt.config,
            AdamState {
                step: opt.step,
                first,
                second,
            },
            net,
        )?);
    }
    if offset != blob.len() {
        return Err(ModelError::Format("parameter blob size does not match the header".into()));
    }
    let names: Vec<&str> = header.nets.iter().map(|h| h.name.as_str()).collect();
    let model = match (names.as_slice(), &header.config) {
        (["fnn"], ModelConfig::Fnn(_)) => Model::Fnn {
            net: nets.remove(0),
            adam: adams.remove(0),
        },
        (["generator", "discriminator"], ModelConfig::Cgan(_)) => Model::Cgan {
            generator: nets.remove(0),
            discriminator: nets.remove(0),
            g_adam: adams.remove(0),
            d_adam: adams.remove(0),
        },
        _ => return Err(ModelError::Format("network set does not match the model kind".into())),
    };
    Ok(Checkpoint {
        epoch: header.epoch,
        model,
        config: header.config,
        dataset_fingerprint: header.dataset_fingerprint,
        data_meta: header.data_meta,
    })
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use super::*;
    use crate::channel::{ChannelParams, NoiseParams};
    use crate::datagen::{generate_approach2, paper_distances, Dataset, MRule};
    use crate::rng::{derive, Domain};

    fn ds() -> Dataset {
        generate_approach2(
            12,
            &ChannelParams::distance_experiment(),
            &NoiseParams::disabled(),
            &paper_distances(),
            MRule::paper(),
            1,
        )
        .unwrap()
    }

    fn trained() -> Vec<Checkpoint> {
        let data = ds();
        let fcfg = FnnConfig {
            num_layer: 2,
            num_unit: 8,
            epochs: 2,
            batch_size: 32,
            ..FnnConfig::default()
        };
        let mut f = FnnState::new(&fcfg, &data).unwrap();
        let mut out = Vec::new();
        train_fnn(&mut f, &data, &data, &fcfg, &mut |c| {
            out.push(c);
            Ok(())
        })
        .unwrap();
        let gcfg = CganConfig {
            latent_dim: 3,
            g_layers: 1,
            g_units: 8,
            d_layers: 1,
            d_units: 8,
            epochs: 3,
            checkpoint_every: 3,
            batch_size: 16,
            ..CganConfig::default()
        };
        let mut g = GanState::new(&gcfg, &data).unwrap();
        train_cgan(&mut g, &data, &gcfg, &mut |c| {
            out.push(c);
            Ok(())
        })
        .unwrap();
        out
    }

    #[test]
    fn round_trip_is_output_identical() {
        let dir = tempfile::tempdir().unwrap();
        let data = ds();
        for (i, ckpt) in trained().into_iter().enumerate() {
            let path = dir.path().join(format!("c{i}.ckpt"));
            save_checkpoint(&ckpt, &path).unwrap();
            let back = load_checkpoint(&path).unwrap();
            assert_eq!(back, ckpt);
            let cond = data.inputs(&ckpt.conditioner().unwrap(), &[0, 5, 17, 300]).unwrap();
            let a = generate(&ckpt, &cond, &mut derive(4, Domain::Latent, 0, 0)).unwrap();
            let b = generate(&back, &cond, &mut derive(4, Domain::Latent, 0, 0)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn corruption_truncation_and_version() {
        let dir = tempfile::tempdir().unwrap();
        let ckpt = &trained()[0];
        let path = dir.path().join("c.ckpt");
        save_checkpoint(ckpt, &path).unwrap();
        let bytes = fs::read(&path).unwrap();

        let mut bad = bytes.clone();
        let i = bytes.len() - 50;
        bad[i] ^= 0x40;
        fs::write(&path, &bad).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(ModelError::Checksum)));

        fs::write(&path, &bytes[..bytes.len() - 7]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(ModelError::Truncated)));

        let mut v = bytes.clone();
        v[4] = 2;
        fs::write(&path, &v).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(ModelError::Version { found: 2, .. })));

        fs::write(&path, b"hello").unwrap();
        assert!(load_checkpoint(&path).is_err());
    }

    #[test]
    fn generation_determinism() {
        let all = trained();
        for ckpt in &all {
            let c = ckpt.conditioner().unwrap();
            let cond = c.batch([(3usize, &[0.4][..]); 6]).unwrap();
            let a = generate(ckpt, &cond, &mut derive(1, Domain::Latent, 0, 0)).unwrap();
            let b = generate(ckpt, &cond, &mut derive(1, Domain::Latent, 0, 0)).unwrap();
            assert_eq!(a, b);
            if ckpt.kind() == ModelKind::Fnn {
                assert!(a.data().iter().all(|&v| v == a.data()[0]));
            }
            assert!(generate(ckpt, &Tensor::zeros(2, 3), &mut derive(1, Domain::Latent, 0, 0)).is_err());
        }
    }
}
