//! JSON checkpoints holding both networks, the hyperparameters, optimizer
//! moments and the generator RNG position.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::losses::GanHyper;
use super::radam::RAdamState;
use crate::autodiff::{ParamStore, Tensor};
use crate::data::io::{read_json, write_json};
use crate::discriminator::{Discriminator, DiscriminatorConfig};
use crate::error::{Error, Result};
use crate::generator::{Generator, GeneratorConfig};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub n: usize,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
}

impl ArchConfig {
    pub fn new(n: usize) -> Self {
        ArchConfig {
            n,
            generator: GeneratorConfig::new(n),
            discriminator: DiscriminatorConfig::new(n),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.generator.n != self.n || self.discriminator.n != self.n {
            return Err(Error::Config(format!(
                "architecture n = {} but generator n = {} and discriminator n = {}",
                self.n, self.generator.n, self.discriminator.n
            )));
        }
        Ok(())
    }
}

/// Exact position of a ChaCha8 stream.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub generator: RAdamState,
    pub discriminator: RAdamState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub version: u32,
    pub arch: ArchConfig,
    pub hyper: GanHyper,
    /// Completed epochs.
    pub epoch: usize,
    pub rng: RngState,
    pub params: BTreeMap<String, ParamRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optim: Option<OptimizerState>,
}

fn records(store: &ParamStore, out: &mut BTreeMap<String, ParamRecord>) {
    for (name, t) in store.iter() {
        out.insert(
            name.to_string(),
            ParamRecord {
                shape: [t.rows(), t.cols()],
                data: t.data().to_vec(),
            },
        );
    }
}

fn load_store(store: &mut ParamStore, params: &BTreeMap<String, ParamRecord>, prefix: &str) -> Result<()> {
    let mut named = BTreeMap::new();
    for (name, rec) in params.iter().filter(|(k, _)| k.starts_with(prefix)) {
        let t = Tensor::new(rec.shape[0], rec.shape[1], rec.data.clone())
            .map_err(|_| Error::Validation(format!("parameter {name}: data does not fit shape {:?}", rec.shape)))?;
        named.insert(name.clone(), t);
    }
    store.load_named(&named)
}

impl ModelCheckpoint {
    pub fn capture(
        arch: &ArchConfig,
        hyper: &GanHyper,
        epoch: usize,
        rng: &ChaCha8Rng,
        g: &Generator,
        d: &Discriminator,
        optim: Option<OptimizerState>,
    ) -> Self {
        let mut params = BTreeMap::new();
        records(&g.params, &mut params);
        records(&d.params, &mut params);
        ModelCheckpoint {
            version: CHECKPOINT_VERSION,
            arch: arch.clone(),
            hyper: hyper.clone(),
            epoch,
            rng: RngState::capture(rng),
            params,
            optim,
        }
    }

    pub fn n(&self) -> usize {
        self.arch.n
    }

    /// Errors unless the checkpoint was built for `n` nodes.
    pub fn expect_n(&self, n: usize) -> Result<()> {
        if self.arch.n != n {
            return Err(Error::Validation(format!(
                "checkpoint was trained for n = {} nodes but the input has n = {n}",
                self.arch.n
            )));
        }
        Ok(())
    }

    /// Rebuilds both networks with the stored weights.
    pub fn models(&self) -> Result<(Generator, Discriminator)> {
        self.arch.validate()?;
        // initial values are overwritten, so the seed is irrelevant
        let mut scratch = ChaCha8Rng::seed_from_u64(0);
        let mut g = Generator::new(self.arch.generator.clone(), &mut scratch)?;
        let mut d = Discriminator::new(self.arch.discriminator.clone(), &mut scratch)?;
        load_store(&mut g.params, &self.params, "g.")?;
        load_store(&mut d.params, &self.params, "d.")?;
        Ok((g, d))
    }

    pub fn generator(&self) -> Result<Generator> {
        Ok(self.models()?.0)
    }
}

pub fn save_checkpoint(ckpt: &ModelCheckpoint, path: impl AsRef<Path>) -> Result<()> {
    write_json(path.as_ref(), ckpt)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelCheckpoint> {
    let path = path.as_ref();
    let raw: serde_json::Value = read_json(path)?;
    let found = raw.get("version").and_then(|v| v.as_u64());
    if found != Some(CHECKPOINT_VERSION as u64) {
        return Err(Error::Version {
            path: path.to_path_buf(),
            found: found.unwrap_or(0) as u32,
            expected: CHECKPOINT_VERSION,
        });
    }
    let ckpt: ModelCheckpoint = serde_json::from_value(raw).map_err(|e| Error::json(path, e))?;
    ckpt.models()?;
    Ok(ckpt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tiny_arch(n: usize) -> ArchConfig {
        let mut a = ArchConfig::new(n);
        a.generator.sru_hidden = 4;
        a.generator.mlp_dims = vec![6, 8];
        a.discriminator.sru_hidden = 4;
        a
    }

    fn checkpoint(n: usize) -> ModelCheckpoint {
        let arch = tiny_arch(n);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = Generator::new(arch.generator.clone(), &mut rng).unwrap();
        let d = Discriminator::new(arch.discriminator.clone(), &mut rng).unwrap();
        let _: f64 = rng.random();
        let optim = OptimizerState {
            generator: RAdamState::new(g.params.values()),
            discriminator: RAdamState::new(d.params.values()),
        };
        ModelCheckpoint::capture(&arch, &GanHyper::default(), 3, &rng, &g, &d, Some(optim))
    }

    #[test]
    fn rng_state_resumes_stream() {
        let mut a = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..13 {
            let _: u32 = a.random();
        }
        let mut b = RngState::capture(&a).restore();
        for _ in 0..100 {
            assert_eq!(a.random::<u64>(), b.random::<u64>());
        }
    }

    #[test]
    fn file_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        let ck = checkpoint(5);
        save_checkpoint(&ck, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, ck);
        let (g0, _) = ck.models().unwrap();
        let (g1, _) = back.models().unwrap();
        assert_eq!(g0.params, g1.params);
    }

    #[test]
    fn wrong_n_names_both_sizes() {
        let msg = checkpoint(5).expect_n(7).unwrap_err().to_string();
        assert!(msg.contains('5') && msg.contains('7'), "{msg}");
    }

    #[test]
    fn version_and_shape_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        let mut ck = checkpoint(4);
        ck.version = 2;
        save_checkpoint(&ck, &path).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Version { .. })));

        let mut ck = checkpoint(4);
        ck.params.get_mut("g.out.b").unwrap().shape = [1, 3];
        save_checkpoint(&ck, &path).unwrap();
        assert!(load_checkpoint(&path).unwrap_err().is_validation());
    }

    #[test]
    fn json_layout_has_named_shapes() {
        let v = serde_json::to_value(checkpoint(3)).unwrap();
        assert_eq!(v["version"], 1);
        assert_eq!(v["params"]["g.out.b"]["shape"], serde_json::json!([1, 9]));
        assert!(v["arch"].is_object() && v["hyper"].is_object() && v["rng"].is_object());
    }
}
