//! Versioned binary checkpoints: config echo, step counter, RNG stream
//! positions, every parameter tensor by hierarchical name, and optimizer
//! accumulators. All integers and f64 buffers are little-endian; names sit
//! in a length-prefixed table. Save → load is bit-identical.

use std::io::{Cursor, Read};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::{Param, ParamStore};

const MAGIC: &[u8; 8] = b"SCAECKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState { seed: rng.get_seed(), stream: rng.get_stream(), word_pos: rng.get_word_pos() }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub step: u64,
    pub data_rng: RngState,
    pub noise_rng: RngState,
    pub params: Vec<(String, Vec<usize>, Vec<f64>)>,
    /// (name, mean-square accumulator, momentum accumulator)
    pub opt_state: Vec<(String, Vec<f64>, Vec<f64>)>,
}

impl Checkpoint {
    pub fn param_store(&self) -> Result<ParamStore> {
        let mut ps = ParamStore::new();
        for (name, shape, data) in &self.params {
            ps.insert(name, shape.clone(), data.clone())?;
        }
        Ok(ps)
    }
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u32(&mut self, v: u32) {
        self.buf.extend(v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend(v.to_le_bytes());
    }
    fn u128(&mut self, v: u128) {
        self.buf.extend(v.to_le_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.buf.extend(b);
    }
    fn name(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend(s.as_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.buf.reserve(v.len() * 8);
        for &x in v {
            self.buf.extend(x.to_bits().to_le_bytes());
        }
    }
}

struct Reader<'a> {
    cur: Cursor<&'a [u8]>,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut b = vec![0u8; n];
        self.cur
            .read_exact(&mut b)
            .map_err(|_| Error::Checkpoint("file ends mid-record".to_string()))?;
        Ok(b)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().unwrap()))
    }
    fn name(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?)
            .map_err(|_| Error::Checkpoint("name table holds invalid utf-8".to_string()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().unwrap())))
            .collect())
    }
}

fn rng_block(w: &mut Writer, s: &RngState) {
    w.bytes(&s.seed);
    w.u64(s.stream);
    w.u128(s.word_pos);
}

fn read_rng(r: &mut Reader) -> Result<RngState> {
    let seed: [u8; 32] = r.take(32)?.try_into().unwrap();
    let stream = r.u64()?;
    let word_pos = r.u128()?;
    Ok(RngState { seed, stream, word_pos })
}

pub fn save(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut w = Writer { buf: Vec::new() };
    w.bytes(MAGIC);
    w.u32(VERSION);
    let cfg = ckpt.config.to_canonical_string();
    w.u32(cfg.len() as u32);
    w.bytes(cfg.as_bytes());
    w.u64(ckpt.step);
    rng_block(&mut w, &ckpt.data_rng);
    rng_block(&mut w, &ckpt.noise_rng);
    w.u32(ckpt.params.len() as u32);
    for (name, shape, data) in &ckpt.params {
        w.name(name);
        w.u32(shape.len() as u32);
        for &d in shape {
            w.u32(d as u32);
        }
        w.f64s(data);
    }
    w.u32(ckpt.opt_state.len() as u32);
    for (name, ms, mom) in &ckpt.opt_state {
        w.name(name);
        w.u64(ms.len() as u64);
        w.f64s(ms);
        w.f64s(mom);
    }
    std::fs::write(path, &w.buf).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader { cur: Cursor::new(raw.as_slice()) };
    let magic = r.take(8)?;
    if magic != MAGIC {
        return Err(Error::Checkpoint(format!("{path:?} is not a checkpoint (bad magic)")));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::CheckpointVersion { found: version, expected: VERSION });
    }
    let cfg_len = r.u32()? as usize;
    let cfg_text = String::from_utf8(r.take(cfg_len)?)
        .map_err(|_| Error::Checkpoint("config block holds invalid utf-8".to_string()))?;
    let config = RunConfig::from_str_checked(&cfg_text)?;
    let step = r.u64()?;
    let data_rng = read_rng(&mut r)?;
    let noise_rng = read_rng(&mut r)?;
    let n_params = r.u32()? as usize;
    let mut params = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        let name = r.name()?;
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let numel: usize = shape.iter().product();
        let data = r.f64s(numel)?;
        params.push((name, shape, data));
    }
    let n_state = r.u32()? as usize;
    let mut opt_state = Vec::with_capacity(n_state);
    for _ in 0..n_state {
        let name = r.name()?;
        let len = r.u64()? as usize;
        let ms = r.f64s(len)?;
        let mom = r.f64s(len)?;
        opt_state.push((name, ms, mom));
    }
    Ok(Checkpoint { config, step, data_rng, noise_rng, params, opt_state })
}

pub fn params_from_store(store: &ParamStore) -> Vec<(String, Vec<usize>, Vec<f64>)> {
    store
        .iter()
        .map(|(name, Param { shape, data })| (name.to_string(), shape.clone(), data.to_vec()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut data_rng = ChaCha8Rng::seed_from_u64(5);
        data_rng.set_stream(1);
        let mut noise_rng = ChaCha8Rng::seed_from_u64(5);
        noise_rng.set_stream(2);
        // Advance so positions are nontrivial.
        use rand::Rng;
        for _ in 0..13 {
            let _: f64 = data_rng.gen();
        }
        let _: u32 = noise_rng.gen();
        Checkpoint {
            config: RunConfig::constellation_reduced(),
            step: 420,
            data_rng: RngState::capture(&data_rng),
            noise_rng: RngState::capture(&noise_rng),
            params: vec![
                ("a.w".to_string(), vec![2, 3], vec![1.5, -2.25, 0.0, f64::MIN_POSITIVE, 3e300, -0.1]),
                ("b".to_string(), vec![1], vec![42.0]),
            ],
            opt_state: vec![("a.w".to_string(), vec![0.1; 6], vec![0.0; 6])],
        }
    }

    #[test]
    fn save_load_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        let ck = sample();
        save(&path, &ck).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(back.step, ck.step);
        assert_eq!(back.config, ck.config);
        assert_eq!(back.params.len(), 2);
        for ((an, ash, ad), (bn, bsh, bd)) in ck.params.iter().zip(&back.params) {
            assert_eq!(an, bn);
            assert_eq!(ash, bsh);
            for (x, y) in ad.iter().zip(bd) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        // Restored RNGs continue the exact stream.
        use rand::Rng;
        let mut orig = ck.data_rng.restore();
        let mut rest = back.data_rng.restore();
        for _ in 0..8 {
            assert_eq!(orig.gen::<u64>(), rest.gen::<u64>());
        }
        // Double round trip: identical bytes on disk.
        let path2 = dir.path().join("ck2.bin");
        save(&path2, &back).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn version_mismatch_is_an_explicit_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        save(&path, &sample()).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[8] = 9; // bump version field
        std::fs::write(&path, &bytes).unwrap();
        match load(&path) {
            Err(Error::CheckpointVersion { found: 9, expected: 1 }) => {}
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn non_checkpoint_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.bin");
        std::fs::write(&path, b"definitely not a checkpoint").unwrap();
        assert!(matches!(load(&path), Err(Error::Checkpoint(_))));
    }
}
