//! Named parameter arrays and the `VMUW` weight file.
//!
//! File layout, all integers little-endian:
//!
//! ```text
//! "VMUW" | version: u32 | count: u32
//! repeated count times:
//!   name_len: u16 | name: UTF-8 | rank: u8 | dims: u32 * rank | values: f32 * prod(dims)
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::VmUnetConfig;
use crate::error::{Error, Result};

pub const WEIGHT_MAGIC: &[u8; 4] = b"VMUW";
pub const WEIGHT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightArray {
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

impl WeightArray {
    pub fn new(shape: Vec<usize>, values: Vec<f32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "shape {shape:?} needs {n} values, got {}",
                values.len()
            )));
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            values: vec![0.0; n],
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| f64::from(v)).collect()
    }
}

/// Parameter name to array map, kept sorted so iteration and file order are
/// deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    arrays: BTreeMap<String, WeightArray>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, array: WeightArray) {
        self.arrays.insert(name.into(), array);
    }

    pub fn get(&self, name: &str) -> Result<&WeightArray> {
        self.arrays.get(name).ok_or_else(|| Error::WeightShape {
            name: name.to_owned(),
            reason: "missing parameter".into(),
        })
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut WeightArray> {
        self.arrays.get_mut(name)
    }

    /// Parameter values as `f64`, after checking the expected shape.
    pub fn values(&self, name: &str, shape: &[usize]) -> Result<Vec<f64>> {
        let arr = self.get(name)?;
        if arr.shape != shape {
            return Err(Error::WeightShape {
                name: name.to_owned(),
                reason: format!("expected shape {shape:?}, found {:?}", arr.shape),
            });
        }
        Ok(arr.to_f64())
    }

    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &WeightArray)> {
        self.arrays.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.arrays.keys().map(String::as_str)
    }

    /// Checks names and shapes against `config`. Parameters the network does
    /// not use are an error unless `allow_extra` is set.
    pub fn validate(&self, config: &VmUnetConfig, allow_extra: bool) -> Result<()> {
        let required = parameter_shapes(config)?;
        for (name, shape) in &required {
            self.values_shape_ok(name, shape)?;
        }
        if !allow_extra {
            if let Some(extra) = self.arrays.keys().find(|k| !required.contains_key(*k)) {
                return Err(Error::WeightShape {
                    name: extra.clone(),
                    reason: "unexpected parameter".into(),
                });
            }
        }
        Ok(())
    }

    fn values_shape_ok(&self, name: &str, shape: &[usize]) -> Result<()> {
        let arr = self.get(name)?;
        if arr.shape != shape {
            return Err(Error::WeightShape {
                name: name.to_owned(),
                reason: format!("expected shape {shape:?}, found {:?}", arr.shape),
            });
        }
        Ok(())
    }

    /// Zeroes every parameter whose name contains `pattern`.
    pub fn zero_matching(&mut self, pattern: &str) -> usize {
        let mut n = 0;
        for (name, arr) in &mut self.arrays {
            if name.contains(pattern) {
                arr.values.iter_mut().for_each(|v| *v = 0.0);
                n += 1;
            }
        }
        n
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(WEIGHT_MAGIC);
        out.extend_from_slice(&WEIGHT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for (name, arr) in &self.arrays {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(arr.shape.len() as u8);
            for &d in &arr.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in &arr.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader {
            bytes,
            pos: 0,
            path,
        };
        if r.take(4, "magic")? != WEIGHT_MAGIC {
            return Err(r.format_err("bad magic bytes"));
        }
        let version = r.u32("version")?;
        if version != WEIGHT_VERSION {
            return Err(r.format_err(&format!("unsupported version {version}")));
        }
        let count = r.u32("count")?;
        let mut store = WeightStore::new();
        for _ in 0..count {
            let name_len = u16::from_le_bytes(r.take(2, "name length")?.try_into().unwrap());
            let name = std::str::from_utf8(r.take(name_len as usize, "name")?)
                .map_err(|_| r.format_err("parameter name is not UTF-8"))?
                .to_owned();
            let rank = r.take(1, "rank")?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32("dimension").map_err(|_| Error::WeightShape {
                    name: name.clone(),
                    reason: "file ends inside the shape".into(),
                })? as usize);
            }
            let n: usize = shape.iter().product();
            let available = (r.bytes.len() - r.pos) / 4;
            if available < n {
                return Err(Error::WeightShape {
                    name,
                    reason: format!(
                        "shape {shape:?} needs {n} values, file holds only {available}"
                    ),
                });
            }
            let raw = r.take(n * 4, "values")?;
            let values = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            if store.arrays.contains_key(&name) {
                return Err(Error::WeightShape {
                    name,
                    reason: "duplicate parameter".into(),
                });
            }
            store.arrays.insert(name, WeightArray { shape, values });
        }
        if r.pos != bytes.len() {
            return Err(r.format_err("trailing bytes after last array"));
        }
        Ok(store)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn format_err(&self, reason: &str) -> Error {
        Error::WeightFormat {
            path: self.path.to_owned(),
            reason: reason.to_owned(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.format_err(&format!("file ends while reading {what}")));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn save_weights(store: &WeightStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, store.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<WeightStore> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    WeightStore::from_bytes(&bytes, path)
}

fn vss_block_shapes(
    out: &mut BTreeMap<String, Vec<usize>>,
    prefix: &str,
    dim: usize,
    cfg: &VmUnetConfig,
) {
    let inner = cfg.inner_dim(dim);
    let rank = cfg.dt_rank(dim);
    let n = cfg.state_dim;
    let mut put = |name: &str, shape: Vec<usize>| {
        out.insert(format!("{prefix}.{name}"), shape);
    };
    put("norm.weight", vec![dim]);
    put("norm.bias", vec![dim]);
    put("in_proj.weight", vec![2 * inner, dim]);
    put("conv.weight", vec![inner, 1, 3, 3]);
    put("conv.bias", vec![inner]);
    for k in 0..4 {
        put(
            &format!("ss2d.{k}.x_proj.weight"),
            vec![rank + 2 * n, inner],
        );
        put(&format!("ss2d.{k}.dt_proj.weight"), vec![inner, rank]);
        put(&format!("ss2d.{k}.dt_proj.bias"), vec![inner]);
        put(&format!("ss2d.{k}.a_log"), vec![inner, n]);
        put(&format!("ss2d.{k}.d"), vec![inner]);
    }
    put("out_norm.weight", vec![inner]);
    put("out_norm.bias", vec![inner]);
    put("out_proj.weight", vec![dim, inner]);
}

/// Every parameter the forward pass reads, with its shape.
pub fn parameter_shapes(config: &VmUnetConfig) -> Result<BTreeMap<String, Vec<usize>>> {
    config.validate()?;
    let c = config.embed_dim;
    let p = config.patch_size;
    let mut out = BTreeMap::new();
    out.insert("patch_embed.weight".into(), vec![c, p * p * 3]);
    out.insert("patch_embed.bias".into(), vec![c]);
    for s in 0..4 {
        let dim = config.stage_dim(s);
        for b in 0..config.encoder_depths[s] {
            vss_block_shapes(&mut out, &format!("encoder.{s}.blocks.{b}"), dim, config);
        }
        if s < 3 {
            out.insert(format!("encoder.{s}.merge.weight"), vec![2 * dim, 4 * dim]);
        }
    }
    for m in 0..4 {
        let dim = config.stage_dim(3 - m);
        if m > 0 {
            let input = 2 * dim;
            out.insert(format!("decoder.{m}.expand.weight"), vec![2 * input, input]);
        }
        for b in 0..config.decoder_depths[m] {
            vss_block_shapes(&mut out, &format!("decoder.{m}.blocks.{b}"), dim, config);
        }
    }
    let out_ch = c / 4;
    out.insert("final.expand.weight".into(), vec![16 * out_ch, c]);
    out.insert("final.norm.weight".into(), vec![out_ch]);
    out.insert("final.norm.bias".into(), vec![out_ch]);
    out.insert("head.weight".into(), vec![1, out_ch]);
    out.insert("head.bias".into(), vec![1]);
    Ok(out)
}

/// Glorot bound `sqrt(6 / (fan_in + fan_out))`. Rank-1 arrays use their
/// length for both fans; higher ranks treat dims 0 and 1 as output and input
/// and multiply both by the trailing receptive field.
pub fn glorot_bound(shape: &[usize]) -> f64 {
    let (fan_in, fan_out) = match shape {
        [] => (1, 1),
        [n] => (*n, *n),
        [out, inp, rest @ ..] => {
            let receptive: usize = rest.iter().product();
            (inp * receptive, out * receptive)
        }
    };
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Seeded uniform Glorot initialization of every required parameter.
pub fn init_weights(config: &VmUnetConfig, seed: u64) -> Result<WeightStore> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = WeightStore::new();
    for (name, shape) in parameter_shapes(config)? {
        let a = glorot_bound(&shape) as f32;
        let n: usize = shape.iter().product();
        let values = (0..n).map(|_| rng.gen_range(-a..=a)).collect();
        store.insert(name, WeightArray { shape, values });
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glorot_fans() {
        assert!((glorot_bound(&[4]) - (6.0f64 / 8.0).sqrt()).abs() < 1e-15);
        assert!((glorot_bound(&[10, 20]) - (6.0f64 / 30.0).sqrt()).abs() < 1e-15);
        assert!((glorot_bound(&[8, 1, 3, 3]) - (6.0f64 / 81.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn init_is_seeded() {
        let cfg = VmUnetConfig::desk();
        assert_eq!(
            init_weights(&cfg, 3).unwrap(),
            init_weights(&cfg, 3).unwrap()
        );
        assert_ne!(
            init_weights(&cfg, 3).unwrap(),
            init_weights(&cfg, 4).unwrap()
        );
    }

    #[test]
    fn init_respects_bounds_and_validates() {
        let cfg = VmUnetConfig::desk();
        let store = init_weights(&cfg, 0).unwrap();
        store.validate(&cfg, false).unwrap();
        for (_, arr) in store.iter() {
            let a = glorot_bound(&arr.shape) as f32;
            assert!(arr.values.iter().all(|v| v.abs() <= a));
        }
    }

    #[test]
    fn validation_errors_name_the_parameter() {
        let cfg = VmUnetConfig::desk();
        let mut store = init_weights(&cfg, 0).unwrap();
        store.insert("bogus", WeightArray::zeros(vec![1]));
        match store.validate(&cfg, false) {
            Err(Error::WeightShape { name, .. }) => assert_eq!(name, "bogus"),
            other => panic!("{other:?}"),
        }
        store.validate(&cfg, true).unwrap();

        store.insert("head.bias", WeightArray::zeros(vec![2]));
        match store.validate(&cfg, true) {
            Err(Error::WeightShape { name, .. }) => assert_eq!(name, "head.bias"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bytes_round_trip() {
        let store = init_weights(&VmUnetConfig::desk(), 9).unwrap();
        let back = WeightStore::from_bytes(&store.to_bytes(), Path::new("mem")).unwrap();
        assert_eq!(store, back);
    }

    #[test]
    fn truncated_array_names_parameter() {
        let mut store = WeightStore::new();
        store.insert("a.weight", WeightArray::zeros(vec![2, 3]));
        store.insert("b.weight", WeightArray::zeros(vec![5]));
        let bytes = store.to_bytes();
        let cut = &bytes[..bytes.len() - 8];
        match WeightStore::from_bytes(cut, Path::new("mem")) {
            Err(Error::WeightShape { name, reason }) => {
                assert_eq!(name, "b.weight");
                assert!(reason.contains("needs 5"), "{reason}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_magic_rejected() {
        let mut bytes = WeightStore::new().to_bytes();
        bytes[0] = b'X';
        assert!(matches!(
            WeightStore::from_bytes(&bytes, Path::new("mem")),
            Err(Error::WeightFormat { .. })
        ));
    }
}
