//! On-disk embedding cache.
//!
//! Layout: `{root}/{digest[0:2]}/{digest}.bin` holds the vector as raw
//! little-endian f32, and `{digest}.json` a small header. The header is
//! written last, so an entry is visible only once both files are complete.
//! Both files are written to a temp file and renamed into place.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use tempfile::NamedTempFile;

use super::{BackendError, CacheKey, EmbedResult, EmbeddingVector};

const FORMAT: &str = "f32le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    digest: String,
    model_id: String,
    layer_index: i32,
    dim: usize,
    format: String,
    generated_word: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CacheStats {
    pub entries: usize,
    pub bytes: u64,
}

#[derive(Debug)]
pub struct Cache {
    root: PathBuf,
    write_lock: Mutex<()>,
}

fn cache_err(context: &str, path: &Path, e: impl std::fmt::Display) -> BackendError {
    BackendError::Cache(format!("{context} {}: {e}", path.display()))
}

impl Cache {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, BackendError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| cache_err("cannot create", &root, e))?;
        Ok(Self {
            root,
            write_lock: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn paths(&self, key: &CacheKey) -> (PathBuf, PathBuf, PathBuf) {
        let d = key.digest();
        let dir = self.root.join(&d[..2]);
        let bin = dir.join(format!("{d}.bin"));
        let json = dir.join(format!("{d}.json"));
        (dir, bin, json)
    }

    pub fn load(&self, key: &CacheKey) -> Result<Option<EmbedResult>, BackendError> {
        let (_, bin, json) = self.paths(key);
        let header = match fs::read(&json) {
            Ok(bytes) => bytes,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(cache_err("cannot read", &json, e)),
        };
        let header: Header = serde_json::from_slice(&header).map_err(|e| cache_err("corrupt header", &json, e))?;
        if header.digest != key.digest() || header.format != FORMAT {
            return Err(cache_err("header does not match entry", &json, &header.digest));
        }
        let raw = fs::read(&bin).map_err(|e| cache_err("cannot read", &bin, e))?;
        if raw.len() != header.dim * 4 {
            return Err(cache_err(
                "truncated vector",
                &bin,
                format!("{} bytes for dim {}", raw.len(), header.dim),
            ));
        }
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let embedding = EmbeddingVector::new(values).map_err(|e| cache_err("invalid vector", &bin, e))?;
        Ok(Some(EmbedResult {
            embedding,
            generated_word: header.generated_word,
            model_id: header.model_id,
            layer_index: header.layer_index,
        }))
    }

    pub fn store(&self, key: &CacheKey, result: &EmbedResult) -> Result<(), BackendError> {
        let (dir, bin, json) = self.paths(key);
        let header = Header {
            digest: key.digest().to_owned(),
            model_id: result.model_id.clone(),
            layer_index: result.layer_index,
            dim: result.embedding.dim(),
            format: FORMAT.to_owned(),
            generated_word: result.generated_word.clone(),
        };
        let mut raw = Vec::with_capacity(result.embedding.dim() * 4);
        for v in result.embedding.as_slice() {
            raw.extend_from_slice(&v.to_le_bytes());
        }
        let header = serde_json::to_vec_pretty(&header).map_err(|e| cache_err("cannot encode", &json, e))?;

        let _guard = self.write_lock.lock().expect("cache write lock poisoned");
        fs::create_dir_all(&dir).map_err(|e| cache_err("cannot create", &dir, e))?;
        atomic_write(&dir, &bin, &raw)?;
        atomic_write(&dir, &json, &header)
    }

    /// Entry count and total size on disk.
    pub fn stats(&self) -> Result<CacheStats, BackendError> {
        let mut stats = CacheStats::default();
        for path in self.entry_files()? {
            let meta = fs::metadata(&path).map_err(|e| cache_err("cannot stat", &path, e))?;
            stats.bytes += meta.len();
            if path.extension().is_some_and(|e| e == "json") {
                stats.entries += 1;
            }
        }
        Ok(stats)
    }

    /// Removes every entry; returns how many were removed.
    pub fn clear(&self) -> Result<usize, BackendError> {
        let _guard = self.write_lock.lock().expect("cache write lock poisoned");
        let mut removed = 0;
        for path in self.entry_files()? {
            if path.extension().is_some_and(|e| e == "json") {
                removed += 1;
            }
            fs::remove_file(&path).map_err(|e| cache_err("cannot remove", &path, e))?;
        }
        Ok(removed)
    }

    fn entry_files(&self) -> Result<Vec<PathBuf>, BackendError> {
        let mut files = Vec::new();
        let shards = fs::read_dir(&self.root).map_err(|e| cache_err("cannot list", &self.root, e))?;
        for shard in shards {
            let shard = shard.map_err(|e| cache_err("cannot list", &self.root, e))?.path();
            if !shard.is_dir() || shard.file_name().is_none_or(|n| n.len() != 2) {
                continue;
            }
            for entry in fs::read_dir(&shard).map_err(|e| cache_err("cannot list", &shard, e))? {
                let path = entry.map_err(|e| cache_err("cannot list", &shard, e))?.path();
                if path.extension().is_some_and(|e| e == "bin" || e == "json") {
                    files.push(path);
                }
            }
        }
        files.sort();
        Ok(files)
    }
}

fn atomic_write(dir: &Path, target: &Path, bytes: &[u8]) -> Result<(), BackendError> {
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| cache_err("cannot create temp file in", dir, e))?;
    tmp.write_all(bytes).map_err(|e| cache_err("cannot write", target, e))?;
    tmp.as_file().sync_all().map_err(|e| cache_err("cannot sync", target, e))?;
    tmp.persist(target).map_err(|e| cache_err("cannot rename into", target, e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::mock_embed;
    use crate::prompting::registry;
    use proptest::prelude::*;

    fn sample(word: Option<&str>) -> EmbedResult {
        EmbedResult {
            embedding: EmbeddingVector::new(vec![1.5, -0.0, f32::MIN_POSITIVE, 3.4e38, -7.25e-12]).unwrap(),
            generated_word: word.map(str::to_owned),
            model_id: "m".into(),
            layer_index: -3,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::open(dir.path().join("c")).unwrap();
        let key = CacheKey::new("m", -3, "prompt");
        assert_eq!(cache.load(&key).unwrap(), None);
        let r = sample(Some("Male"));
        cache.store(&key, &r).unwrap();
        let back = cache.load(&key).unwrap().unwrap();
        assert_eq!(back, r);
        let bits = |r: &EmbedResult| r.embedding.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&r));

        let d = key.digest();
        assert!(dir.path().join("c").join(&d[..2]).join(format!("{d}.bin")).exists());
        assert_eq!(fs::metadata(dir.path().join("c").join(&d[..2]).join(format!("{d}.bin"))).unwrap().len(), 20);
    }

    #[test]
    fn stats_and_clear() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::open(dir.path()).unwrap();
        for i in 0..3 {
            cache.store(&CacheKey::new("m", -1, &i.to_string()), &sample(None)).unwrap();
        }
        let s = cache.stats().unwrap();
        assert_eq!(s.entries, 3);
        assert!(s.bytes >= 60);
        assert_eq!(cache.clear().unwrap(), 3);
        assert_eq!(cache.stats().unwrap().entries, 0);
    }

    #[test]
    fn bin_without_header_is_a_miss() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::open(dir.path()).unwrap();
        let key = CacheKey::new("m", -1, "p");
        let (d, bin, _) = cache.paths(&key);
        fs::create_dir_all(d).unwrap();
        fs::write(bin, [0u8; 8]).unwrap();
        assert_eq!(cache.load(&key).unwrap(), None);
    }

    #[test]
    fn corrupt_entries_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::open(dir.path()).unwrap();
        let key = CacheKey::new("m", -1, "p");
        cache.store(&key, &sample(None)).unwrap();
        let (_, bin, _) = cache.paths(&key);
        fs::write(&bin, [0u8; 6]).unwrap();
        assert!(matches!(cache.load(&key), Err(BackendError::Cache(_))));
    }

    #[test]
    fn concurrent_writers() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::open(dir.path()).unwrap();
        let t = &registry()[8];
        std::thread::scope(|s| {
            for w in 0..4 {
                let cache = &cache;
                s.spawn(move || {
                    for i in 0..25 {
                        let p = t.render(&format!("text {}", (i + w) % 30), "c").unwrap();
                        let r = mock_embed(&p, 8, 0).unwrap();
                        let key = CacheKey::new("mock", -1, p.rendered());
                        cache.store(&key, &r).unwrap();
                        assert_eq!(cache.load(&key).unwrap().unwrap(), r);
                    }
                });
            }
        });
        assert_eq!(cache.stats().unwrap().entries, 28);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn arbitrary_vectors_round_trip(bits in prop::collection::vec(any::<u32>(), 1..64), word in proptest::option::of("[a-zA-Z-]{1,12}")) {
            let values: Vec<f32> = bits.into_iter().map(f32::from_bits).filter(|v| v.is_finite()).collect();
            prop_assume!(!values.is_empty());
            let dir = tempfile::tempdir().unwrap();
            let cache = Cache::open(dir.path()).unwrap();
            let r = EmbedResult {
                embedding: EmbeddingVector::new(values.clone()).unwrap(),
                generated_word: word,
                model_id: "x".into(),
                layer_index: 0,
            };
            let key = CacheKey::new("x", 0, "y");
            cache.store(&key, &r).unwrap();
            let back = cache.load(&key).unwrap().unwrap();
            let got: Vec<u32> = back.embedding.as_slice().iter().map(|v| v.to_bits()).collect();
            let want: Vec<u32> = values.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(got, want);
            prop_assert_eq!(back.generated_word, r.generated_word);
        }
    }
}
