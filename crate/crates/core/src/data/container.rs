//! On-disk scene container and corpus manifest.
//!
//! Scene file layout (all integers little-endian):
//!
//! | offset    | size        | content                                   |
//! |-----------|-------------|-------------------------------------------|
//! | 0         | 8           | magic `DASSSCN\0`                         |
//! | 8         | 4           | `u32` format version (currently 1)        |
//! | 12        | 4           | `u32` header length `H`                   |
//! | 16        | `H`         | UTF-8 JSON header (see [`SceneHeader`])   |
//! | 16 + H    | `32·N`      | `N` point rows, `f64 × 4`                 |
//! | …         | `2·L`       | `L` labels, `u16`                         |
//! | …         | `58·B`      | `B` boxes, `f64 × 7` then `u16` class     |
//!
//! The corpus directory holds one sub-directory per split and a
//! `manifest.json` listing every scene with its seed and SHA-256 digest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::cloud::{ClassTable, LabeledBox, PointCloud, Scene, SceneMeta};
use super::synth::{synth_scene, GenConfig};
use crate::error::{Error, Result};
use crate::geom::Box7;

pub const SCENE_MAGIC: &[u8; 8] = b"DASSSCN\0";
pub const SCENE_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDtypes {
    pub points: String,
    pub labels: String,
    pub boxes: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneHeader {
    pub version: u32,
    pub num_points: usize,
    pub valid_count: usize,
    pub num_labels: usize,
    pub num_boxes: usize,
    pub dtypes: SceneDtypes,
    pub meta: SceneMeta,
}

pub fn encode_scene(scene: &Scene) -> Vec<u8> {
    let header = SceneHeader {
        version: SCENE_VERSION,
        num_points: scene.cloud.points.len(),
        valid_count: scene.cloud.valid_count,
        num_labels: scene.labels.len(),
        num_boxes: scene.boxes.len(),
        dtypes: SceneDtypes {
            points: "f64le[4]".into(),
            labels: "u16le".into(),
            boxes: "f64le[7]+u16le".into(),
        },
        meta: scene.meta.clone(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + json.len() + 32 * header.num_points);
    out.extend_from_slice(SCENE_MAGIC);
    out.extend_from_slice(&SCENE_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for p in &scene.cloud.points {
        for v in p {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for l in &scene.labels {
        out.extend_from_slice(&l.to_le_bytes());
    }
    for b in &scene.boxes {
        let bb = &b.bbox;
        for v in [bb.x, bb.y, bb.z, bb.h, bb.w, bb.l, bb.r] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&b.class.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::ByteFormat {
                offset: self.pos,
                msg: format!("truncated: need {n} more bytes"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_scene(bytes: &[u8]) -> Result<Scene> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != SCENE_MAGIC {
        return Err(Error::ByteFormat {
            offset: 0,
            msg: "not a scene container".into(),
        });
    }
    let version = r.u32()?;
    if version != SCENE_VERSION {
        return Err(Error::ByteFormat {
            offset: 8,
            msg: format!("unsupported version {version}"),
        });
    }
    let hlen = r.u32()? as usize;
    let header: SceneHeader =
        serde_json::from_slice(r.take(hlen)?).map_err(|e| Error::ByteFormat {
            offset: 16,
            msg: format!("bad header: {e}"),
        })?;
    let mut points = Vec::with_capacity(header.num_points);
    for _ in 0..header.num_points {
        points.push([r.f64()?, r.f64()?, r.f64()?, r.f64()?]);
    }
    let mut labels = Vec::with_capacity(header.num_labels);
    for _ in 0..header.num_labels {
        labels.push(r.u16()?);
    }
    let mut boxes = Vec::with_capacity(header.num_boxes);
    for _ in 0..header.num_boxes {
        let v = [r.f64()?, r.f64()?, r.f64()?, r.f64()?, r.f64()?, r.f64()?, r.f64()?];
        let class = r.u16()?;
        boxes.push(LabeledBox {
            bbox: Box7 {
                x: v[0],
                y: v[1],
                z: v[2],
                h: v[3],
                w: v[4],
                l: v[5],
                r: v[6],
            },
            class,
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::ByteFormat {
            offset: r.pos,
            msg: "trailing bytes".into(),
        });
    }
    if header.valid_count > header.num_points {
        return Err(Error::ByteFormat {
            offset: 16,
            msg: "valid_count exceeds num_points".into(),
        });
    }
    Ok(Scene {
        cloud: PointCloud {
            points,
            valid_count: header.valid_count,
        },
        labels,
        boxes,
        meta: header.meta,
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub base_seed: u64,
    pub train_scenes: usize,
    pub test_scenes: usize,
    pub generator: GenConfig,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            base_seed: 0,
            train_scenes: 32,
            test_scenes: 16,
            generator: GenConfig::default(),
        }
    }
}

/// Seed of scene `index` within split number `split`.
pub fn scene_seed(base: u64, split: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the packed coordinates
    let mut z = base
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(split << 40)
        .wrapping_add(index);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub const SPLITS: [&str; 2] = ["train", "test"];

/// An in-memory corpus with both splits.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub config: CorpusConfig,
    pub train: Vec<Scene>,
    pub test: Vec<Scene>,
}

impl Corpus {
    pub fn generate(config: &CorpusConfig) -> Result<Corpus> {
        let make = |split: u64, n: usize| -> Result<Vec<Scene>> {
            (0..n as u64)
                .map(|i| synth_scene(scene_seed(config.base_seed, split, i), &config.generator))
                .collect()
        };
        Ok(Corpus {
            config: config.clone(),
            train: make(0, config.train_scenes)?,
            test: make(1, config.test_scenes)?,
        })
    }

    pub fn split(&self, name: &str) -> &[Scene] {
        match name {
            "train" => &self.train,
            _ => &self.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    pub file: String,
    pub seed: u64,
    pub sha256: String,
    pub num_points: usize,
    pub num_boxes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub name: String,
    pub scenes: Vec<SceneEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub version: u32,
    pub class_names: Vec<String>,
    pub config: CorpusConfig,
    pub splits: Vec<SplitManifest>,
}

impl CorpusManifest {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = serde_json::to_vec_pretty(self).expect("manifest serializes");
        v.push(b'\n');
        v
    }

    /// Digest of the manifest bytes; covers every scene through its hash.
    pub fn content_hash(&self) -> String {
        sha256_hex(&self.to_bytes())
    }
}

/// The manifest [`write_corpus`] would write, computed in memory.
pub fn corpus_manifest(corpus: &Corpus) -> CorpusManifest {
    build_manifest(corpus, |_, _| Ok(())).expect("no sink errors")
}

/// Writes every scene plus the manifest under `dir`.
pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<CorpusManifest> {
    for name in SPLITS {
        let sub = dir.join(name);
        fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
    }
    let manifest = build_manifest(corpus, |file, bytes| {
        let path = dir.join(file);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
    })?;
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, manifest.to_bytes()).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

fn build_manifest(corpus: &Corpus, mut sink: impl FnMut(&str, &[u8]) -> Result<()>) -> Result<CorpusManifest> {
    let mut splits = Vec::new();
    for name in SPLITS {
        let mut entries = Vec::new();
        for (i, s) in corpus.split(name).iter().enumerate() {
            let bytes = encode_scene(s);
            let file = format!("{name}/scene_{i:05}.dscn");
            sink(&file, &bytes)?;
            entries.push(SceneEntry {
                file,
                seed: s.meta.seed,
                sha256: sha256_hex(&bytes),
                num_points: s.cloud.len(),
                num_boxes: s.boxes.len(),
            });
        }
        splits.push(SplitManifest {
            name: name.to_string(),
            scenes: entries,
        });
    }
    Ok(CorpusManifest {
        version: SCENE_VERSION,
        class_names: ClassTable::synthetic().names,
        config: corpus.config.clone(),
        splits,
    })
}

pub fn read_manifest(dir: &Path) -> Result<CorpusManifest> {
    let path = dir.join(MANIFEST_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Loads a corpus written by [`write_corpus`], verifying scene digests.
pub fn read_corpus(dir: &Path) -> Result<(Corpus, CorpusManifest)> {
    let manifest = read_manifest(dir)?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for split in &manifest.splits {
        let target = match split.name.as_str() {
            "train" => &mut train,
            "test" => &mut test,
            other => return Err(Error::Data(format!("unknown split {other:?}"))),
        };
        for e in &split.scenes {
            let path: PathBuf = dir.join(&e.file);
            let bytes = fs::read(&path).map_err(|err| Error::io(&path, err))?;
            if sha256_hex(&bytes) != e.sha256 {
                return Err(Error::Data(format!("{} fails its digest", path.display())));
            }
            target.push(decode_scene(&bytes)?);
        }
    }
    Ok((
        Corpus {
            config: manifest.config.clone(),
            train,
            test,
        },
        manifest,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scene_bytes_roundtrip() {
        let s = synth_scene(3, &GenConfig::default()).unwrap();
        let bytes = encode_scene(&s);
        let back = decode_scene(&bytes).unwrap();
        assert_eq!(back, s);
        assert_eq!(encode_scene(&back), bytes);
    }

    #[test]
    fn truncated_and_bad_magic() {
        let s = synth_scene(3, &GenConfig::default()).unwrap();
        let bytes = encode_scene(&s);
        assert!(matches!(
            decode_scene(&bytes[..bytes.len() - 1]),
            Err(Error::ByteFormat { .. })
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_scene(&bad), Err(Error::ByteFormat { offset: 0, .. })));
    }

    #[test]
    fn corpus_on_disk_is_reproducible() {
        let cfg = CorpusConfig {
            train_scenes: 3,
            test_scenes: 2,
            ..CorpusConfig::default()
        };
        let c = Corpus::generate(&cfg).unwrap();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let m1 = write_corpus(&c, d1.path()).unwrap();
        let m2 = write_corpus(&Corpus::generate(&cfg).unwrap(), d2.path()).unwrap();
        assert_eq!(m1.content_hash(), m2.content_hash());
        let (back, m) = read_corpus(d1.path()).unwrap();
        assert_eq!(back, c);
        assert_eq!(m, m1);
        assert_eq!(corpus_manifest(&c), m1);
        assert_eq!(m.splits[0].scenes.len(), 3);
    }

    #[test]
    fn seeds_are_distinct_across_splits() {
        let a: Vec<u64> = (0..100).map(|i| scene_seed(0, 0, i)).collect();
        let b: Vec<u64> = (0..100).map(|i| scene_seed(0, 1, i)).collect();
        assert!(a.iter().all(|s| !b.contains(s)));
    }
}
