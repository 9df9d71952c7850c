//! On-disk layout of a generated dataset.
//!
//! ```text
//! <root>/dataset.txt                     key/value header
//! <root>/scene-NN/manifest.txt           index, name, description, samples, seed
//! <root>/scene-NN/frame-XXXXXX.pose.txt  4×4 camera-to-world matrix
//! <root>/scene-NN/frame-XXXXXX.color.bin image block
//! ```
//!
//! Manifests are `key value` lines split at the first space. An image block is
//! the magic `MVLIMG01`, `u32` channels, height, width, then the pixels as
//! little-endian `f64` in channel-major order.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::ingest::{format_7scenes_pose, parse_7scenes_pose};
use super::{DataError, PoseSample, SceneCatalog, Vocab};
use crate::numerics::Tensor;

pub const DATASET_FORMAT: &str = "mvloc-synthetic-1";
pub const IMAGE_MAGIC: &[u8; 8] = b"MVLIMG01";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DatasetInfo {
    pub seed: u64,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub max_caption_len: usize,
    pub samples_per_scene: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub info: DatasetInfo,
    pub catalog: SceneCatalog,
    pub vocab: Vocab,
    pub samples: Vec<PoseSample>,
}

fn io_err(path: &Path, e: std::io::Error) -> DataError {
    DataError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), DataError> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn read(path: &Path) -> Result<Vec<u8>, DataError> {
    fs::read(path).map_err(|e| io_err(path, e))
}

fn read_text(path: &Path) -> Result<String, DataError> {
    String::from_utf8(read(path)?).map_err(|_| DataError::Manifest {
        path: path.display().to_string(),
        reason: "not UTF-8".into(),
    })
}

pub fn scene_dir(root: &Path, index: usize) -> PathBuf {
    root.join(format!("scene-{index:02}"))
}

fn frame_stem(i: usize) -> String {
    format!("frame-{i:06}")
}

pub fn encode_image(image: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + 8 * image.len());
    out.extend_from_slice(IMAGE_MAGIC);
    for d in image.shape() {
        out.extend_from_slice(&(*d as u32).to_le_bytes());
    }
    for v in image.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_image(bytes: &[u8]) -> Result<Tensor, DataError> {
    let bad = |r: &str| DataError::Image(r.to_string());
    if bytes.len() < 20 || &bytes[..8] != IMAGE_MAGIC {
        return Err(bad("missing image header"));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
    let shape = vec![dim(0), dim(1), dim(2)];
    let n: usize = shape.iter().product();
    if bytes.len() != 20 + 8 * n {
        return Err(bad("image block length does not match its shape"));
    }
    let data = bytes[20..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Tensor::new(shape, data).map_err(|e| bad(&e.to_string()))
}

struct Manifest {
    path: String,
    entries: Vec<(String, String)>,
}

impl Manifest {
    fn parse(path: &Path, text: &str) -> Self {
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| match l.split_once(' ') {
                Some((k, v)) => (k.to_string(), v.to_string()),
                None => (l.to_string(), String::new()),
            })
            .collect();
        Self {
            path: path.display().to_string(),
            entries,
        }
    }

    fn err(&self, reason: String) -> DataError {
        DataError::Manifest {
            path: self.path.clone(),
            reason,
        }
    }

    fn get(&self, key: &str) -> Result<&str, DataError> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| self.err(format!("missing key `{key}`")))
    }

    fn number<T: std::str::FromStr>(&self, key: &str) -> Result<T, DataError> {
        let v = self.get(key)?;
        v.parse().map_err(|_| self.err(format!("`{key}` is not a number: `{v}`")))
    }
}

/// Writes `samples` (scene-major, `info.samples_per_scene` per scene) under `root`.
pub fn write_dataset(root: &Path, info: &DatasetInfo, catalog: &SceneCatalog, samples: &[PoseSample]) -> Result<(), DataError> {
    if samples.len() != catalog.len() * info.samples_per_scene {
        return Err(DataError::Invalid(format!(
            "{} samples for {} scenes × {}",
            samples.len(),
            catalog.len(),
            info.samples_per_scene
        )));
    }
    fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
    let header = format!(
        "format {DATASET_FORMAT}\nseed {}\nscenes {}\nchannels {}\nheight {}\nwidth {}\nmax_caption_len {}\nsamples_per_scene {}\n",
        info.seed,
        catalog.len(),
        info.channels,
        info.height,
        info.width,
        info.max_caption_len,
        info.samples_per_scene
    );
    write(&root.join("dataset.txt"), header.as_bytes())?;
    for scene in catalog.scenes() {
        let dir = scene_dir(root, scene.index);
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        if scene.name.contains('\n') || scene.description.contains('\n') {
            return Err(DataError::InvalidCatalog(format!("scene `{}` has a line break", scene.name)));
        }
        let manifest = format!(
            "index {}\nname {}\ndescription {}\nsamples {}\nseed {}\n",
            scene.index, scene.name, scene.description, info.samples_per_scene, info.seed
        );
        write(&dir.join("manifest.txt"), manifest.as_bytes())?;
        let block = &samples[scene.index * info.samples_per_scene..(scene.index + 1) * info.samples_per_scene];
        for (i, s) in block.iter().enumerate() {
            if s.scene != scene.index {
                return Err(DataError::Invalid(format!("sample {i} of scene {} is labelled {}", scene.index, s.scene)));
            }
            let stem = frame_stem(i);
            write(&dir.join(format!("{stem}.pose.txt")), format_7scenes_pose(&s.pose).as_bytes())?;
            write(&dir.join(format!("{stem}.color.bin")), &encode_image(&s.image))?;
        }
    }
    Ok(())
}

/// Loads a dataset written by [`write_dataset`]; captions are tokenized with a
/// vocabulary rebuilt from the stored catalog.
pub fn read_dataset(root: &Path) -> Result<Dataset, DataError> {
    let header_path = root.join("dataset.txt");
    let header = Manifest::parse(&header_path, &read_text(&header_path)?);
    if header.get("format")? != DATASET_FORMAT {
        return Err(header.err(format!("unsupported format `{}`", header.get("format")?)));
    }
    let info = DatasetInfo {
        seed: header.number("seed")?,
        channels: header.number("channels")?,
        height: header.number("height")?,
        width: header.number("width")?,
        max_caption_len: header.number("max_caption_len")?,
        samples_per_scene: header.number("samples_per_scene")?,
    };
    let n_scenes: usize = header.number("scenes")?;
    let mut entries = Vec::with_capacity(n_scenes);
    for k in 0..n_scenes {
        let path = scene_dir(root, k).join("manifest.txt");
        let m = Manifest::parse(&path, &read_text(&path)?);
        if m.number::<usize>("index")? != k {
            return Err(m.err(format!("index does not match directory {k}")));
        }
        if m.number::<usize>("samples")? != info.samples_per_scene {
            return Err(m.err("sample count differs from dataset header".into()));
        }
        entries.push((m.get("name")?.to_string(), m.get("description")?.to_string()));
    }
    let catalog = SceneCatalog::new(entries)?;
    let vocab = Vocab::build(&catalog)?;
    let mut samples = Vec::with_capacity(n_scenes * info.samples_per_scene);
    for scene in catalog.scenes() {
        let dir = scene_dir(root, scene.index);
        let tokens = vocab.tokenize(&scene.description, info.max_caption_len);
        for i in 0..info.samples_per_scene {
            let stem = frame_stem(i);
            let pose_path = dir.join(format!("{stem}.pose.txt"));
            let pose = parse_7scenes_pose(&read_text(&pose_path)?).map_err(|e| DataError::Manifest {
                path: pose_path.display().to_string(),
                reason: e.to_string(),
            })?;
            let image = decode_image(&read(&dir.join(format!("{stem}.color.bin")))?)?;
            if image.shape() != [info.channels, info.height, info.width] {
                return Err(DataError::Image(format!("{stem} of scene {} has shape {:?}", scene.index, image.shape())));
            }
            samples.push(PoseSample {
                image,
                tokens: tokens.clone(),
                scene: scene.index,
                pose,
            });
        }
    }
    Ok(Dataset {
        info,
        catalog,
        vocab,
        samples,
    })
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), DataError> {
    for entry in fs::read_dir(dir).map_err(|e| io_err(dir, e))? {
        let path = entry.map_err(|e| io_err(dir, e))?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// SHA-256 over every file under `root`, in sorted relative-path order, as hex.
/// Each file contributes its relative path, a zero byte, its length and its bytes.
pub fn dataset_digest(root: &Path) -> Result<String, DataError> {
    let mut files = Vec::new();
    collect_files(root, &mut files)?;
    let mut rel: Vec<(String, PathBuf)> = files
        .into_iter()
        .map(|p| {
            let r = p.strip_prefix(root).unwrap_or(&p).to_string_lossy().replace('\\', "/");
            (r, p)
        })
        .collect();
    rel.sort();
    let mut h = Sha256::new();
    for (name, path) in rel {
        let bytes = read(&path)?;
        h.update(name.as_bytes());
        h.update([0u8]);
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}
