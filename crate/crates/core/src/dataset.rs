//! On-disk datasets: one directory per view plus a manifest.
//!
//! ```text
//! <root>/manifest.toml
//! <root>/truth.toml            (synthetic data only)
//! <root>/view_000/radiance.pfm
//! <root>/view_000/normals.pfm
//! <root>/view_000/materials.u16
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use byteorder::{ByteOrder, LittleEndian};
use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pfm::{read_pfm, write_pfm};
use crate::scene::ObservationSet;
use crate::synth::{extract_urm, Camera, Encoding, GroundTruth, RenderedView};

pub const MANIFEST: &str = "manifest.toml";
pub const TRUTH: &str = "truth.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewEntry {
    /// Directory relative to the dataset root.
    pub path: String,
    pub illum_id: usize,
    #[serde(default = "unit_exposure")]
    pub exposure: f64,
    pub camera: Camera,
}

fn unit_exposure() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Absent for linear data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub materials: Vec<String>,
    pub n_illums: usize,
    pub views: Vec<ViewEntry>,
}

impl Manifest {
    pub fn encoding(&self) -> Encoding {
        match self.gamma {
            Some(g) => Encoding::Gamma(g),
            None => Encoding::Linear,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub views: Vec<RenderedView>,
}

impl Dataset {
    /// All views' observations; back-facing pixels are dropped and logged.
    pub fn observations(&self) -> Result<ObservationSet> {
        let mut all = Vec::new();
        let mut dropped = 0;
        for (v, e) in self.views.iter().zip(&self.manifest.views) {
            let (obs, d) = extract_urm(v, self.manifest.encoding(), e.exposure);
            all.extend(obs);
            dropped += d;
        }
        if dropped > 0 {
            info!("dropped {dropped} back-facing observations");
        }
        ObservationSet::new(all, self.manifest.materials.len(), self.manifest.n_illums)
    }
}

pub fn encode_u16(ids: &[u16]) -> Vec<u8> {
    let mut out = vec![0u8; ids.len() * 2];
    LittleEndian::write_u16_into(ids, &mut out);
    out
}

pub fn decode_u16(bytes: &[u8], expected: usize) -> Result<Vec<u16>> {
    if bytes.len() != expected * 2 {
        return Err(Error::ShortRead {
            expected: expected * 2,
            found: bytes.len(),
        });
    }
    let mut ids = vec![0u16; expected];
    LittleEndian::read_u16_into(bytes, &mut ids);
    Ok(ids)
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn to_toml<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string(value).map_err(|e| Error::Parse(e.to_string()))
}

pub(crate) fn from_toml<T: for<'de> Deserialize<'de>>(text: &str, path: &Path) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn view_dir_name(k: usize) -> String {
    format!("view_{k:03}")
}

/// Writes views, manifest and optional ground truth under `root`.
pub fn write_dataset(
    root: impl AsRef<Path>,
    views: &[RenderedView],
    material_names: &[String],
    n_illums: usize,
    gamma: Option<f64>,
    truth: Option<&GroundTruth>,
) -> Result<Manifest> {
    let root = root.as_ref();
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut entries = Vec::with_capacity(views.len());
    for (k, v) in views.iter().enumerate() {
        let name = view_dir_name(k);
        let dir = root.join(&name);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_pfm(dir.join("radiance.pfm"), &v.radiance)?;
        write_pfm(dir.join("normals.pfm"), &v.normals)?;
        let ids = dir.join("materials.u16");
        fs::write(&ids, encode_u16(&v.material_ids)).map_err(|e| Error::io(&ids, e))?;
        entries.push(ViewEntry {
            path: name,
            illum_id: v.illum_id,
            exposure: 1.0,
            camera: v.camera,
        });
    }
    let manifest = Manifest {
        gamma,
        materials: material_names.to_vec(),
        n_illums,
        views: entries,
    };
    write_text(&root.join(MANIFEST), &to_toml(&manifest)?)?;
    if let Some(t) = truth {
        write_truth(root.join(TRUTH), t)?;
    }
    Ok(manifest)
}

pub fn read_dataset(root: impl AsRef<Path>) -> Result<Dataset> {
    let root = root.as_ref();
    let path = root.join(MANIFEST);
    let manifest: Manifest = from_toml(&read_text(&path)?, &path)?;
    let mut views = Vec::with_capacity(manifest.views.len());
    for e in &manifest.views {
        let dir: PathBuf = root.join(&e.path);
        let radiance = read_pfm(dir.join("radiance.pfm"))?;
        let normals = read_pfm(dir.join("normals.pfm"))?;
        radiance.check_same_size(&normals)?;
        if (radiance.width, radiance.height) != (e.camera.width, e.camera.height) {
            return Err(Error::DimensionMismatch(format!(
                "{}: image is {}x{} but camera is {}x{}",
                e.path, radiance.width, radiance.height, e.camera.width, e.camera.height
            )));
        }
        let ids_path = dir.join("materials.u16");
        let bytes = fs::read(&ids_path).map_err(|e| Error::io(&ids_path, e))?;
        let material_ids = decode_u16(&bytes, radiance.width * radiance.height)?;
        if e.illum_id >= manifest.n_illums {
            return Err(Error::InvalidArgument(format!(
                "{}: illumination {} out of range",
                e.path, e.illum_id
            )));
        }
        views.push(RenderedView {
            radiance,
            normals,
            material_ids,
            illum_id: e.illum_id,
            camera: e.camera,
        });
    }
    Ok(Dataset { manifest, views })
}

pub fn write_truth(path: impl AsRef<Path>, truth: &GroundTruth) -> Result<()> {
    write_text(path.as_ref(), &to_toml(truth)?)
}

pub fn read_truth(path: impl AsRef<Path>) -> Result<GroundTruth> {
    let path = path.as_ref();
    let path = if path.is_dir() { path.join(TRUTH) } else { path.to_path_buf() };
    from_toml(&read_text(&path)?, &path)
}
