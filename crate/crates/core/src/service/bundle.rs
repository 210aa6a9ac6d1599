//! Session export: a stored (uncompressed) zip that the CLI can re-import.

use std::io::{Cursor, Read, Write};

use serde::{Deserialize, Serialize};
use zip::write::SimpleFileOptions;
use zip::{CompressionMethod, ZipArchive, ZipWriter};

use super::Session;
use crate::annosim::AnnotationSet;
use crate::asm::DeformReport;
use crate::error::{Error, Result};
use crate::grid::{rvol, BinaryGrid, GridSpec};
use crate::mesh::{obj, TriMesh};

pub const BUNDLE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub session_id: String,
    pub revision: u64,
    pub grid: GridSpec,
    pub mesh_revision: Option<u64>,
    pub raster_revision: Option<u64>,
    pub files: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bundle {
    pub manifest: Manifest,
    pub annotation: AnnotationSet,
    pub template: Option<TriMesh>,
    pub mesh: Option<TriMesh>,
    pub raster: Option<BinaryGrid>,
    pub report: Option<DeformReport>,
}

fn zip_err(e: zip::result::ZipError) -> Error {
    Error::Format(format!("bundle: {e}"))
}

pub fn export_bundle(s: &Session) -> Result<Vec<u8>> {
    let mut files: Vec<(&str, Vec<u8>)> = vec![("annotation.json", s.annotation().to_json().into_bytes())];
    if let Some(t) = &s.template {
        files.push(("template.obj", obj::to_obj(t).into_bytes()));
    }
    if let Some(d) = &s.deformed {
        files.push(("deformed.obj", obj::to_obj(&d.value).into_bytes()));
    }
    if let Some(r) = &s.raster {
        files.push(("raster.rvol", rvol::encode(&r.value)));
    }
    if let Some(r) = &s.report {
        files.push(("report.json", serde_json::to_vec_pretty(&r.value)?));
    }
    let manifest = Manifest {
        version: BUNDLE_VERSION,
        session_id: s.id.clone(),
        revision: s.revision,
        grid: *s.volume.spec(),
        mesh_revision: s.deformed.as_ref().map(|d| d.revision),
        raster_revision: s.raster.as_ref().map(|r| r.revision),
        files: files.iter().map(|(n, _)| n.to_string()).collect(),
    };
    files.push(("manifest.json", serde_json::to_vec_pretty(&manifest)?));

    let mut zw = ZipWriter::new(Cursor::new(Vec::new()));
    let opts = SimpleFileOptions::default().compression_method(CompressionMethod::Stored);
    for (name, bytes) in files {
        zw.start_file(name, opts).map_err(zip_err)?;
        zw.write_all(&bytes)?;
    }
    Ok(zw.finish().map_err(zip_err)?.into_inner())
}

pub fn read_bundle(bytes: &[u8]) -> Result<Bundle> {
    let mut za = ZipArchive::new(Cursor::new(bytes)).map_err(zip_err)?;
    let mut entry = |name: &str| -> Result<Option<Vec<u8>>> {
        match za.by_name(name) {
            Ok(mut f) => {
                let mut buf = Vec::new();
                f.read_to_end(&mut buf)?;
                Ok(Some(buf))
            }
            Err(zip::result::ZipError::FileNotFound) => Ok(None),
            Err(e) => Err(zip_err(e)),
        }
    };
    let text = |b: Vec<u8>| String::from_utf8(b).map_err(|e| Error::Format(format!("bundle: {e}")));
    let manifest: Manifest = serde_json::from_slice(
        &entry("manifest.json")?.ok_or_else(|| Error::Format("bundle has no manifest.json".into()))?,
    )?;
    let annotation = AnnotationSet::from_json(&text(
        entry("annotation.json")?.ok_or_else(|| Error::Format("bundle has no annotation.json".into()))?,
    )?)?;
    let template = entry("template.obj")?.map(text).transpose()?.map(|t| obj::parse_obj(&t)).transpose()?;
    let mesh = entry("deformed.obj")?.map(text).transpose()?.map(|t| obj::parse_obj(&t)).transpose()?;
    let raster = entry("raster.rvol")?.map(|b| rvol::decode(&b).and_then(|g| g.into_binary())).transpose()?;
    let report = entry("report.json")?.map(|b| serde_json::from_slice(&b)).transpose()?;
    Ok(Bundle { manifest, annotation, template, mesh, raster, report })
}
