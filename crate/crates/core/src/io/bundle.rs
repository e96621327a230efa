//! Scene bundle directory:
//!
//! ```text
//! scene.json        manifest (schema_version, dims, instances, models)
//! masks.png         16-bit instance ids, 0 = background, id + 1 otherwise
//! edge_map.png      8-bit layout edge intensity
//! label_map.png     optional 8-bit layout regions
//! lines.json        [[[x0, y0], [x1, y1]], ...]
//! answers.json      optional answer codes per instance and question
//! priors.json       support counts [child][parent][below, behind], height mu/sigma
//! descriptors.bin   f32 LE, 32 x 2048 per model
//! queries.bin       optional f32 LE, 2048 per instance
//! meshes/*.obj
//! ```

use std::collections::BTreeMap;
use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma};
use serde::{Deserialize, Serialize};

use crate::categories::CATEGORY_COUNT;
use crate::geom::{line_through, ImageDims, LineSeg2, Mask, Pixel, TriMesh};
use crate::layout::EdgeMap;
use crate::priors::PriorTables;
use crate::retrieval::{ViewDescriptorSet, DESCRIPTOR_DIM, VIEWS_PER_MODEL};
use crate::support::{decode_answer, ObjectAnswers, RelationalQuestion, MAX_INSTANCES};

use super::obj::{mesh_from_obj, write_obj_mesh};
use super::{read_file, to_json, write_atomic, IoError};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: u8,
    pub category: u8,
    pub mask: Mask,
    /// Appearance descriptor of the object crop, for retrieval.
    pub descriptor: Option<Vec<f64>>,
    /// Candidate yaws supplied with the detection.
    pub orientations: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelAsset {
    pub model_id: u32,
    /// Object category the model depicts, when the library is labelled.
    pub category: Option<u8>,
    pub mesh: TriMesh,
    pub descriptors: ViewDescriptorSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneBundle {
    pub dims: ImageDims,
    pub instances: Vec<Instance>,
    pub edge_map: EdgeMap,
    pub label_map: Option<Vec<u8>>,
    pub lines: Vec<LineSeg2>,
    /// Raw answer codes per instance.
    pub answers: Option<BTreeMap<u8, BTreeMap<RelationalQuestion, Vec<u8>>>>,
    pub models: Vec<ModelAsset>,
    pub priors: PriorTables,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    schema_version: u32,
    width: usize,
    height: usize,
    instances: Vec<InstanceEntry>,
    models: Vec<ModelEntryRecord>,
    masks: String,
    edge_map: String,
    label_map: Option<String>,
    lines: String,
    answers: Option<String>,
    priors: String,
    descriptors: String,
    queries: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceEntry {
    id: u8,
    category: u8,
    /// Index of the instance's row in `queries.bin`.
    query: Option<usize>,
    orientations: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelEntryRecord {
    id: u32,
    mesh: String,
    /// Index of the model's first row in `descriptors.bin`.
    descriptor_offset: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    category: Option<u8>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PriorFile {
    /// `[child][parent] = [below, behind]`.
    support_counts: Vec<Vec<[f64; 2]>>,
    height_mu: Vec<f64>,
    height_sigma: Vec<f64>,
}

impl SceneBundle {
    /// Checks the invariants shared by load and save.
    pub fn validate(&self) -> Result<(), IoError> {
        let scene = Path::new("scene.json");
        if self.instances.len() > MAX_INSTANCES {
            return Err(IoError::invariant(
                scene,
                format!("{} instances, at most {MAX_INSTANCES} allowed", self.instances.len()),
            ));
        }
        let mut seen = [false; MAX_INSTANCES];
        let mut owner: Vec<u16> = vec![0; self.dims.pixel_count()];
        for inst in &self.instances {
            let at = |d: String| IoError::invariant(scene, format!("instance {}: {d}", inst.id));
            if inst.id as usize >= MAX_INSTANCES {
                return Err(at(format!("id must be below {MAX_INSTANCES}")));
            }
            if std::mem::replace(&mut seen[inst.id as usize], true) {
                return Err(at("duplicate id".into()));
            }
            if inst.category as usize >= CATEGORY_COUNT {
                return Err(at(format!("category {} out of range", inst.category)));
            }
            if inst.mask.dims() != self.dims {
                return Err(at(format!(
                    "mask is {}x{}, image is {}x{}",
                    inst.mask.width(),
                    inst.mask.height(),
                    self.dims.width,
                    self.dims.height
                )));
            }
            if let Some(d) = &inst.descriptor {
                if d.len() != DESCRIPTOR_DIM {
                    return Err(at(format!("descriptor length {}", d.len())));
                }
            }
            for (x, y) in inst.mask.iter_set() {
                let o = &mut owner[y * self.dims.width + x];
                if *o != 0 {
                    return Err(at(format!("mask overlaps instance {} at ({x}, {y})", *o - 1)));
                }
                *o = inst.id as u16 + 1;
            }
        }
        if self.edge_map.dims() != self.dims {
            return Err(IoError::invariant(Path::new("edge_map.png"), "dimensions differ from the image"));
        }
        if let Some(l) = &self.label_map {
            if l.len() != self.dims.pixel_count() {
                return Err(IoError::invariant(Path::new("label_map.png"), "dimensions differ from the image"));
            }
        }
        if let Some(answers) = &self.answers {
            for (id, qs) in answers {
                if !seen.get(*id as usize).copied().unwrap_or(false) {
                    return Err(IoError::invariant(
                        Path::new("answers.json"),
                        format!("answers for unknown instance {id}"),
                    ));
                }
                ObjectAnswers::from_codes(qs)
                    .map_err(|e| IoError::invariant(Path::new("answers.json"), format!("instance {id}: {e}")))?;
            }
        }
        let mut ids: Vec<u32> = self.models.iter().map(|m| m.model_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(IoError::invariant(scene, "duplicate model id"));
        }
        for m in &self.models {
            if m.category.is_some_and(|c| c as usize >= CATEGORY_COUNT) {
                return Err(IoError::invariant(scene, format!("model {} has category {:?}", m.model_id, m.category)));
            }
            m.mesh.validate().map_err(|e| IoError::invariant(Path::new(&mesh_path(m.model_id)), e))?;
        }
        self.priors.validate().map_err(|e| IoError::invariant(Path::new("priors.json"), e))?;
        Ok(())
    }

    pub fn instance(&self, id: u8) -> Option<&Instance> {
        self.instances.iter().find(|i| i.id == id)
    }

    /// Decoded answers per instance.
    pub fn decoded_answers(&self) -> BTreeMap<u8, ObjectAnswers> {
        self.answers
            .iter()
            .flatten()
            .filter_map(|(id, codes)| ObjectAnswers::from_codes(codes).ok().map(|a| (*id, a)))
            .collect()
    }
}

fn mesh_path(id: u32) -> String {
    format!("meshes/model_{id}.obj")
}

fn png_bytes(img: DynamicImage) -> Vec<u8> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png).expect("PNG encoding to memory");
    buf.into_inner()
}

fn f32_bytes(values: impl Iterator<Item = f64>) -> Vec<u8> {
    values.flat_map(|v| (v as f32).to_le_bytes()).collect()
}

fn read_f32(path: &Path, bytes: &[u8]) -> Result<Vec<f64>, IoError> {
    if bytes.len() % 4 != 0 {
        return Err(IoError::schema(path, format!("length {} is not a multiple of 4", bytes.len())));
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect())
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path, bytes: &[u8]) -> Result<T, IoError> {
    serde_json::from_slice(bytes).map_err(|e| IoError::schema(path, e))
}

/// Writes every file of the bundle atomically. Output is a pure function of
/// the bundle, so load followed by save reproduces the files byte for byte.
pub fn save_bundle(bundle: &SceneBundle, dir: &Path) -> Result<(), IoError> {
    bundle.validate()?;
    let (w, h) = (bundle.dims.width, bundle.dims.height);
    let mut ids = ImageBuffer::<Luma<u16>, Vec<u16>>::new(w as u32, h as u32);
    for inst in &bundle.instances {
        for (x, y) in inst.mask.iter_set() {
            ids.put_pixel(x as u32, y as u32, Luma([inst.id as u16 + 1]));
        }
    }
    write_atomic(&dir.join("masks.png"), &png_bytes(DynamicImage::ImageLuma16(ids)))?;
    let edges = ImageBuffer::<Luma<u8>, Vec<u8>>::from_fn(w as u32, h as u32, |x, y| {
        Luma([(bundle.edge_map.get(x as usize, y as usize) * 255.0).round() as u8])
    });
    write_atomic(&dir.join("edge_map.png"), &png_bytes(DynamicImage::ImageLuma8(edges)))?;
    if let Some(l) = &bundle.label_map {
        let img = ImageBuffer::<Luma<u8>, Vec<u8>>::from_raw(w as u32, h as u32, l.clone()).expect("validated size");
        write_atomic(&dir.join("label_map.png"), &png_bytes(DynamicImage::ImageLuma8(img)))?;
    }
    let lines: Vec<[[f64; 2]; 2]> = bundle.lines.iter().map(|l| [[l.p0.x, l.p0.y], [l.q0.x, l.q0.y]]).collect();
    write_atomic(&dir.join("lines.json"), &to_json(&lines))?;
    if let Some(a) = &bundle.answers {
        write_atomic(&dir.join("answers.json"), &to_json(a))?;
    }
    let counts = (0..CATEGORY_COUNT)
        .map(|c| {
            (0..CATEGORY_COUNT)
                .map(|p| [0, 1].map(|t| bundle.priors.support_count[(c * CATEGORY_COUNT + p) * 2 + t]))
                .collect()
        })
        .collect();
    let priors = PriorFile {
        support_counts: counts,
        height_mu: bundle.priors.height_mu.clone(),
        height_sigma: bundle.priors.height_sigma.clone(),
    };
    write_atomic(&dir.join("priors.json"), &to_json(&priors))?;

    let mut descriptors = Vec::new();
    let mut models = Vec::new();
    for (k, m) in bundle.models.iter().enumerate() {
        descriptors.extend(f32_bytes(m.descriptors.views().iter().flatten().copied()));
        let mut text = String::new();
        write_obj_mesh(&mut text, &m.mesh, 0);
        write_atomic(&dir.join(mesh_path(m.model_id)), text.as_bytes())?;
        models.push(ModelEntryRecord {
            id: m.model_id,
            mesh: mesh_path(m.model_id),
            descriptor_offset: k * VIEWS_PER_MODEL,
            category: m.category,
        });
    }
    write_atomic(&dir.join("descriptors.bin"), &descriptors)?;

    let mut queries = Vec::new();
    let mut row = 0;
    let instances = bundle
        .instances
        .iter()
        .map(|i| {
            let query = i.descriptor.as_ref().map(|d| {
                queries.extend(f32_bytes(d.iter().copied()));
                row += 1;
                row - 1
            });
            InstanceEntry { id: i.id, category: i.category, query, orientations: i.orientations.clone() }
        })
        .collect();
    let has_queries = bundle.instances.iter().any(|i| i.descriptor.is_some());
    if has_queries {
        write_atomic(&dir.join("queries.bin"), &queries)?;
    }
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        width: w,
        height: h,
        instances,
        models,
        masks: "masks.png".into(),
        edge_map: "edge_map.png".into(),
        label_map: bundle.label_map.as_ref().map(|_| "label_map.png".into()),
        lines: "lines.json".into(),
        answers: bundle.answers.as_ref().map(|_| "answers.json".into()),
        priors: "priors.json".into(),
        descriptors: "descriptors.bin".into(),
        queries: has_queries.then(|| "queries.bin".into()),
    };
    write_atomic(&dir.join("scene.json"), &to_json(&manifest))
}

fn load_gray8(path: &Path, w: usize, h: usize) -> Result<Vec<u8>, IoError> {
    let img = image::load_from_memory_with_format(&read_file(path)?, ImageFormat::Png)
        .map_err(|e| IoError::schema(path, e))?;
    let DynamicImage::ImageLuma8(buf) = img else {
        return Err(IoError::schema(path, "expected 8-bit grayscale"));
    };
    if (buf.width() as usize, buf.height() as usize) != (w, h) {
        return Err(IoError::invariant(path, format!("image is {}x{}, expected {w}x{h}", buf.width(), buf.height())));
    }
    Ok(buf.into_raw())
}

/// Loads and validates a bundle directory. Every error names the file at
/// fault.
pub fn load_bundle(dir: &Path) -> Result<SceneBundle, IoError> {
    if !dir.is_dir() {
        return Err(IoError::MissingFile { path: dir.to_path_buf() });
    }
    let scene_path = dir.join("scene.json");
    let m: Manifest = parse_json(&scene_path, &read_file(&scene_path)?)?;
    if m.schema_version != SCHEMA_VERSION {
        return Err(IoError::schema(
            &scene_path,
            format!("schema_version {}, expected {SCHEMA_VERSION}", m.schema_version),
        ));
    }
    if m.instances.len() > MAX_INSTANCES {
        return Err(IoError::invariant(
            &scene_path,
            format!("{} instances, at most {MAX_INSTANCES} allowed", m.instances.len()),
        ));
    }
    let (w, h) = (m.width, m.height);
    if w == 0 || h == 0 {
        return Err(IoError::schema(&scene_path, "image dimensions must be positive"));
    }

    let masks_path = dir.join(&m.masks);
    let img = image::load_from_memory_with_format(&read_file(&masks_path)?, ImageFormat::Png)
        .map_err(|e| IoError::schema(&masks_path, e))?;
    let DynamicImage::ImageLuma16(ids) = img else {
        return Err(IoError::schema(&masks_path, "expected 16-bit grayscale"));
    };
    if (ids.width() as usize, ids.height() as usize) != (w, h) {
        return Err(IoError::invariant(
            &masks_path,
            format!("image is {}x{}, expected {w}x{h}", ids.width(), ids.height()),
        ));
    }
    let known: BTreeMap<u16, usize> = m.instances.iter().enumerate().map(|(k, i)| (i.id as u16 + 1, k)).collect();
    let mut masks = vec![Mask::new(w, h); m.instances.len()];
    for (x, y, p) in ids.enumerate_pixels() {
        let v = p.0[0];
        if v == 0 {
            continue;
        }
        let Some(&k) = known.get(&v) else {
            return Err(IoError::invariant(
                &masks_path,
                format!("pixel ({x}, {y}) has id {} not listed in scene.json", v - 1),
            ));
        };
        masks[k].set(x as usize, y as usize, true);
    }

    let edge_path = dir.join(&m.edge_map);
    let edge = load_gray8(&edge_path, w, h)?;
    let edge_map = EdgeMap::new(w, h, edge.iter().map(|&v| v as f64 / 255.0).collect())
        .map_err(|e| IoError::invariant(&edge_path, e))?;
    let label_map = m.label_map.as_ref().map(|p| load_gray8(&dir.join(p), w, h)).transpose()?;

    let lines_path = dir.join(&m.lines);
    let raw: Vec<[[f64; 2]; 2]> = parse_json(&lines_path, &read_file(&lines_path)?)?;
    let lines = raw
        .iter()
        .enumerate()
        .map(|(k, [a, b])| {
            line_through(Pixel::new(a[0], a[1]), Pixel::new(b[0], b[1]))
                .map_err(|e| IoError::invariant(&lines_path, format!("segment {k}: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let answers = match &m.answers {
        Some(p) => {
            let path = dir.join(p);
            let a: BTreeMap<u8, BTreeMap<RelationalQuestion, Vec<u8>>> = parse_json(&path, &read_file(&path)?)?;
            for (id, qs) in &a {
                for code in qs.values().flatten() {
                    decode_answer(*code).map_err(|e| IoError::invariant(&path, format!("instance {id}: {e}")))?;
                }
            }
            Some(a)
        }
        None => None,
    };

    let priors_path = dir.join(&m.priors);
    let pf: PriorFile = parse_json(&priors_path, &read_file(&priors_path)?)?;
    if pf.support_counts.len() != CATEGORY_COUNT || pf.support_counts.iter().any(|r| r.len() != CATEGORY_COUNT) {
        return Err(IoError::schema(&priors_path, "support_counts must be 40 x 40 x 2"));
    }
    let counts: Vec<f64> = pf.support_counts.iter().flatten().flatten().copied().collect();
    let priors =
        PriorTables::new(counts, pf.height_mu, pf.height_sigma).map_err(|e| IoError::invariant(&priors_path, e))?;

    let desc_path = dir.join(&m.descriptors);
    let desc = read_f32(&desc_path, &read_file(&desc_path)?)?;
    let rows = desc.len() / DESCRIPTOR_DIM;
    let mut models = Vec::with_capacity(m.models.len());
    for rec in &m.models {
        let mesh_file = dir.join(&rec.mesh);
        let text = String::from_utf8(read_file(&mesh_file)?).map_err(|e| IoError::schema(&mesh_file, e))?;
        let mesh = mesh_from_obj(&text).map_err(|e| IoError::schema(&mesh_file, e))?;
        if rec.descriptor_offset + VIEWS_PER_MODEL > rows {
            return Err(IoError::invariant(
                &desc_path,
                format!("model {} rows {}.. exceed the file", rec.id, rec.descriptor_offset),
            ));
        }
        let views = (0..VIEWS_PER_MODEL)
            .map(|v| {
                let r = rec.descriptor_offset + v;
                desc[r * DESCRIPTOR_DIM..(r + 1) * DESCRIPTOR_DIM].to_vec()
            })
            .collect();
        let descriptors = ViewDescriptorSet::new(rec.id, views).map_err(|e| IoError::invariant(&desc_path, e))?;
        models.push(ModelAsset { model_id: rec.id, category: rec.category, mesh, descriptors });
    }

    let queries = match &m.queries {
        Some(p) => {
            let path = dir.join(p);
            Some((path.clone(), read_f32(&path, &read_file(&path)?)?))
        }
        None => None,
    };
    let mut instances = Vec::with_capacity(m.instances.len());
    for (e, mask) in m.instances.iter().zip(masks) {
        let descriptor = match (e.query, &queries) {
            (None, _) => None,
            (Some(_), None) => {
                return Err(IoError::invariant(
                    &scene_path,
                    format!("instance {}: query row without queries file", e.id),
                ))
            }
            (Some(r), Some((path, q))) => {
                let row = q
                    .get(r * DESCRIPTOR_DIM..(r + 1) * DESCRIPTOR_DIM)
                    .ok_or_else(|| IoError::invariant(path, format!("instance {}: row {r} missing", e.id)))?;
                Some(row.to_vec())
            }
        };
        instances.push(Instance {
            id: e.id,
            category: e.category,
            mask,
            descriptor,
            orientations: e.orientations.clone(),
        });
    }
    let bundle =
        SceneBundle { dims: ImageDims::new(w, h), instances, edge_map, label_map, lines, answers, models, priors };
    bundle.validate().map_err(|e| match e {
        IoError::InvariantViolation { path, detail } => IoError::InvariantViolation { path: dir.join(path), detail },
        other => other,
    })?;
    Ok(bundle)
}
