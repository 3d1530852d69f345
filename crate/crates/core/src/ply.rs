//! Binary little-endian PLY in the layout of the reference Gaussian
//! Splatting exporter.
//!
//! Canonical vertex layout, every property `float` (f32 LE):
//!
//! | fields                          | meaning                                  |
//! |---------------------------------|------------------------------------------|
//! | `x y z`                         | position                                 |
//! | `nx ny nz`                      | unused normals, written as 0             |
//! | `f_dc_0 f_dc_1 f_dc_2`          | degree-0 SH coefficient per channel      |
//! | `f_rest_0 .. f_rest_{3(K-1)-1}` | higher SH terms, channel-major           |
//! | `opacity`                       | opacity logit                            |
//! | `scale_0 scale_1 scale_2`       | log standard deviations                  |
//! | `rot_0 rot_1 rot_2 rot_3`       | quaternion `(w, x, y, z)`                |
//!
//! `K = (degree + 1)^2`; `f_rest_{c*(K-1) + k-1}` holds coefficient `k` of
//! channel `c`. The reader accepts any property order, optional normals
//! and `double` properties; the writer always emits the table above.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scene::{normalize_quat, GaussianScene};
use crate::sh;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scalar {
    F32,
    F64,
}

impl Scalar {
    fn size(self) -> usize {
        match self {
            Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }
}

struct Header {
    count: usize,
    properties: Vec<(String, Scalar)>,
}

fn parse_header<R: BufRead>(reader: &mut R) -> Result<Header> {
    let mut line = String::new();
    let mut next_line = |reader: &mut R| -> Result<String> {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Err(Error::Format("unexpected end of PLY header".into()));
        }
        Ok(line.trim_end_matches(['\n', '\r']).to_string())
    };
    if next_line(reader)? != "ply" {
        return Err(Error::Format("missing 'ply' magic".into()));
    }
    let mut count = None;
    let mut properties = Vec::new();
    let mut in_vertex = false;
    let mut saw_format = false;
    loop {
        let l = next_line(reader)?;
        let tokens: Vec<&str> = l.split_whitespace().collect();
        match tokens.as_slice() {
            ["end_header"] => break,
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["format", "binary_little_endian", _] => saw_format = true,
            ["format", other, ..] => {
                return Err(Error::Format(format!("unsupported PLY format '{other}'")))
            }
            ["element", "vertex", n] => {
                if count.is_some() {
                    return Err(Error::Format("duplicate vertex element".into()));
                }
                count = Some(
                    n.parse::<usize>()
                        .map_err(|_| Error::Format(format!("bad vertex count '{n}'")))?,
                );
                in_vertex = true;
            }
            ["element", name, _] => {
                if count.is_none() {
                    return Err(Error::Format(format!(
                        "element '{name}' precedes the vertex element"
                    )));
                }
                in_vertex = false;
            }
            ["property", ty, name] if in_vertex => {
                let scalar = match *ty {
                    "float" | "float32" => Scalar::F32,
                    "double" | "float64" => Scalar::F64,
                    other => {
                        return Err(Error::Format(format!(
                            "property '{name}' has unsupported type '{other}'"
                        )))
                    }
                };
                properties.push((name.to_string(), scalar));
            }
            ["property", ..] if !in_vertex => {}
            _ => return Err(Error::Format(format!("unrecognized header line '{l}'"))),
        }
    }
    if !saw_format {
        return Err(Error::Format("missing format line".into()));
    }
    let count = count.ok_or_else(|| Error::Format("missing vertex element".into()))?;
    Ok(Header { count, properties })
}

/// Reads a scene. Rotations are renormalized on load unless already
/// unit-norm within [`crate::scene::QUAT_NORM_TOLERANCE`].
pub fn load_ply(path: impl AsRef<Path>) -> Result<GaussianScene> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io_at(path, e))?;
    read_ply(&mut BufReader::new(file))
}

pub fn read_ply<R: BufRead>(reader: &mut R) -> Result<GaussianScene> {
    let header = parse_header(reader)?;
    let slot: HashMap<&str, usize> = header
        .properties
        .iter()
        .enumerate()
        .map(|(i, (name, _))| (name.as_str(), i))
        .collect();
    let require = |name: &str| -> Result<usize> {
        slot.get(name)
            .copied()
            .ok_or_else(|| Error::Format(format!("missing property '{name}'")))
    };

    let n_rest = header
        .properties
        .iter()
        .filter(|(n, _)| n.starts_with("f_rest_"))
        .count();
    if n_rest % 3 != 0 {
        return Err(Error::Format(format!("{n_rest} f_rest properties is not a multiple of 3")));
    }
    let degree = sh::degree_for_coeff_count(n_rest / 3 + 1).ok_or_else(|| {
        Error::Format(format!("{n_rest} f_rest properties match no SH degree"))
    })?;
    let k = sh::coeff_count(degree);

    let pos = [require("x")?, require("y")?, require("z")?];
    let dc = [require("f_dc_0")?, require("f_dc_1")?, require("f_dc_2")?];
    let rest = (0..n_rest)
        .map(|j| require(&format!("f_rest_{j}")))
        .collect::<Result<Vec<_>>>()?;
    let opacity = require("opacity")?;
    let scale = [require("scale_0")?, require("scale_1")?, require("scale_2")?];
    let rot = [
        require("rot_0")?,
        require("rot_1")?,
        require("rot_2")?,
        require("rot_3")?,
    ];

    let stride: usize = header.properties.iter().map(|(_, s)| s.size()).sum();
    let mut offsets = Vec::with_capacity(header.properties.len());
    let mut acc = 0;
    for (_, s) in &header.properties {
        offsets.push(acc);
        acc += s.size();
    }

    let mut payload = vec![0u8; stride * header.count];
    reader
        .read_exact(&mut payload)
        .map_err(|_| Error::Format("PLY payload shorter than the vertex count implies".into()))?;

    let mut scene_pos = Vec::with_capacity(header.count);
    let mut scene_rot = Vec::with_capacity(header.count);
    let mut scene_scale = Vec::with_capacity(header.count);
    let mut scene_opacity = Vec::with_capacity(header.count);
    let mut scene_sh = Vec::with_capacity(header.count * k * 3);

    for (index, record) in payload.chunks_exact(stride.max(1)).enumerate().take(header.count) {
        let get = |p: usize| -> f32 {
            let o = offsets[p];
            match header.properties[p].1 {
                Scalar::F32 => f32::from_le_bytes(record[o..o + 4].try_into().unwrap()),
                Scalar::F64 => f64::from_le_bytes(record[o..o + 8].try_into().unwrap()) as f32,
            }
        };
        let mut values = Vec::with_capacity(14 + k * 3);
        scene_pos.push(pos.map(get));
        scene_rot.push(rot.map(get));
        scene_scale.push(scale.map(get));
        scene_opacity.push(get(opacity));
        for t in 0..k {
            for c in 0..3 {
                let v = if t == 0 {
                    get(dc[c])
                } else {
                    get(rest[c * (k - 1) + t - 1])
                };
                scene_sh.push(v);
            }
        }
        values.extend_from_slice(scene_pos.last().unwrap());
        values.extend_from_slice(scene_rot.last().unwrap());
        values.extend_from_slice(scene_scale.last().unwrap());
        values.push(get(opacity));
        values.extend_from_slice(&scene_sh[scene_sh.len() - k * 3..]);
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data {
                index,
                message: format!("non-finite value {bad}"),
            });
        }
        let q = normalize_quat(*scene_rot.last().unwrap()).ok_or_else(|| Error::Data {
            index,
            message: "zero-norm rotation".into(),
        })?;
        *scene_rot.last_mut().unwrap() = q;
    }

    GaussianScene::from_parts(
        degree,
        scene_pos,
        scene_rot,
        scene_scale,
        scene_opacity,
        scene_sh,
    )
}

/// Property names of the canonical layout for a given SH degree.
pub fn canonical_properties(degree: usize) -> Vec<String> {
    let k = sh::coeff_count(degree);
    let mut names: Vec<String> = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    names.extend((0..3 * (k - 1)).map(|j| format!("f_rest_{j}")));
    names.push("opacity".into());
    names.extend((0..3).map(|j| format!("scale_{j}")));
    names.extend((0..4).map(|j| format!("rot_{j}")));
    names
}

pub fn write_ply<W: Write>(scene: &GaussianScene, out: &mut W) -> Result<()> {
    let degree = scene.sh_degree();
    let k = sh::coeff_count(degree);
    let mut header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n",
        scene.len()
    );
    for name in canonical_properties(degree) {
        header.push_str(&format!("property float {name}\n"));
    }
    header.push_str("end_header\n");

    let floats_per_vertex = 14 + 3 * k;
    let mut buf = Vec::with_capacity(header.len() + scene.len() * floats_per_vertex * 4);
    buf.extend_from_slice(header.as_bytes());
    let mut put = |v: f32| buf.extend_from_slice(&v.to_le_bytes());
    for i in 0..scene.len() {
        scene.positions[i].iter().for_each(|&v| put(v));
        (0..3).for_each(|_| put(0.0));
        let coeffs = scene.sh_of(i);
        (0..3).for_each(|c| put(coeffs[c]));
        for c in 0..3 {
            for t in 1..k {
                put(coeffs[t * 3 + c]);
            }
        }
        put(scene.opacity_logits[i]);
        scene.log_scales[i].iter().for_each(|&v| put(v));
        scene.rotations[i].iter().for_each(|&v| put(v));
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn save_ply(scene: &GaussianScene, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_ply(scene, &mut buf)?;
    fs::write(path, buf).map_err(|e| Error::io_at(path, e))
}
