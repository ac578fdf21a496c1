//! Binary little-endian PLY storage.
//!
//! One vertex per primitive, visible primitives first. Properties, in order:
//! `x y z`, `rot_0..rot_3` (w, x, y, z), `scale_0..scale_2` (log scales),
//! `opacity` (logit), `f_dc_0..f_dc_2`, `f_rest_*` (channel-major, as splat
//! viewers expect) and `modality` (`uchar`, 0 = visible, 1 = infrared).
//! Float properties use `float` for `f32` scenes and `double` for `f64`.

use std::path::Path;

use super::{GaussianPrimitive, Modality, MultimodalScene};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::geometry::{Quaternion, MAX_SH_DEGREE};
use crate::scalar::Scalar;

fn property_names(sh_degree: usize) -> Vec<String> {
    let mut names: Vec<String> = ["x", "y", "z", "rot_0", "rot_1", "rot_2", "rot_3", "scale_0", "scale_1", "scale_2", "opacity"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    names.extend((0..3).map(|i| format!("f_dc_{i}")));
    let rest = 3 * ((sh_degree + 1) * (sh_degree + 1) - 1);
    names.extend((0..rest).map(|i| format!("f_rest_{i}")));
    names
}

pub fn scene_to_ply_bytes<S: Scalar>(scene: &MultimodalScene<S>) -> Result<Vec<u8>> {
    scene.validate()?;
    let names = property_names(scene.sh_degree);
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("comment sh_degree {}\n", scene.sh_degree));
    header.push_str(&format!("element vertex {}\n", scene.len()));
    for n in &names {
        header.push_str(&format!("property {} {n}\n", S::PLY_TYPE));
    }
    header.push_str("property uchar modality\nend_header\n");

    let basis = (scene.sh_degree + 1) * (scene.sh_degree + 1);
    let mut out = header.into_bytes();
    out.reserve(scene.len() * (names.len() * S::BYTES + 1));
    for p in scene.iter_concat() {
        for v in p.mean.iter().chain(&p.rotation.to_array()).chain(&p.log_scale) {
            v.write_le(&mut out);
        }
        p.opacity_logit.write_le(&mut out);
        for ch in 0..3 {
            p.sh[ch].write_le(&mut out);
        }
        for ch in 0..3 {
            for k in 1..basis {
                p.sh[k * 3 + ch].write_le(&mut out);
            }
        }
        out.push(p.modality.as_byte());
    }
    Ok(out)
}

pub fn save_scene<S: Scalar>(scene: &MultimodalScene<S>, path: &Path) -> Result<()> {
    write_atomic(path, &scene_to_ply_bytes(scene)?)
}

pub fn load_scene<S: Scalar>(path: &Path) -> Result<MultimodalScene<S>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    scene_from_ply_bytes(&bytes)
}

/// Loads and additionally requires the given SH degree.
pub fn load_scene_expecting<S: Scalar>(path: &Path, sh_degree: usize) -> Result<MultimodalScene<S>> {
    let scene = load_scene::<S>(path)?;
    if scene.sh_degree != sh_degree {
        return Err(Error::Shape(format!(
            "scene {} has SH degree {} (d_c = {}), expected degree {sh_degree}",
            path.display(),
            scene.sh_degree,
            scene.sh_dim()
        )));
    }
    Ok(scene)
}

#[derive(Clone, Copy, PartialEq)]
enum PropType {
    F32,
    F64,
    U8,
}

impl PropType {
    fn size(self) -> usize {
        match self {
            PropType::F32 => 4,
            PropType::F64 => 8,
            PropType::U8 => 1,
        }
    }
}

fn parse_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        message: message.into(),
    }
}

pub fn scene_from_ply_bytes<S: Scalar>(bytes: &[u8]) -> Result<MultimodalScene<S>> {
    let mut offset = 0usize;
    let next_line = |offset: &mut usize| -> Result<(usize, String)> {
        let start = *offset;
        let rel = bytes[start..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| parse_err(start, "unterminated header"))?;
        *offset = start + rel + 1;
        let line = std::str::from_utf8(&bytes[start..start + rel])
            .map_err(|_| parse_err(start, "header is not valid UTF-8"))?;
        Ok((start, line.trim_end_matches('\r').to_string()))
    };

    let (at, magic) = next_line(&mut offset)?;
    if magic != "ply" {
        return Err(parse_err(at, "missing 'ply' magic"));
    }
    let mut count: Option<usize> = None;
    let mut props: Vec<(String, PropType)> = Vec::new();
    let mut format_ok = false;
    loop {
        let (at, line) = next_line(&mut offset)?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["end_header"] => break,
            ["format", "binary_little_endian", "1.0"] => format_ok = true,
            ["format", other, ..] => return Err(parse_err(at, format!("unsupported format '{other}'"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", "vertex", n] => {
                count = Some(n.parse().map_err(|_| parse_err(at, format!("bad vertex count '{n}'")))?);
            }
            ["element", name, _] => return Err(parse_err(at, format!("unexpected element '{name}'"))),
            ["property", ty, name] => {
                let t = match *ty {
                    "float" | "float32" => PropType::F32,
                    "double" | "float64" => PropType::F64,
                    "uchar" | "uint8" => PropType::U8,
                    other => return Err(parse_err(at, format!("unsupported property type '{other}'"))),
                };
                props.push((name.to_string(), t));
            }
            _ => return Err(parse_err(at, format!("unrecognised header line '{line}'"))),
        }
    }
    if !format_ok {
        return Err(parse_err(0, "missing binary_little_endian format line"));
    }
    let count = count.ok_or_else(|| parse_err(0, "missing vertex element"))?;

    let n_rest = props.iter().filter(|(n, _)| n.starts_with("f_rest_")).count();
    let basis = n_rest / 3 + 1;
    let sh_degree = (0..=MAX_SH_DEGREE)
        .find(|d| (d + 1) * (d + 1) == basis && n_rest % 3 == 0)
        .ok_or_else(|| Error::Shape(format!("{n_rest} f_rest properties do not match any SH degree")))?;

    let expected = property_names(sh_degree);
    let mut slots: Vec<(usize, PropType)> = Vec::with_capacity(expected.len());
    let mut rec_offsets = Vec::with_capacity(props.len());
    let mut record = 0usize;
    for (_, t) in &props {
        rec_offsets.push(record);
        record += t.size();
    }
    for name in &expected {
        let i = props
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| parse_err(0, format!("missing property '{name}'")))?;
        if props[i].1 == PropType::U8 {
            return Err(parse_err(0, format!("property '{name}' must be floating point")));
        }
        slots.push((rec_offsets[i], props[i].1));
    }
    let modality_slot = props
        .iter()
        .position(|(n, t)| n == "modality" && *t == PropType::U8)
        .map(|i| rec_offsets[i])
        .ok_or_else(|| parse_err(0, "missing 'uchar modality' property"))?;

    let body = offset;
    let needed = count
        .checked_mul(record)
        .ok_or_else(|| parse_err(body, "vertex count overflows"))?;
    if bytes.len() < body + needed {
        let complete = (bytes.len() - body) / record.max(1);
        return Err(parse_err(
            body + complete * record,
            format!("file truncated inside vertex record {complete} of {count}"),
        ));
    }

    let read = |at: usize, t: PropType| -> S {
        match t {
            PropType::F32 => S::lit(f32::read_le(&bytes[at..]) as f64),
            PropType::F64 => S::lit(f64::read_le(&bytes[at..])),
            PropType::U8 => S::lit(bytes[at] as f64),
        }
    };
    let read_native = |at: usize, t: PropType| -> S {
        if t.size() == S::BYTES {
            S::read_le(&bytes[at..at + S::BYTES])
        } else {
            read(at, t)
        }
    };

    let mut prims = Vec::with_capacity(count);
    for v in 0..count {
        let base = body + v * record;
        let vals: Vec<S> = slots.iter().map(|&(o, t)| read_native(base + o, t)).collect();
        let mbyte = bytes[base + modality_slot];
        let modality = Modality::from_byte(mbyte).ok_or_else(|| {
            Error::Validation(format!("vertex {v} has unknown modality value {mbyte}"))
        })?;
        let mut sh = vec![S::zero(); 3 * basis];
        for ch in 0..3 {
            sh[ch] = vals[11 + ch];
            for k in 1..basis {
                sh[k * 3 + ch] = vals[14 + ch * (basis - 1) + (k - 1)];
            }
        }
        prims.push(GaussianPrimitive {
            mean: [vals[0], vals[1], vals[2]],
            rotation: Quaternion::new(vals[3], vals[4], vals[5], vals[6]),
            log_scale: [vals[7], vals[8], vals[9]],
            opacity_logit: vals[10],
            sh,
            modality,
        });
    }
    MultimodalScene::from_concatenated(prims, sh_degree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_scene(n: usize, seed: u64) -> MultimodalScene<f32> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut s = MultimodalScene::new(1);
        for i in 0..n {
            let modality = if i < n / 2 { Modality::Visible } else { Modality::Infrared };
            let p = GaussianPrimitive {
                mean: std::array::from_fn(|_| rng.gen_range(-1.0..1.0)),
                rotation: Quaternion::new(rng.gen(), rng.gen(), rng.gen(), rng.gen()),
                log_scale: std::array::from_fn(|_| rng.gen_range(-4.0..0.0)),
                opacity_logit: rng.gen_range(-3.0..3.0),
                sh: (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                modality,
            };
            s.modality_mut(modality).push(p);
        }
        s
    }

    #[test]
    fn roundtrip_random_scene() {
        let s = random_scene(100, 3);
        let bytes = scene_to_ply_bytes(&s).unwrap();
        let back: MultimodalScene<f32> = scene_from_ply_bytes(&bytes).unwrap();
        assert_eq!(back, s);
        assert_eq!(scene_to_ply_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn roundtrip_f64_is_exact() {
        let s32 = random_scene(10, 4);
        let mut s = MultimodalScene::<f64>::new(1);
        for p in s32.iter_concat() {
            s.modality_mut(p.modality).push(GaussianPrimitive {
                mean: p.mean.map(|v| v as f64 + 1e-12),
                rotation: Quaternion::from_array(p.rotation.to_array().map(|v| v as f64)),
                log_scale: p.log_scale.map(|v| v as f64),
                opacity_logit: p.opacity_logit as f64 / 3.0,
                sh: p.sh.iter().map(|&v| v as f64 * 0.1).collect(),
                modality: p.modality,
            });
        }
        let back: MultimodalScene<f64> = scene_from_ply_bytes(&scene_to_ply_bytes(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn truncated_file_is_parse_error() {
        let bytes = scene_to_ply_bytes(&random_scene(20, 5)).unwrap();
        let cut = &bytes[..bytes.len() - 7];
        match scene_from_ply_bytes::<f32>(cut) {
            Err(Error::Parse { offset, .. }) => assert!(offset < bytes.len()),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_modality_is_validation_error() {
        let mut bytes = scene_to_ply_bytes(&random_scene(4, 6)).unwrap();
        let last = bytes.len() - 1;
        bytes[last] = 7;
        assert!(matches!(scene_from_ply_bytes::<f32>(&bytes), Err(Error::Validation(_))));
    }

    #[test]
    fn mismatched_degree_is_shape_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.ply");
        save_scene(&random_scene(4, 8), &path).unwrap();
        assert!(load_scene_expecting::<f32>(&path, 1).is_ok());
        assert!(matches!(load_scene_expecting::<f32>(&path, 3), Err(Error::Shape(_))));
    }

    #[test]
    fn header_garbage_is_parse_error() {
        assert!(matches!(
            scene_from_ply_bytes::<f32>(b"ply\nformat ascii 1.0\nend_header\n"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(scene_from_ply_bytes::<f32>(b"plx\n"), Err(Error::Parse { offset: 0, .. })));
    }
}
