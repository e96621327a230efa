//! Minimal Wavefront OBJ: `v`, `f` and `g` records.

use std::fmt::Write;

use crate::geom::{Point3, TriMesh};

/// Appends a mesh as `v` and triangular `f` records; `base` is the number of
/// vertices already written.
pub fn write_obj_mesh(out: &mut String, mesh: &TriMesh, base: usize) {
    for v in &mesh.vertices {
        writeln!(out, "v {} {} {}", v.x, v.y, v.z).unwrap();
    }
    for t in &mesh.triangles {
        writeln!(out, "f {} {} {}", base + t[0] as usize + 1, base + t[1] as usize + 1, base + t[2] as usize + 1)
            .unwrap();
    }
}

/// A named group of faces; indices are zero-based into the file's vertices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObjGroup {
    pub name: String,
    pub faces: Vec<Vec<usize>>,
}

/// Parses vertices and polygon faces. Faces before any `g` land in a group
/// named `default`. Texture and normal indices (`1/2/3`) are ignored.
pub fn parse_obj(text: &str) -> Result<(Vec<Point3>, Vec<ObjGroup>), String> {
    let mut verts = Vec::new();
    let mut groups: Vec<ObjGroup> = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        let err = |m: &str| format!("line {}: {m}", no + 1);
        match it.next() {
            Some("v") => {
                let c: Vec<f64> =
                    it.take(3).map(|s| s.parse::<f64>()).collect::<Result<_, _>>().map_err(|_| err("bad vertex"))?;
                if c.len() != 3 {
                    return Err(err("vertex needs 3 coordinates"));
                }
                verts.push(Point3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = it
                    .map(|s| s.split('/').next().unwrap_or("").parse::<usize>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| err("bad face index"))?;
                if idx.len() < 3 || idx.iter().any(|&i| i == 0 || i > verts.len()) {
                    return Err(err("face index out of range"));
                }
                if groups.is_empty() {
                    groups.push(ObjGroup { name: "default".into(), faces: Vec::new() });
                }
                groups.last_mut().unwrap().faces.push(idx.iter().map(|i| i - 1).collect());
            }
            Some("g") => groups.push(ObjGroup { name: it.collect::<Vec<_>>().join(" "), faces: Vec::new() }),
            _ => {}
        }
    }
    Ok((verts, groups))
}

/// Triangulates every polygon as a fan.
pub(crate) fn mesh_from_obj(text: &str) -> Result<TriMesh, String> {
    let (vertices, groups) = parse_obj(text)?;
    let mut triangles = Vec::new();
    for g in groups {
        for f in g.faces {
            for k in 1..f.len() - 1 {
                triangles.push([f[0] as u32, f[k] as u32, f[k + 1] as u32]);
            }
        }
    }
    Ok(TriMesh { vertices, triangles })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mesh_text_round_trip() {
        let m = TriMesh::cuboid(0.1 + 0.2, 1.0 / 3.0, 2.5);
        let mut s = String::new();
        write_obj_mesh(&mut s, &m, 0);
        assert_eq!(mesh_from_obj(&s).unwrap(), m);
    }

    #[test]
    fn quads_and_slashes() {
        let (v, g) = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\ng room\nf 1/1 2/2 3/3 4/4\n").unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(g[0].name, "room");
        assert_eq!(g[0].faces[0], vec![0, 1, 2, 3]);
        assert!(parse_obj("v 0 0 0\nf 1 2 3\n").is_err());
    }
}
