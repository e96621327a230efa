//! Built-in furniture made of boxes, plus the support rules the generator
//! draws from.

use serde::{Deserialize, Serialize};

use crate::categories::*;
use crate::geom::{Point3, TriMesh};
use crate::priors::{PriorTables, SupportType};

/// How an object of a category rests in the room.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mount {
    Floor,
    /// On top of another object.
    OnTop,
    Wall,
}

/// One library model: axis-aligned parts, centered in `xy`, resting on
/// `z = 0`, front facing `-y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryModel {
    pub model_id: u32,
    pub category: u8,
    pub parts: Vec<(Point3, Point3)>,
}

impl LibraryModel {
    pub fn mesh(&self) -> TriMesh {
        let mut m = TriMesh { vertices: Vec::new(), triangles: Vec::new() };
        for (lo, hi) in &self.parts {
            m.merge(&TriMesh::cuboid_at(*lo, *hi));
        }
        m
    }

    pub fn size(&self) -> Point3 {
        let (lo, hi) = self.bounds();
        hi - lo
    }

    pub fn bounds(&self) -> (Point3, Point3) {
        self.parts
            .iter()
            .fold((Point3::repeat(f64::INFINITY), Point3::repeat(f64::NEG_INFINITY)), |(a, b), (lo, hi)| {
                (a.inf(lo), b.sup(hi))
            })
    }

    /// The twelve edges of every part.
    pub fn edges(&self) -> Vec<(Point3, Point3)> {
        let mut out = Vec::with_capacity(12 * self.parts.len());
        for (lo, hi) in &self.parts {
            let c = |i: usize| {
                Point3::new(
                    if i & 1 == 0 { lo.x } else { hi.x },
                    if i & 2 == 0 { lo.y } else { hi.y },
                    if i & 4 == 0 { lo.z } else { hi.z },
                )
            };
            for i in 0..8usize {
                for bit in [1, 2, 4] {
                    if i & bit == 0 {
                        out.push((c(i), c(i | bit)));
                    }
                }
            }
        }
        out
    }
}

fn slab(w: f64, d: f64, z0: f64, z1: f64) -> (Point3, Point3) {
    (Point3::new(-w / 2.0, -d / 2.0, z0), Point3::new(w / 2.0, d / 2.0, z1))
}

fn part(x0: f64, y0: f64, z0: f64, x1: f64, y1: f64, z1: f64) -> (Point3, Point3) {
    (Point3::new(x0, y0, z0), Point3::new(x1, y1, z1))
}

fn legged(w: f64, d: f64, h: f64, top: f64, leg: f64) -> Vec<(Point3, Point3)> {
    let (x, y) = (w / 2.0, d / 2.0);
    let mut v = vec![slab(w, d, h - top, h)];
    for (sx, sy) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)] {
        let cx = sx * (x - leg / 2.0);
        let cy = sy * (y - leg / 2.0);
        v.push(part(cx - leg / 2.0, cy - leg / 2.0, 0.0, cx + leg / 2.0, cy + leg / 2.0, h - top));
    }
    v
}

fn chair(w: f64, seat: f64, back: f64) -> Vec<(Point3, Point3)> {
    let mut v = legged(w, w, seat, 0.05, 0.04);
    v.push(part(-w / 2.0, w / 2.0 - 0.05, seat, w / 2.0, w / 2.0, seat + back));
    v
}

fn lamp(base: f64, pole: f64, shade: f64, shade_h: f64) -> Vec<(Point3, Point3)> {
    vec![
        slab(base, base, 0.0, 0.03),
        slab(0.03, 0.03, 0.03, 0.03 + pole),
        slab(shade, shade, 0.03 + pole, 0.03 + pole + shade_h),
    ]
}

fn sofa(w: f64, d: f64) -> Vec<(Point3, Point3)> {
    let (x, y) = (w / 2.0, d / 2.0);
    vec![
        slab(w, d, 0.0, 0.42),
        part(-x, y - 0.2, 0.42, x, y, 0.82),
        part(-x, -y, 0.42, -x + 0.15, y - 0.2, 0.6),
        part(x - 0.15, -y, 0.42, x, y - 0.2, 0.6),
    ]
}

fn bed(w: f64, d: f64, h: f64, headboard: Option<f64>) -> Vec<(Point3, Point3)> {
    let mut v = vec![slab(w, d, 0.0, h)];
    if let Some(hb) = headboard {
        v[0].1.y -= 0.08;
        v.push(part(-w / 2.0, d / 2.0 - 0.08, 0.0, w / 2.0, d / 2.0, hb));
    }
    v
}

fn television(w: f64, h: f64) -> Vec<(Point3, Point3)> {
    vec![slab(0.3, 0.2, 0.0, 0.04), slab(0.05, 0.05, 0.04, 0.12), slab(w, 0.06, 0.12, 0.12 + h)]
}

/// The built-in library; model ids are `10 * category + variant`.
pub fn library() -> Vec<LibraryModel> {
    let entries: Vec<(u8, Vec<Vec<(Point3, Point3)>>)> = vec![
        (CABINET, vec![vec![slab(0.8, 0.45, 0.0, 0.9)], vec![slab(1.0, 0.5, 0.0, 1.2)]]),
        (BED, vec![bed(1.6, 2.0, 0.45, Some(1.0)), bed(1.4, 2.0, 0.5, None)]),
        (CHAIR, vec![chair(0.45, 0.45, 0.45), chair(0.5, 0.42, 0.55)]),
        (SOFA, vec![sofa(1.8, 0.85), sofa(1.5, 0.9)]),
        (TABLE, vec![legged(1.2, 0.7, 0.75, 0.04, 0.06), legged(0.9, 0.9, 0.72, 0.05, 0.07)]),
        (BOOKSHELF, vec![vec![slab(0.8, 0.3, 0.0, 1.8)], vec![slab(1.0, 0.35, 0.0, 1.5)]]),
        (DESK, vec![legged(1.2, 0.6, 0.74, 0.04, 0.05), vec![slab(1.4, 0.7, 0.7, 0.76), slab(0.5, 0.65, 0.0, 0.7)]]),
        (DRESSER, vec![vec![slab(1.0, 0.5, 0.0, 0.8)], vec![slab(1.2, 0.5, 0.0, 0.95)]]),
        (NIGHT_STAND, vec![vec![slab(0.45, 0.4, 0.0, 0.55)], vec![slab(0.5, 0.45, 0.0, 0.6)]]),
        (LAMP, vec![lamp(0.15, 0.35, 0.3, 0.2), lamp(0.18, 0.25, 0.25, 0.25)]),
        (BOX, vec![vec![slab(0.3, 0.3, 0.0, 0.25)], vec![slab(0.4, 0.3, 0.0, 0.3)]]),
        (BOOKS, vec![vec![slab(0.3, 0.22, 0.0, 0.12)], vec![slab(0.25, 0.2, 0.0, 0.2)]]),
        (TELEVISION, vec![television(0.7, 0.45), television(0.8, 0.5)]),
        (PILLOW, vec![vec![slab(0.5, 0.35, 0.0, 0.15)], vec![slab(0.6, 0.4, 0.0, 0.18)]]),
        (PICTURE, vec![vec![slab(0.8, 0.03, 0.0, 0.6)], vec![slab(0.5, 0.03, 0.0, 0.7)]]),
        (WHITEBOARD, vec![vec![slab(1.5, 0.03, 0.0, 1.0)], vec![slab(1.2, 0.03, 0.0, 0.9)]]),
        (MIRROR, vec![vec![slab(0.5, 0.03, 0.0, 0.9)], vec![slab(0.6, 0.03, 0.0, 1.0)]]),
    ];
    entries
        .into_iter()
        .flat_map(|(category, variants)| {
            variants.into_iter().enumerate().map(move |(k, parts)| LibraryModel {
                model_id: 10 * category as u32 + k as u32,
                category,
                parts,
            })
        })
        .collect()
}

pub fn mount(category: u8) -> Mount {
    match category {
        LAMP | BOX | BOOKS | TELEVISION | PILLOW => Mount::OnTop,
        PICTURE | WHITEBOARD | MIRROR => Mount::Wall,
        _ => Mount::Floor,
    }
}

/// Categories that may carry objects on top.
pub fn can_carry(category: u8) -> bool {
    matches!(category, CABINET | BED | SOFA | TABLE | DESK | DRESSER | NIGHT_STAND)
}

/// `(child, parent, type, count)` rules behind the generated priors.
pub fn support_rules() -> Vec<(u8, u8, SupportType, f64)> {
    use SupportType::{Behind, Below};
    let mut r = Vec::new();
    for c in [CABINET, BED, CHAIR, SOFA, TABLE, BOOKSHELF, DESK, DRESSER, NIGHT_STAND] {
        r.push((c, FLOOR, Below, 10.0));
    }
    r.extend([
        (LAMP, NIGHT_STAND, Below, 5.0),
        (LAMP, TABLE, Below, 4.0),
        (LAMP, DESK, Below, 3.0),
        (LAMP, DRESSER, Below, 2.0),
        (BOX, CABINET, Below, 3.0),
        (BOX, TABLE, Below, 3.0),
        (BOX, DESK, Below, 2.0),
        (BOX, FLOOR, Below, 2.0),
        (BOOKS, DESK, Below, 4.0),
        (BOOKS, TABLE, Below, 3.0),
        (BOOKS, CABINET, Below, 1.0),
        (TELEVISION, DRESSER, Below, 3.0),
        (TELEVISION, CABINET, Below, 3.0),
        (TELEVISION, TABLE, Below, 1.0),
        (PILLOW, BED, Below, 6.0),
        (PILLOW, SOFA, Below, 4.0),
        (PICTURE, WALL, Behind, 10.0),
        (WHITEBOARD, WALL, Behind, 10.0),
        (MIRROR, WALL, Behind, 8.0),
        (MIRROR, DRESSER, Behind, 1.0),
    ]);
    r
}

/// Parents an on-top child may be drawn onto, with their rule counts.
pub fn parents_of(child: u8) -> Vec<(u8, f64)> {
    support_rules()
        .into_iter()
        .filter(|r| r.0 == child && r.2 == SupportType::Below && can_carry(r.1))
        .map(|r| (r.1, r.3))
        .collect()
}

/// Priors matching the library: support counts from the rules, height
/// `μ` from the mean model height and `σ` wide enough to cover every
/// variant with room to spare.
pub fn priors(library: &[LibraryModel], room_height: f64) -> PriorTables {
    let mut p = PriorTables::empty();
    for (c, parent, t, n) in support_rules() {
        p.set_count(c, parent, t, n);
    }
    for cat in 0..CATEGORY_COUNT as u8 {
        let hs: Vec<f64> = library.iter().filter(|m| m.category == cat).map(|m| m.size().z / room_height).collect();
        if hs.is_empty() {
            continue;
        }
        let mu = hs.iter().sum::<f64>() / hs.len() as f64;
        let spread = hs.iter().map(|h| (h - mu).abs()).fold(0.0, f64::max);
        p.height_mu[cat as usize] = mu;
        p.height_sigma[cat as usize] = (0.15 * mu).max(spread).max(0.02);
    }
    p
}
