//! Support relations: the question/answer encoding, the prior argmax that
//! picks each object's supporting instance, and the resulting graph.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::categories::{self, CATEGORY_COUNT};
use crate::geom::Mask;
use crate::priors::{PriorTables, SupportType};

pub const MAX_INSTANCES: usize = 60;
pub const QUESTION_BITS: usize = 106;
pub const ANSWER_CODES: u8 = 104;
pub const QUESTIONS_PER_GROUP: u8 = 4;
pub const DEFAULT_DILATION: usize = 5;
pub const SUPPORT_CANDIDATES: usize = 5;

const CATEGORY_BASE: u8 = 60;
const TYPE_BASE: u8 = 100;
const YES_CODE: u8 = 102;
const NO_CODE: u8 = 103;
const QUESTION_BASE: usize = 100;
const GROUP_BASE: usize = 104;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SupportError {
    #[error("{field} = {value} is out of range")]
    OutOfRange { field: &'static str, value: usize },
    #[error("question vector must set exactly one bit per block")]
    MalformedQuestion,
    #[error("support graph has a cycle through instance {0}")]
    CyclicGraph(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionGroup {
    NonRelational,
    Relational,
}

/// The four relational questions asked about each object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationalQuestion {
    ParentInstance = 0,
    ParentCategory = 1,
    SupportType = 2,
    SupportedByLayout = 3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuestionCode {
    pub instance_id: u8,
    pub category: u8,
    pub question_index: u8,
    pub group: QuestionGroup,
}

impl QuestionCode {
    /// One-hot per block: instance, category, question, group.
    pub fn bits(&self) -> u128 {
        let g = match self.group {
            QuestionGroup::NonRelational => 0,
            QuestionGroup::Relational => 1,
        };
        (1u128 << self.instance_id)
            | (1u128 << (CATEGORY_BASE as usize + self.category as usize))
            | (1u128 << (QUESTION_BASE + self.question_index as usize))
            | (1u128 << (GROUP_BASE + g))
    }

    pub fn vector(&self) -> [bool; QUESTION_BITS] {
        let b = self.bits();
        std::array::from_fn(|i| b >> i & 1 == 1)
    }
}

pub fn encode_question(
    instance_id: usize,
    category: usize,
    question_index: usize,
    group: QuestionGroup,
) -> Result<QuestionCode, SupportError> {
    let check = |field, value: usize, max: usize| {
        if value < max {
            Ok(value as u8)
        } else {
            Err(SupportError::OutOfRange { field, value })
        }
    };
    Ok(QuestionCode {
        instance_id: check("instance_id", instance_id, MAX_INSTANCES)?,
        category: check("category", category, CATEGORY_COUNT)?,
        question_index: check("question_index", question_index, QUESTIONS_PER_GROUP as usize)?,
        group,
    })
}

pub fn decode_question(bits: u128) -> Result<QuestionCode, SupportError> {
    let block = |lo: usize, len: usize| -> Result<usize, SupportError> {
        let b = (bits >> lo) & ((1u128 << len) - 1);
        if b.count_ones() != 1 {
            return Err(SupportError::MalformedQuestion);
        }
        Ok(b.trailing_zeros() as usize)
    };
    if bits >> QUESTION_BITS != 0 {
        return Err(SupportError::MalformedQuestion);
    }
    let group = if block(GROUP_BASE, 2)? == 0 { QuestionGroup::NonRelational } else { QuestionGroup::Relational };
    encode_question(
        block(0, MAX_INSTANCES)?,
        block(CATEGORY_BASE as usize, CATEGORY_COUNT)?,
        block(QUESTION_BASE, 4)?,
        group,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Answer {
    Instance(u8),
    Category(u8),
    Type(SupportType),
    Yes,
    No,
}

pub fn decode_answer(code: u8) -> Result<Answer, SupportError> {
    Ok(match code {
        0..=59 => Answer::Instance(code),
        60..=99 => Answer::Category(code - CATEGORY_BASE),
        100 => Answer::Type(SupportType::Below),
        101 => Answer::Type(SupportType::Behind),
        YES_CODE => Answer::Yes,
        NO_CODE => Answer::No,
        _ => return Err(SupportError::OutOfRange { field: "answer", value: code as usize }),
    })
}

pub fn encode_answer(a: Answer) -> Result<u8, SupportError> {
    match a {
        Answer::Instance(i) if (i as usize) < MAX_INSTANCES => Ok(i),
        Answer::Category(c) if (c as usize) < CATEGORY_COUNT => Ok(CATEGORY_BASE + c),
        Answer::Type(t) => Ok(TYPE_BASE + t.index() as u8),
        Answer::Yes => Ok(YES_CODE),
        Answer::No => Ok(NO_CODE),
        Answer::Instance(i) => Err(SupportError::OutOfRange { field: "instance", value: i as usize }),
        Answer::Category(c) => Err(SupportError::OutOfRange { field: "category", value: c as usize }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WallSide {
    Front,
    Left,
    Right,
    Back,
}

impl WallSide {
    pub const ALL: [WallSide; 4] = [WallSide::Front, WallSide::Left, WallSide::Right, WallSide::Back];
}

/// Supporting instance. The derived order (objects by id, then floor, wall,
/// ceiling) is the final tie-break of the prior argmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportParent {
    Object(u8),
    Floor,
    Wall(WallSide),
    Ceiling,
}

impl SupportParent {
    pub fn is_layout(&self) -> bool {
        !matches!(self, SupportParent::Object(_))
    }

    pub fn layout_category(&self) -> Option<u8> {
        match self {
            SupportParent::Object(_) => None,
            SupportParent::Floor => Some(categories::FLOOR),
            SupportParent::Wall(_) => Some(categories::WALL),
            SupportParent::Ceiling => Some(categories::CEILING),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub parent: SupportParent,
    pub category: u8,
}

/// Answers supplied for one object, decoded.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectAnswers {
    pub parent_instance: Option<u8>,
    /// Ranked parent-category candidates.
    pub parent_categories: Vec<u8>,
    pub support_type: Option<SupportType>,
    pub on_layout: Option<bool>,
}

impl ObjectAnswers {
    /// Builds answers from raw codes, keyed by relational question.
    pub fn from_codes(codes: &BTreeMap<RelationalQuestion, Vec<u8>>) -> Result<Self, SupportError> {
        let mut out = ObjectAnswers::default();
        for (q, list) in codes {
            for &code in list {
                match (q, decode_answer(code)?) {
                    (RelationalQuestion::ParentInstance, Answer::Instance(i)) => out.parent_instance = Some(i),
                    (RelationalQuestion::ParentCategory, Answer::Category(c)) => out.parent_categories.push(c),
                    (RelationalQuestion::SupportType, Answer::Type(t)) => out.support_type = Some(t),
                    (RelationalQuestion::SupportedByLayout, Answer::Yes) => out.on_layout = Some(true),
                    (RelationalQuestion::SupportedByLayout, Answer::No) => out.on_layout = Some(false),
                    _ => return Err(SupportError::OutOfRange { field: "answer for question", value: code as usize }),
                }
            }
        }
        Ok(out)
    }

    pub fn to_codes(&self) -> BTreeMap<RelationalQuestion, Vec<u8>> {
        let mut m = BTreeMap::new();
        if let Some(i) = self.parent_instance {
            m.insert(RelationalQuestion::ParentInstance, vec![i]);
        }
        if !self.parent_categories.is_empty() {
            m.insert(
                RelationalQuestion::ParentCategory,
                self.parent_categories.iter().map(|c| CATEGORY_BASE + c).collect(),
            );
        }
        if let Some(t) = self.support_type {
            m.insert(RelationalQuestion::SupportType, vec![TYPE_BASE + t.index() as u8]);
        }
        if let Some(b) = self.on_layout {
            m.insert(RelationalQuestion::SupportedByLayout, vec![if b { YES_CODE } else { NO_CODE }]);
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportEdge {
    pub parent: SupportParent,
    pub support_type: SupportType,
    /// `P(parent category | child category, type)` of the chosen edge.
    pub prior: f64,
    /// No candidate survived and the floor was assumed.
    pub fallback: bool,
}

/// Picks the neighbor maximizing `P(C(parent) | C(child), T)` among
/// neighbors whose category is in the candidate set.
///
/// Without a candidate set the five most likely parent categories under the
/// priors are used; without a type both types compete. Ties go to the higher
/// prior, then below over behind, then an answered parent instance, then the
/// [`SupportParent`] order. No candidate at all means the floor, from below.
pub fn resolve_support(
    child_category: u8,
    answers: &ObjectAnswers,
    priors: &PriorTables,
    neighbors: &[Neighbor],
) -> SupportEdge {
    let sc: Vec<u8> = if answers.parent_categories.is_empty() {
        priors.top_parents(child_category, SUPPORT_CANDIDATES)
    } else {
        answers.parent_categories.iter().take(SUPPORT_CANDIDATES).copied().collect()
    };
    let types: Vec<SupportType> = answers.support_type.map_or(SupportType::ALL.to_vec(), |t| vec![t]);
    let mut pool: Vec<&Neighbor> = neighbors.iter().filter(|n| sc.contains(&n.category)).collect();
    if let Some(on_layout) = answers.on_layout {
        let filtered: Vec<&Neighbor> = pool.iter().copied().filter(|n| n.parent.is_layout() == on_layout).collect();
        if !filtered.is_empty() {
            pool = filtered;
        }
    }
    let answered = answers.parent_instance.map(SupportParent::Object);
    let mut best: Option<SupportEdge> = None;
    for n in pool {
        for &t in &types {
            let prior = priors.prob(child_category, n.category, t).unwrap_or(0.0);
            let cand = SupportEdge { parent: n.parent, support_type: t, prior, fallback: false };
            let better = match &best {
                None => true,
                Some(b) => {
                    let key = |e: &SupportEdge| (e.support_type, Some(e.parent) != answered, e.parent);
                    match cmp_prior(prior, b.prior) {
                        std::cmp::Ordering::Greater => true,
                        std::cmp::Ordering::Less => false,
                        std::cmp::Ordering::Equal => key(&cand) < key(b),
                    }
                }
            };
            if better {
                best = Some(cand);
            }
        }
    }
    best.unwrap_or(SupportEdge {
        parent: SupportParent::Floor,
        support_type: SupportType::Below,
        prior: priors.prob(child_category, categories::FLOOR, SupportType::Below).unwrap_or(0.0),
        fallback: true,
    })
}

/// Priors within a relative `1e-12` compare equal, so ties survive
/// rescaling of the counts.
fn cmp_prior(a: f64, b: f64) -> std::cmp::Ordering {
    if (a - b).abs() <= 1e-12 * a.abs().max(b.abs()) {
        std::cmp::Ordering::Equal
    } else {
        a.total_cmp(&b)
    }
}

/// Child-to-parent edges keyed by child instance id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SupportGraph {
    pub edges: BTreeMap<u8, SupportEdge>,
}

impl SupportGraph {
    pub fn parent(&self, child: u8) -> Option<&SupportEdge> {
        self.edges.get(&child)
    }

    pub fn children(&self, parent: u8) -> Vec<u8> {
        self.edges.iter().filter(|(_, e)| e.parent == SupportParent::Object(parent)).map(|(c, _)| *c).collect()
    }

    /// Parents before children; ties by id.
    pub fn topological_order(&self) -> Result<Vec<u8>, SupportError> {
        let mut depth: BTreeMap<u8, usize> = BTreeMap::new();
        for &start in self.edges.keys() {
            let mut chain = Vec::new();
            let mut cur = start;
            let base = loop {
                if let Some(&d) = depth.get(&cur) {
                    break d + 1;
                }
                if chain.contains(&cur) {
                    return Err(SupportError::CyclicGraph(cur));
                }
                chain.push(cur);
                match self.edges.get(&cur).map(|e| e.parent) {
                    Some(SupportParent::Object(p)) if self.edges.contains_key(&p) => cur = p,
                    _ => break 0,
                }
            };
            for (k, id) in chain.iter().rev().enumerate() {
                depth.insert(*id, base + k);
            }
        }
        let mut order: Vec<u8> = depth.keys().copied().collect();
        order.sort_by_key(|id| (depth[id], *id));
        Ok(order)
    }

    /// Breaks every cycle by sending its lowest-prior edge to the floor.
    /// Returns the re-parented children.
    pub fn repair_cycles(&mut self) -> Vec<u8> {
        let mut repaired = Vec::new();
        loop {
            let Some(cycle) = self.find_cycle() else { break };
            let weakest = *cycle
                .iter()
                .min_by(|a, b| self.edges[a].prior.total_cmp(&self.edges[b].prior).then(a.cmp(b)))
                .expect("cycle is nonempty");
            self.edges.insert(
                weakest,
                SupportEdge {
                    parent: SupportParent::Floor,
                    support_type: SupportType::Below,
                    prior: 0.0,
                    fallback: true,
                },
            );
            repaired.push(weakest);
        }
        repaired
    }

    fn find_cycle(&self) -> Option<Vec<u8>> {
        let mut done = BTreeSet::new();
        for &start in self.edges.keys() {
            let mut path = Vec::new();
            let mut cur = start;
            loop {
                if done.contains(&cur) {
                    break;
                }
                if let Some(pos) = path.iter().position(|&x| x == cur) {
                    return Some(path[pos..].to_vec());
                }
                path.push(cur);
                match self.edges.get(&cur).map(|e| e.parent) {
                    Some(SupportParent::Object(p)) => cur = p,
                    _ => break,
                }
            }
            done.extend(path);
        }
        None
    }

    /// The four relational answers implied by an edge.
    pub fn implied_answers(&self, child: u8, category_of: impl Fn(u8) -> Option<u8>) -> Option<[Option<Answer>; 4]> {
        let e = self.edges.get(&child)?;
        let (inst, cat) = match e.parent {
            SupportParent::Object(p) => (Some(Answer::Instance(p)), category_of(p).map(Answer::Category)),
            other => (None, other.layout_category().map(Answer::Category)),
        };
        let layout = if e.parent.is_layout() { Answer::Yes } else { Answer::No };
        Some([inst, cat, Some(Answer::Type(e.support_type)), Some(layout)])
    }
}

/// Object-object adjacency: masks are neighbors when their closest pixels
/// are at most `2·dilation + 1` apart, i.e. they touch once each is grown by
/// `dilation`. Layout instances neighbor every object and are not listed.
pub fn neighbors(masks: &[&Mask], dilation: usize) -> Vec<Vec<usize>> {
    let reach = 2 * dilation + 1;
    let r2 = (reach * reach) as i64;
    let boxes: Vec<Option<(usize, usize, usize, usize)>> = masks.iter().map(|m| m.bbox()).collect();
    let grown: Vec<Option<Mask>> = masks
        .iter()
        .map(|m| {
            if m.is_empty() {
                return None;
            }
            let mut g = (*m).clone();
            let r = reach as i64;
            for (x, y) in m.boundary_pixels() {
                for dy in -r..=r {
                    for dx in -r..=r {
                        if dx * dx + dy * dy > r2 {
                            continue;
                        }
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if nx >= 0 && ny >= 0 && (nx as usize) < m.width() && (ny as usize) < m.height() {
                            g.set(nx as usize, ny as usize, true);
                        }
                    }
                }
            }
            Some(g)
        })
        .collect();
    let mut adj = vec![Vec::new(); masks.len()];
    for i in 0..masks.len() {
        for j in i + 1..masks.len() {
            let (Some(bi), Some(bj)) = (boxes[i], boxes[j]) else {
                continue;
            };
            let gap_x = (bj.0 as i64 - bi.2 as i64).max(bi.0 as i64 - bj.2 as i64).max(0);
            let gap_y = (bj.1 as i64 - bi.3 as i64).max(bi.1 as i64 - bj.3 as i64).max(0);
            if gap_x > reach as i64 || gap_y > reach as i64 {
                continue;
            }
            let g = grown[i].as_ref().expect("nonempty mask");
            if masks[j].iter_set().any(|(x, y)| g.get(x, y)) {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    adj
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::categories::{LAMP, NIGHT_STAND, TABLE, WALL};
    use proptest::prelude::*;

    #[test]
    fn question_block_edges() {
        let a = encode_question(0, 0, 0, QuestionGroup::NonRelational).unwrap();
        let set: Vec<usize> = (0..QUESTION_BITS).filter(|&i| a.vector()[i]).collect();
        assert_eq!(set, vec![0, 60, 100, 104]);
        let b = encode_question(59, 39, 3, QuestionGroup::Relational).unwrap();
        let set: Vec<usize> = (0..QUESTION_BITS).filter(|&i| b.vector()[i]).collect();
        assert_eq!(set, vec![59, 99, 103, 105]);
        assert!(encode_question(60, 0, 0, QuestionGroup::Relational).is_err());
        assert!(encode_question(0, 40, 0, QuestionGroup::Relational).is_err());
        assert!(encode_question(0, 0, 4, QuestionGroup::Relational).is_err());
    }

    #[test]
    fn answer_table() {
        assert_eq!(decode_answer(0).unwrap(), Answer::Instance(0));
        assert_eq!(decode_answer(60).unwrap(), Answer::Category(0));
        assert_eq!(decode_answer(101).unwrap(), Answer::Type(SupportType::Behind));
        assert!(decode_answer(104).is_err());
    }

    #[test]
    fn malformed_question_rejected() {
        assert_eq!(decode_question(0b11), Err(SupportError::MalformedQuestion));
        assert_eq!(decode_question(0), Err(SupportError::MalformedQuestion));
    }

    fn lamp_priors() -> PriorTables {
        let mut p = PriorTables::empty();
        p.set_count(LAMP, NIGHT_STAND, SupportType::Below, 40.0);
        p.set_count(LAMP, TABLE, SupportType::Below, 25.0);
        p.set_count(LAMP, WALL, SupportType::Behind, 5.0);
        p.set_count(LAMP, categories::FLOOR, SupportType::Below, 10.0);
        p
    }

    #[test]
    fn lamp_rests_on_night_stand() {
        let nbrs = [
            Neighbor { parent: SupportParent::Object(3), category: NIGHT_STAND },
            Neighbor { parent: SupportParent::Wall(WallSide::Front), category: WALL },
            Neighbor { parent: SupportParent::Floor, category: categories::FLOOR },
        ];
        let answers = ObjectAnswers {
            parent_categories: vec![NIGHT_STAND, TABLE, WALL],
            support_type: Some(SupportType::Below),
            ..Default::default()
        };
        let e = resolve_support(LAMP, &answers, &lamp_priors(), &nbrs);
        assert_eq!((e.parent, e.support_type), (SupportParent::Object(3), SupportType::Below));
    }

    #[test]
    fn single_candidate_wins_regardless_of_prior() {
        let nbrs = [Neighbor { parent: SupportParent::Object(8), category: TABLE }];
        let answers = ObjectAnswers { parent_categories: vec![TABLE], ..Default::default() };
        let e = resolve_support(LAMP, &answers, &PriorTables::empty(), &nbrs);
        assert_eq!(e.parent, SupportParent::Object(8));
    }

    #[test]
    fn empty_candidates_fall_back_to_floor() {
        let e = resolve_support(LAMP, &ObjectAnswers::default(), &PriorTables::empty(), &[]);
        assert_eq!((e.parent, e.support_type, e.fallback), (SupportParent::Floor, SupportType::Below, true));
    }

    #[test]
    fn equal_priors_pick_lower_id() {
        let nbrs = [
            Neighbor { parent: SupportParent::Object(9), category: NIGHT_STAND },
            Neighbor { parent: SupportParent::Object(4), category: NIGHT_STAND },
        ];
        let e = resolve_support(LAMP, &ObjectAnswers::default(), &lamp_priors(), &nbrs);
        assert_eq!(e.parent, SupportParent::Object(4));
    }

    #[test]
    fn cycles_repaired_at_weakest_edge() {
        let mut g = SupportGraph::default();
        let e = |p: u8, prior: f64| SupportEdge {
            parent: SupportParent::Object(p),
            support_type: SupportType::Below,
            prior,
            fallback: false,
        };
        g.edges.insert(1, e(2, 0.5));
        g.edges.insert(2, e(3, 0.2));
        g.edges.insert(3, e(1, 0.9));
        g.edges.insert(4, e(1, 0.9));
        assert!(matches!(g.topological_order(), Err(SupportError::CyclicGraph(_))));
        assert_eq!(g.repair_cycles(), vec![2]);
        let order = g.topological_order().unwrap();
        assert_eq!(order, vec![2, 1, 3, 4]);
    }

    fn square(w: usize, x0: usize, x1: usize) -> Mask {
        Mask::from_fn(w, 20, |x, y| (x0..=x1).contains(&x) && (5..15).contains(&y))
    }

    #[test]
    fn neighbor_distance_rule() {
        let a = square(60, 5, 14);
        let touching = square(60, 15, 24);
        assert_eq!(neighbors(&[&a, &touching], 0), vec![vec![1], vec![0]]);
        // Five empty columns between the masks.
        let gap = square(60, 20, 29);
        assert_eq!(neighbors(&[&a, &gap], 3), vec![vec![1], vec![0]]);
        assert_eq!(neighbors(&[&a, &gap], 2), vec![Vec::<usize>::new(), vec![]]);
    }

    proptest! {
        #[test]
        fn resolve_invariant_to_count_scaling(k in 0.01f64..100.0, seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut p = PriorTables::empty();
            for c in p.support_count.iter_mut() {
                *c = if rng.gen_bool(0.3) { rng.gen_range(0..20) as f64 } else { 0.0 };
            }
            let nbrs: Vec<Neighbor> = (0..6).map(|i| Neighbor { parent: SupportParent::Object(i), category: rng.gen_range(0..40) }).collect();
            let mut q = p.clone();
            for c in q.support_count.iter_mut() { *c *= k; }
            let a = resolve_support(7, &ObjectAnswers::default(), &p, &nbrs);
            let b = resolve_support(7, &ObjectAnswers::default(), &q, &nbrs);
            prop_assert_eq!((a.parent, a.support_type), (b.parent, b.support_type));
        }
    }
}
