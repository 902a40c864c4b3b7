//! Knowledge bases extracted from logged transitions, and the set logic that
//! picks digit pairs for each generalization test category.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::env::EpisodeLog;
use crate::types::{Color, Direction, Move, PanelDescription, MAX_DIGIT};

pub const DEFAULT_THETA: u32 = 3;

/// One remembered transition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemEntry {
    pub desc_s: PanelDescription,
    #[serde(rename = "move")]
    pub mv: Move,
    pub valid: bool,
    pub desc_s2: PanelDescription,
}

pub fn memory_from_log(log: &EpisodeLog) -> Vec<MemEntry> {
    log.steps
        .iter()
        .map(|s| MemEntry { desc_s: s.desc_before, mv: s.mv.clone(), valid: s.valid, desc_s2: s.desc_after })
        .collect()
}

/// An inequality `greater > lesser` shown in the colour of `direction`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pair {
    pub greater: u8,
    pub lesser: u8,
    pub direction: Direction,
}

impl Pair {
    pub fn new(a: u8, b: u8, direction: Direction) -> Pair {
        Pair { greater: a.max(b), lesser: a.min(b), direction }
    }

    pub fn digits(&self) -> (u8, u8) {
        (self.greater, self.lesser)
    }

    pub fn with_direction(self, direction: Direction) -> Pair {
        Pair { direction, ..self }
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{},{}|{}>", self.greater, self.lesser, self.direction)
    }
}

impl std::str::FromStr for Pair {
    type Err = crate::Error;

    /// Parses the `<5,3|Up>` form.
    fn from_str(s: &str) -> crate::Result<Pair> {
        let bad = || crate::Error::parse(0, format!("bad pair {s:?}"));
        let inner = s.strip_prefix('<').and_then(|r| r.strip_suffix('>')).ok_or_else(bad)?;
        let (digits, dir) = inner.split_once('|').ok_or_else(bad)?;
        let (a, b) = digits.split_once(',').ok_or_else(bad)?;
        let a: u8 = a.parse().map_err(|_| bad())?;
        let b: u8 = b.parse().map_err(|_| bad())?;
        let direction = Direction::ALL.into_iter().find(|d| d.to_string() == dir).ok_or_else(bad)?;
        if a <= b || b == 0 || a > MAX_DIGIT {
            return Err(bad());
        }
        Ok(Pair::new(a, b, direction))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    St1,
    St2,
    Aft1,
    Aft2,
    Aft3,
    Aft4,
    Ant,
}

impl Category {
    pub const ALL: [Category; 7] =
        [Category::St1, Category::St2, Category::Aft1, Category::Aft2, Category::Aft3, Category::Aft4, Category::Ant];

    pub fn label(self) -> &'static str {
        match self {
            Category::St1 => "ST-1",
            Category::St2 => "ST-2",
            Category::Aft1 => "AfT-1",
            Category::Aft2 => "AfT-2",
            Category::Aft3 => "AfT-3",
            Category::Aft4 => "AfT-4",
            Category::Ant => "AnT",
        }
    }

    pub fn from_label(s: &str) -> Option<Category> {
        Category::ALL.into_iter().find(|c| c.label() == s)
    }

    pub fn group(self) -> Group {
        match self {
            Category::St1 | Category::St2 => Group::St,
            Category::Aft1 | Category::Aft2 | Category::Aft3 | Category::Aft4 => Group::Aft,
            Category::Ant => Group::Ant,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Group {
    St,
    Aft,
    Ant,
}

/// Colour-tagged digits of one panel, sorted.
pub type PanelSignature = Vec<(Color, u8)>;

pub fn panel_signature(desc: &PanelDescription) -> PanelSignature {
    let mut sig: PanelSignature = desc.entries().iter().map(|(s, v)| (s.color(), *v)).collect();
    sig.sort();
    sig
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub theta: u32,
    /// Crossing/wall pairs seen together in one panel.
    pub kb_s: BTreeMap<Pair, u32>,
    /// Wall digits changed by a transition along the moved axis.
    pub kb_ac: BTreeMap<Pair, u32>,
    /// Digits consumed exactly by an option, keyed by (digit, direction).
    pub kb_a_eq: BTreeMap<(u8, Direction), u32>,
    /// Option decompositions that consumed each digit, for audit.
    pub eq_options: BTreeMap<(u8, Direction), BTreeSet<Vec<u8>>>,
    /// Every observed panel signature with its count.
    pub panels: BTreeMap<PanelSignature, u32>,
}

/// Applies the three extraction rules to the memory.
pub fn build_kb(mem: &[MemEntry], theta: u32) -> KnowledgeBase {
    let mut kb = KnowledgeBase { theta, ..Default::default() };
    for e in mem {
        for desc in [&e.desc_s, &e.desc_s2] {
            *kb.panels.entry(panel_signature(desc)).or_default() += 1;
        }
        for d in Direction::ALL {
            if let Some(c) = e.desc_s.crossing(d) {
                let w = e.desc_s.wall(d);
                if w > 0 && c > 0 && c != w {
                    *kb.kb_s.entry(Pair::new(w, c, d)).or_default() += 1;
                }
            }
        }
        let disp = e.mv.displacement();
        if !e.valid || disp == 0 {
            continue;
        }
        let d = e.mv.direction;
        for a in [d, d.opposite()] {
            let (w1, w2) = (e.desc_s.wall(a), e.desc_s2.wall(a));
            if w1 != w2 && w1 > 0 && w2 > 0 {
                *kb.kb_ac.entry(Pair::new(w1, w2, a)).or_default() += 1;
            }
        }
        let after = [Some(e.desc_s2.wall(d)), e.desc_s2.crossing(d)];
        let mut consumed = BTreeSet::new();
        for v in [Some(e.desc_s.wall(d)), e.desc_s.crossing(d)].into_iter().flatten() {
            if v > 0 && v as u32 == disp && !after.contains(&Some(v)) {
                consumed.insert(v);
            }
        }
        for v in consumed {
            *kb.kb_a_eq.entry((v, d)).or_default() += 1;
            kb.eq_options.entry((v, d)).or_default().insert(e.mv.primitives.clone());
        }
    }
    kb
}

impl KnowledgeBase {
    pub fn understood_s(&self) -> BTreeSet<Pair> {
        understood(&self.kb_s, self.theta)
    }

    pub fn understood_ac(&self) -> BTreeSet<Pair> {
        understood(&self.kb_ac, self.theta)
    }

    pub fn understood_eq(&self) -> BTreeSet<(u8, Direction)> {
        understood(&self.kb_a_eq, self.theta)
    }

    /// Number of remembered panels showing every entry of `sig`.
    pub fn co_occurrence(&self, sig: &[(Color, u8)]) -> u32 {
        self.panels.iter().filter(|(p, _)| contains_all(p, sig)).map(|(_, n)| *n).sum()
    }

    /// Digit pairs (greater, lesser) known in any direction through any base.
    pub fn known_digit_pairs(&self) -> BTreeSet<(u8, u8)> {
        let mut k: BTreeSet<(u8, u8)> = self.understood_s().iter().map(|p| p.digits()).collect();
        k.extend(self.understood_ac().iter().map(|p| p.digits()));
        let eq_digits: BTreeSet<u8> = self.understood_eq().iter().map(|(v, _)| *v).collect();
        for a in &eq_digits {
            for b in &eq_digits {
                if a > b {
                    k.insert((*a, *b));
                }
            }
        }
        k
    }

    /// Which category, if any, a pair in its direction falls under. The
    /// categories are checked in label order and are mutually exclusive.
    pub fn classify(&self, pair: Pair) -> Option<Category> {
        let s = self.understood_s();
        let ac = self.understood_ac();
        let eq = self.understood_eq();
        let t = pair.direction;
        let (g, l) = pair.digits();
        let in_s_any = Direction::ALL.iter().any(|x| s.contains(&pair.with_direction(*x)));
        if s.contains(&pair) {
            return Some(Category::St1);
        }
        if in_s_any {
            return Some(Category::St2);
        }
        if ac.contains(&pair) {
            return Some(Category::Aft1);
        }
        if eq.contains(&(g, t)) && eq.contains(&(l, t)) {
            return Some(Category::Aft2);
        }
        if Direction::ALL.iter().any(|x| ac.contains(&pair.with_direction(*x))) {
            return Some(Category::Aft3);
        }
        let has = |v: u8| eq.iter().any(|(w, _)| *w == v);
        if has(g) && has(l) {
            return Some(Category::Aft4);
        }
        let known = self.known_digit_pairs();
        if known.contains(&(g, l)) || !has_template(&known) {
            return None;
        }
        let bridged = (l + 1..g).any(|m| known.contains(&(g, m)) && known.contains(&(m, l)));
        bridged.then_some(Category::Ant)
    }

    /// Candidate pairs for one category, sorted.
    pub fn query(&self, category: Category) -> Vec<Pair> {
        let mut out = Vec::new();
        for g in 2..=MAX_DIGIT {
            for l in 1..g {
                for d in Direction::ALL {
                    let p = Pair::new(g, l, d);
                    if self.classify(p) == Some(category) {
                        out.push(p);
                    }
                }
            }
        }
        out
    }

    /// Human-readable listing of every base with counts.
    pub fn dump(&self) -> String {
        let mark = |n: u32| if n >= self.theta { "" } else { " (below threshold)" };
        let mut out = format!("threshold: {}\n[semantic]\n", self.theta);
        for (p, n) in &self.kb_s {
            out.push_str(&format!("{p} x{n}{}\n", mark(*n)));
        }
        out.push_str("[affordance/causal]\n");
        for (p, n) in &self.kb_ac {
            out.push_str(&format!("{p} x{n}{}\n", mark(*n)));
        }
        out.push_str("[affordance equality]\n");
        for ((v, d), n) in &self.kb_a_eq {
            let opts: Vec<String> = self.eq_options[&(*v, *d)]
                .iter()
                .map(|o| o.iter().map(|p| p.to_string()).collect::<Vec<_>>().join("+"))
                .collect();
            out.push_str(&format!("{v} = {d}:{{{}}} x{n}{}\n", opts.join(", "), mark(*n)));
        }
        out
    }
}

fn understood<K: Ord + Clone>(m: &BTreeMap<K, u32>, theta: u32) -> BTreeSet<K> {
    m.iter().filter(|(_, n)| **n >= theta).map(|(k, _)| k.clone()).collect()
}

fn contains_all(panel: &[(Color, u8)], sig: &[(Color, u8)]) -> bool {
    let mut rest: Vec<(Color, u8)> = panel.to_vec();
    for e in sig {
        match rest.iter().position(|x| x == e) {
            Some(i) => {
                rest.swap_remove(i);
            }
            None => return false,
        }
    }
    true
}

/// Whether some a > b > c has all three pairs known.
fn has_template(known: &BTreeSet<(u8, u8)>) -> bool {
    known.iter().any(|(a, b)| known.iter().any(|(b2, c)| b2 == b && known.contains(&(*a, *c))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::HintSymbol;

    fn panel(walls: [u8; 4], crossings: [Option<u8>; 4]) -> PanelDescription {
        PanelDescription { wall: walls, crossing: crossings, goal: [0, 0], hint: None }
    }

    fn entry(s: PanelDescription, d: Direction, prims: &[u8], s2: PanelDescription) -> MemEntry {
        MemEntry { desc_s: s, mv: Move::new(d, prims.to_vec()).unwrap(), valid: true, desc_s2: s2 }
    }

    #[test]
    fn rule_one_pairs_crossing_and_wall() {
        let mut s = panel([0, 0, 5, 0], [None, None, Some(2), None]);
        s.hint = Some(HintSymbol::Triangle);
        let kb = build_kb(&[entry(s, Direction::Up, &[0], s)], 1);
        assert_eq!(kb.kb_s.get(&Pair::new(5, 2, Direction::Right)), Some(&1));
    }

    #[test]
    fn rule_two_tracks_wall_change() {
        let s = panel([5, 0, 1, 0], [None; 4]);
        let s2 = panel([3, 0, 3, 0], [None; 4]);
        let kb = build_kb(&[entry(s, Direction::Left, &[2], s2)], 1);
        assert!(kb.kb_ac.contains_key(&Pair::new(5, 3, Direction::Left)));
        assert!(kb.kb_ac.contains_key(&Pair::new(3, 1, Direction::Right)));
        assert_eq!(kb.kb_ac.len(), 2);
    }

    #[test]
    fn rule_three_records_consumed_digit() {
        let s = panel([3, 0, 0, 0], [None; 4]);
        let s2 = panel([0, 0, 3, 0], [None; 4]);
        let kb = build_kb(&[entry(s, Direction::Left, &[3], s2)], 1);
        assert_eq!(kb.kb_a_eq.get(&(3, Direction::Left)), Some(&1));
        assert!(kb.eq_options[&(3, Direction::Left)].contains(&vec![3]));
    }

    #[test]
    fn invalid_moves_teach_nothing_causal() {
        let s = panel([3, 0, 0, 0], [None; 4]);
        let mut e = entry(s, Direction::Left, &[3, 3], s);
        e.valid = false;
        let kb = build_kb(&[e], 1);
        assert!(kb.kb_ac.is_empty() && kb.kb_a_eq.is_empty());
    }

    #[test]
    fn threshold_hides_rare_relations() {
        let s = panel([0, 5, 0, 0], [None, Some(3), None, None]);
        let e = entry(s, Direction::Down, &[0], s);
        let kb = build_kb(&[e.clone(), e.clone()], 3);
        assert!(kb.understood_s().is_empty());
        let kb = build_kb(&[e.clone(), e.clone(), e], 3);
        assert_eq!(kb.understood_s().len(), 1);
    }

    #[test]
    fn pair_text_round_trip() {
        let p = Pair::new(3, 5, Direction::Up);
        assert_eq!(p.to_string(), "<5,3|Up>");
        assert_eq!("<5,3|Up>".parse::<Pair>().unwrap(), p);
        assert!("<3,5|Up>".parse::<Pair>().is_err());
    }

    #[test]
    fn subset_matching_respects_multiplicity() {
        let panel = vec![(Color::Red, 3), (Color::Red, 5)];
        assert!(contains_all(&panel, &[(Color::Red, 3)]));
        assert!(!contains_all(&panel, &[(Color::Red, 3), (Color::Red, 3)]));
    }
}
