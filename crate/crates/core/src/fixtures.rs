//! Seeded synthetic snapshot editions whose generative plans serve as test
//! oracles.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::simulator::{CohortMatrix, SimError, Window};
use crate::snapshots::{ClassLevel, EditionSnapshot, Tally};

/// Sections used by the generator. `Y` is included so that tagging classes
/// appear in fixtures.
pub const SECTIONS: &[char] = &['A', 'B', 'C', 'D', 'E', 'F', 'G', 'H', 'Y'];
pub const SUBCLASSES_PER_SECTION: usize = 6;

/// Deterministic pool of subclass ids, e.g. `H03B`.
pub fn subclass_pool() -> Vec<String> {
    let mut out = Vec::new();
    for (si, s) in SECTIONS.iter().enumerate() {
        for j in 0..SUBCLASSES_PER_SECTION {
            let num = 1 + (si * 7 + j * 11) % 97;
            let letter = (b'B' + j as u8) as char;
            out.push(format!("{s}{num:02}{letter}"));
        }
    }
    out
}

fn code_in(rng: &mut ChaCha8Rng, subclass: &str) -> String {
    format!("{subclass}{}/{:02}", rng.random_range(1..=99), rng.random_range(0..=99))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureConfig {
    pub families: usize,
    pub first_year: i32,
    pub last_year: i32,
    pub max_subclasses: usize,
    pub add_prob: f64,
    pub remove_prob: f64,
    /// Share of earlier families missing from the later edition, and of
    /// extra families appearing only there.
    pub churn_prob: f64,
    pub seed: u64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            families: 1000,
            first_year: 1990,
            last_year: 2012,
            max_subclasses: 4,
            add_prob: 0.3,
            remove_prob: 0.1,
            churn_prob: 0.02,
            seed: 7,
        }
    }
}

impl FixtureConfig {
    fn validate(&self) -> Result<(), String> {
        if self.first_year > self.last_year {
            return Err("first_year after last_year".into());
        }
        if self.max_subclasses == 0 || self.max_subclasses > SECTIONS.len() - 1 {
            return Err(format!("max_subclasses must be in 1..={}", SECTIONS.len() - 1));
        }
        for (name, p) in [
            ("add_prob", self.add_prob),
            ("remove_prob", self.remove_prob),
            ("churn_prob", self.churn_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} must be a probability"));
            }
        }
        Ok(())
    }
}

/// One family of the plan. Each family holds at most one subclass per
/// section, additions always land in a new section and removals drop a whole
/// subclass, so section-level tallies never cancel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedFamily {
    pub id: String,
    pub filing_year: i32,
    pub before: BTreeMap<String, Vec<String>>,
    pub removed: BTreeSet<String>,
    pub added: BTreeMap<String, Vec<String>>,
    pub in_later: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditionPlan {
    pub config: FixtureConfig,
    pub families: Vec<PlannedFamily>,
    pub later_only: Vec<PlannedFamily>,
}

impl EditionPlan {
    pub fn generate(config: FixtureConfig) -> Result<Self, String> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let pool = subclass_pool();
        let by_section: BTreeMap<char, Vec<&String>> = SECTIONS
            .iter()
            .map(|&s| (s, pool.iter().filter(|c| c.starts_with(s)).collect()))
            .collect();

        let draw_family = |rng: &mut ChaCha8Rng, id: String| {
            let year = rng.random_range(config.first_year..=config.last_year);
            let k = rng.random_range(1..=config.max_subclasses);
            let mut sections = SECTIONS.to_vec();
            sections.shuffle(rng);
            let mut before = BTreeMap::new();
            for s in &sections[..k] {
                let sub = (*by_section[s].choose(rng).expect("nonempty section")).clone();
                let n_codes = rng.random_range(1..=2);
                let codes = (0..n_codes).map(|_| code_in(rng, &sub)).collect();
                before.insert(sub, codes);
            }
            let free: Vec<char> = sections[k..].to_vec();
            (id, year, before, free)
        };

        let mut families = Vec::with_capacity(config.families);
        for i in 0..config.families {
            let (id, filing_year, before, free) = draw_family(&mut rng, format!("F{i:06}"));
            let in_later = !rng.random_bool(config.churn_prob);
            let mut removed = BTreeSet::new();
            // The first subclass is always kept so no later code set is empty.
            for sub in before.keys().skip(1) {
                if rng.random_bool(config.remove_prob) {
                    removed.insert(sub.clone());
                }
            }
            let mut added = BTreeMap::new();
            for s in free.iter().take(2) {
                if rng.random_bool(config.add_prob) {
                    let sub = (*by_section[s].choose(&mut rng).expect("nonempty section")).clone();
                    let code = code_in(&mut rng, &sub);
                    added.insert(sub, vec![code]);
                }
            }
            families.push(PlannedFamily {
                id,
                filing_year,
                before,
                removed,
                added,
                in_later,
            });
        }
        let n_new = (config.families as f64 * config.churn_prob).round() as usize;
        let later_only = (0..n_new)
            .map(|i| {
                let (id, filing_year, before, _) = draw_family(&mut rng, format!("N{i:06}"));
                PlannedFamily {
                    id,
                    filing_year,
                    before,
                    removed: BTreeSet::new(),
                    added: BTreeMap::new(),
                    in_later: true,
                }
            })
            .collect();
        Ok(Self {
            config,
            families,
            later_only,
        })
    }

    pub fn earlier(&self, label: &str) -> EditionSnapshot {
        let mut snap = EditionSnapshot::new(label);
        for f in &self.families {
            snap.add(&f.id, f.filing_year, f.before.values().flatten())
                .expect("generator emits valid codes");
        }
        snap
    }

    pub fn later(&self, label: &str) -> EditionSnapshot {
        let mut snap = EditionSnapshot::new(label);
        for f in self.families.iter().filter(|f| f.in_later) {
            let kept = f
                .before
                .iter()
                .filter(|(sub, _)| !f.removed.contains(*sub))
                .flat_map(|(_, codes)| codes);
            snap.add(&f.id, f.filing_year, kept.chain(f.added.values().flatten()))
                .expect("generator emits valid codes");
        }
        for f in &self.later_only {
            snap.add(&f.id, f.filing_year, f.before.values().flatten())
                .expect("generator emits valid codes");
        }
        snap
    }

    /// Tallies implied by the plan. Main-group tallies are not planned.
    pub fn expected_tallies(&self, level: ClassLevel) -> Option<BTreeMap<(String, i32), Tally>> {
        let key = |sub: &str| -> Option<String> {
            match level {
                ClassLevel::Section => Some(sub[..1].to_string()),
                ClassLevel::Subclass => Some(sub.to_string()),
                ClassLevel::MainGroup => None,
            }
        };
        let mut out: BTreeMap<(String, i32), Tally> = BTreeMap::new();
        for f in self.families.iter().filter(|f| f.in_later) {
            for sub in f.before.keys() {
                let t = out.entry((key(sub)?, f.filing_year)).or_default();
                t.baseline += 1;
                if f.removed.contains(sub) {
                    t.negative += 1;
                }
            }
            for sub in f.added.keys() {
                out.entry((key(sub)?, f.filing_year)).or_default().positive += 1;
            }
        }
        Some(out)
    }
}

/// Fixture in which every class of size `s` gains exactly `rate · s` families.
#[derive(Debug, Clone, PartialEq)]
pub struct ProportionalFixture {
    pub earlier: EditionSnapshot,
    pub later: EditionSnapshot,
    pub rate: f64,
    /// `(class_id, size, planned additions)`.
    pub plan: Vec<(String, u64, u64)>,
    /// Class holding the donor families that receive the additions.
    pub donor_class: String,
}

/// `sizes[i]` families are filed in the i-th pool subclass; each addition is
/// carried by a distinct donor family. `rate · size` must be an integer.
pub fn proportional_additions(sizes: &[u64], rate: f64, year: i32) -> Result<ProportionalFixture, String> {
    let pool = subclass_pool();
    if sizes.len() + 1 > pool.len() {
        return Err(format!("at most {} classes", pool.len() - 1));
    }
    let donor_class = pool[pool.len() - 1].clone();
    let mut earlier = EditionSnapshot::new("earlier");
    let mut later = EditionSnapshot::new("later");
    let mut plan = Vec::new();
    let mut donor = 0usize;
    for (class, &size) in pool.iter().zip(sizes) {
        let adds = rate * size as f64;
        if (adds - adds.round()).abs() > 1e-9 || adds < 0.0 {
            return Err(format!("rate * {size} is not a whole number"));
        }
        let adds = adds.round() as u64;
        for i in 0..size {
            let id = format!("{class}-{i:05}");
            let code = format!("{class}1/00");
            earlier.add(&id, year, [&code]).map_err(|e| e.to_string())?;
            later.add(&id, year, [&code]).map_err(|e| e.to_string())?;
        }
        for _ in 0..adds {
            let id = format!("D{donor:06}");
            donor += 1;
            let own = format!("{donor_class}1/00");
            earlier.add(&id, year, [&own]).map_err(|e| e.to_string())?;
            later
                .add(&id, year, [own, format!("{class}2/00")])
                .map_err(|e| e.to_string())?;
        }
        plan.push((class.clone(), size, adds));
    }
    Ok(ProportionalFixture {
        earlier,
        later,
        rate,
        plan,
        donor_class,
    })
}

/// Snapshot pair whose per-filing-year net rates follow a simulated run.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFixture {
    pub earlier: EditionSnapshot,
    pub later: EditionSnapshot,
    pub window_start_year: i32,
    pub window_len: u32,
    /// Filing year → (baseline classifications, planned additions).
    pub plan: BTreeMap<i32, (u64, u64)>,
}

/// Builds editions from the reclassification events of `matrix` in `window`.
///
/// Every filing year τ in `1..=window.start` gets `per_year` single-class
/// families; the later edition adds `round(per_year · Σ events / n_τ(start))`
/// classes. Model year `t` maps to calendar year `base_year + t`.
///
/// Over a window longer than one year the added classes compound, so the
/// net rate exceeds `β Σ 1/(t−τ)`; a one-year window reproduces it exactly.
pub fn simulated_rate_editions(
    matrix: &CohortMatrix,
    window: Window,
    per_year: u64,
    base_year: i32,
) -> Result<RateFixture, SimError> {
    let stream = matrix.emit_reclass_events(&[window])?;
    let mut sums: BTreeMap<i32, (f64, f64)> = BTreeMap::new();
    for r in &stream.records {
        let e = sums.entry(r.filing_year).or_insert((0.0, 0.0));
        e.0 += r.reclassified;
        if r.event_year == r.window_start + 1 {
            e.1 = r.classifications_before;
        }
    }
    let pool = subclass_pool();
    let mut earlier = EditionSnapshot::new("earlier");
    let mut later = EditionSnapshot::new("later");
    let mut plan = BTreeMap::new();
    for (tau, (added, before)) in sums {
        if tau < 1 || before <= 0.0 {
            continue;
        }
        let year = base_year + tau;
        let adds = (per_year as f64 * added / before).round() as u64;
        let mut extra = vec![0usize; per_year as usize];
        for j in 0..adds as usize {
            extra[j % per_year as usize] += 1;
        }
        for (i, n_extra) in extra.into_iter().enumerate() {
            let id = format!("T{year}-{i:05}");
            let home = i % pool.len();
            let own = format!("{}1/00", pool[home]);
            earlier.add(&id, year, [&own]).expect("valid code");
            let gained = (1..=n_extra).map(|k| format!("{}2/00", pool[(home + k) % pool.len()]));
            later
                .add(&id, year, std::iter::once(own.clone()).chain(gained))
                .expect("valid code");
        }
        plan.insert(year, (per_year, adds));
    }
    Ok(RateFixture {
        earlier,
        later,
        window_start_year: base_year + window.start as i32,
        window_len: window.len as u32,
        plan,
    })
}
