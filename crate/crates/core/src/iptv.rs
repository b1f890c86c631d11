//! Synthetic IPTV dataset with planted taste groups.
//!
//! Users and programs are assigned to groups (a program's group follows its
//! genre). Group-structured relations draw each candidate pair with
//! probability `p_in` inside a group and `p_out` across groups, where
//! `p_in / p_out` is the configured ratio and the overall expected density
//! matches the configured density. Secondary relations are uniform.

use std::path::Path;

use log::warn;
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{save_dataset, Attributes, Schema, SemanticDataset};

pub const SCHEMA: &str = "\
ENTITY user
ENTITY program
ENTITY genre
ENTITY series
ENTITY tag
ENTITY location
ENTITY title
REL view user program positive asymmetric
REL flashback user program unweighted asymmetric
REL rating user program weighted asymmetric
REL record user program unweighted asymmetric
REL reminder user program unweighted asymmetric
REL message user user positive asymmetric
REL buddy user user unweighted symmetric
REL isgenre program genre unweighted asymmetric
REL inseries program series unweighted asymmetric
REL located user location unweighted asymmetric
REL hastitle program title unweighted asymmetric
REL tag user tag program unweighted asymmetric
REL shared user user program unweighted asymmetric
";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Densities {
    pub view: f64,
    pub flashback: f64,
    pub rating: f64,
    pub record: f64,
    pub reminder: f64,
    pub message: f64,
    pub buddy: f64,
    pub tag: f64,
    pub shared: f64,
    /// Probability that a program belongs to some series.
    pub series: f64,
    /// Probability that a program is linked to its genre.
    pub genre: f64,
    /// Probability that a program is linked to its title words.
    pub title: f64,
    /// Probability that a user is linked to a location.
    pub location: f64,
}

impl Default for Densities {
    fn default() -> Self {
        Densities {
            view: 0.02,
            flashback: 0.004,
            rating: 0.008,
            record: 0.004,
            reminder: 0.004,
            message: 0.002,
            buddy: 0.004,
            tag: 0.001,
            shared: 0.000_002,
            series: 0.5,
            genre: 1.0,
            title: 1.0,
            location: 1.0,
        }
    }
}

impl Densities {
    pub fn zero() -> Self {
        Densities {
            view: 0.0,
            flashback: 0.0,
            rating: 0.0,
            record: 0.0,
            reminder: 0.0,
            message: 0.0,
            buddy: 0.0,
            tag: 0.0,
            shared: 0.0,
            series: 0.0,
            genre: 0.0,
            title: 0.0,
            location: 0.0,
        }
    }

    fn named(&self) -> [(&'static str, f64); 13] {
        [
            ("view", self.view),
            ("flashback", self.flashback),
            ("rating", self.rating),
            ("record", self.record),
            ("reminder", self.reminder),
            ("message", self.message),
            ("buddy", self.buddy),
            ("tag", self.tag),
            ("shared", self.shared),
            ("series", self.series),
            ("genre", self.genre),
            ("title", self.title),
            ("location", self.location),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IptvGenParams {
    pub users: usize,
    pub programs: usize,
    pub genres: usize,
    pub series: usize,
    pub tags: usize,
    pub locations: usize,
    /// Distinct title words.
    pub titles: usize,
    /// Taste groups; a program's group is its genre modulo this count.
    pub groups: usize,
    /// Within-group over cross-group density.
    pub group_ratio: f64,
    /// Zipf exponent of program popularity; 0 makes programs equally
    /// popular.
    pub popularity: f64,
    pub densities: Densities,
    pub seed: u64,
}

impl Default for IptvGenParams {
    fn default() -> Self {
        IptvGenParams {
            users: 1000,
            programs: 500,
            genres: 8,
            series: 50,
            tags: 40,
            locations: 20,
            titles: 200,
            groups: 8,
            group_ratio: 100.0,
            popularity: 0.5,
            densities: Densities::default(),
            seed: 0,
        }
    }
}

impl IptvGenParams {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("users", self.users),
            ("programs", self.programs),
            ("genres", self.genres),
            ("series", self.series),
            ("tags", self.tags),
            ("locations", self.locations),
            ("titles", self.titles),
            ("groups", self.groups),
        ];
        for (name, c) in counts {
            if c == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be at least 1")));
            }
        }
        for (name, d) in self.densities.named() {
            if !(0.0..=1.0).contains(&d) {
                return Err(Error::InvalidArgument(format!("density for {name} must lie in [0, 1], got {d}")));
            }
        }
        if !(self.popularity >= 0.0 && self.popularity.is_finite()) {
            return Err(Error::InvalidArgument("popularity must be finite and nonnegative".into()));
        }
        if !(self.group_ratio >= 1.0 && self.group_ratio.is_finite()) {
            return Err(Error::InvalidArgument("group_ratio must be finite and at least 1".into()));
        }
        Ok(())
    }

    pub fn schema() -> Schema {
        Schema::parse(SCHEMA, Path::new("<iptv>")).expect("built-in schema parses")
    }
}

/// (p_in, p_out) giving overall density `d` when a fraction `s` of pairs is
/// within-group.
fn group_probabilities(d: f64, s: f64, ratio: f64) -> (f64, f64) {
    let p_out = d / (s * ratio + (1.0 - s));
    let p_in = p_out * ratio;
    if p_in > 1.0 {
        warn!("within-group probability {p_in:.3} exceeds 1; clamped");
    }
    (p_in.min(1.0), p_out)
}

fn id(prefix: &str, i: usize) -> String {
    format!("{prefix}{i}")
}

fn attrs(pairs: &[(&str, String)]) -> Attributes {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

/// Generates the dataset. Entities are listed explicitly, so they survive
/// even when every density is zero.
pub fn generate(params: &IptvGenParams) -> Result<SemanticDataset> {
    params.validate()?;
    let p = params;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut ds = SemanticDataset::new(IptvGenParams::schema());

    let user_group: Vec<usize> = (0..p.users).map(|_| rng.gen_range(0..p.groups)).collect();
    let program_genre: Vec<usize> = (0..p.programs).map(|_| rng.gen_range(0..p.genres)).collect();
    let program_group: Vec<usize> = program_genre.iter().map(|g| g % p.groups).collect();
    // Popularity multipliers with mean 1, assigned to programs in random
    // order so they are independent of the groups.
    let mut popularity: Vec<f64> = (1..=p.programs).map(|r| (r as f64).powf(-p.popularity)).collect();
    let mean = popularity.iter().sum::<f64>() / p.programs as f64;
    popularity.iter_mut().for_each(|w| *w /= mean);
    popularity.shuffle(&mut rng);

    for (u, g) in user_group.iter().enumerate() {
        ds.add_entity("user", &id("u", u), attrs(&[("group", g.to_string())]))?;
    }
    for (i, g) in program_group.iter().enumerate() {
        ds.add_entity("program", &id("p", i), attrs(&[("group", g.to_string())]))?;
    }
    for (t, prefix, n) in [
        ("genre", "g", p.genres),
        ("series", "s", p.series),
        ("tag", "t", p.tags),
        ("location", "l", p.locations),
        ("title", "w", p.titles),
    ] {
        for i in 0..n {
            ds.add_entity(t, &id(prefix, i), Attributes::new())?;
        }
    }

    let users: Vec<String> = (0..p.users).map(|u| id("u", u)).collect();
    let programs: Vec<String> = (0..p.programs).map(|i| id("p", i)).collect();
    let none = Attributes::new;

    // Fraction of user–program and user–user pairs that share a group.
    let mut ucount = vec![0usize; p.groups];
    let mut pcount = vec![0usize; p.groups];
    user_group.iter().for_each(|&g| ucount[g] += 1);
    program_group.iter().for_each(|&g| pcount[g] += 1);
    let up_pairs = (p.users * p.programs) as f64;
    let s_up = ucount.iter().zip(&pcount).map(|(a, b)| (a * b) as f64).sum::<f64>() / up_pairs;
    let uu_pairs = (p.users * p.users.saturating_sub(1)) as f64;
    let s_uu = if uu_pairs > 0.0 {
        ucount.iter().map(|&a| (a * a.saturating_sub(1)) as f64).sum::<f64>() / uu_pairs
    } else {
        0.0
    };

    let feasible = |name: &str, d: f64, pairs: f64| {
        if d > 0.0 && d * pairs < 1.0 {
            warn!("density {d} for `{name}` expects fewer than one edge; relation left empty");
            false
        } else {
            d > 0.0
        }
    };

    for rel in ["view", "flashback", "rating", "record", "reminder"] {
        let d = match rel {
            "view" => p.densities.view,
            "flashback" => p.densities.flashback,
            "rating" => p.densities.rating,
            "record" => p.densities.record,
            _ => p.densities.reminder,
        };
        if !feasible(rel, d, up_pairs) {
            continue;
        }
        let (p_in, p_out) = group_probabilities(d, s_up, p.group_ratio);
        for u in 0..p.users {
            for i in 0..p.programs {
                let same = user_group[u] == program_group[i];
                if rng.gen::<f64>() >= popularity[i] * if same { p_in } else { p_out } {
                    continue;
                }
                let weight = match rel {
                    // Viewing counts: 1 + geometric.
                    "view" => {
                        let mut c = 1.0;
                        while rng.gen::<f64>() < 0.5 {
                            c += 1.0;
                        }
                        Some(c)
                    }
                    "rating" => {
                        let r: f64 = if same { rng.gen_range(3..=5) } else { rng.gen_range(1..=3) } as f64;
                        Some(r)
                    }
                    _ => None,
                };
                ds.add_edge(rel, &[&users[u], &programs[i]], weight, none())?;
            }
        }
    }

    for rel in ["message", "buddy"] {
        let d = if rel == "message" { p.densities.message } else { p.densities.buddy };
        if !feasible(rel, d, uu_pairs) {
            continue;
        }
        let (p_in, p_out) = group_probabilities(d, s_uu, p.group_ratio);
        for a in 0..p.users {
            for b in 0..p.users {
                // buddy is symmetric: one draw per unordered pair.
                if a == b || (rel == "buddy" && b < a) {
                    continue;
                }
                let pr = if user_group[a] == user_group[b] { p_in } else { p_out };
                let pr = if rel == "buddy" { (2.0 * pr).min(1.0) } else { pr };
                if rng.gen::<f64>() >= pr {
                    continue;
                }
                let weight = (rel == "message").then(|| rng.gen_range(1..=5) as f64);
                ds.add_edge(rel, &[&users[a], &users[b]], weight, none())?;
            }
        }
    }

    // Tag assignments follow taste groups; the tag itself is drawn from the
    // tags reserved for the program's group when there are enough tags.
    if feasible("tag", p.densities.tag, up_pairs) {
        let (p_in, p_out) = group_probabilities(p.densities.tag, s_up, p.group_ratio);
        for u in 0..p.users {
            for i in 0..p.programs {
                let same = user_group[u] == program_group[i];
                if rng.gen::<f64>() >= popularity[i] * if same { p_in } else { p_out } {
                    continue;
                }
                let t = if p.tags >= p.groups {
                    let per = p.tags / p.groups;
                    program_group[i] * per + rng.gen_range(0..per)
                } else {
                    rng.gen_range(0..p.tags)
                };
                ds.add_edge("tag", &[&users[u], &id("t", t), &programs[i]], None, none())?;
            }
        }
    }

    // Shared events: uniform over (user, user, program) triples.
    let triples = uu_pairs * p.programs as f64;
    if feasible("shared", p.densities.shared, triples) && p.users >= 2 {
        let m = (p.densities.shared * triples).round() as usize;
        for _ in 0..m {
            let pick = sample(&mut rng, p.users, 2);
            let i = rng.gen_range(0..p.programs);
            ds.add_edge("shared", &[&users[pick.index(0)], &users[pick.index(1)], &programs[i]], None, none())?;
        }
    }

    // Secondary structure: uniform. A link probability of 1 draws nothing,
    // so the random stream does not depend on it.
    let keep = |rng: &mut ChaCha8Rng, p: f64| p >= 1.0 || rng.gen::<f64>() < p;
    for i in 0..p.programs {
        if keep(&mut rng, p.densities.genre) {
            ds.add_edge("isgenre", &[&programs[i], &id("g", program_genre[i])], None, none())?;
        }
        if rng.gen::<f64>() < p.densities.series {
            let s = rng.gen_range(0..p.series);
            ds.add_edge("inseries", &[&programs[i], &id("s", s)], None, none())?;
        }
        if keep(&mut rng, p.densities.title) {
            let words = sample(&mut rng, p.titles, p.titles.min(2));
            for w in words.iter() {
                ds.add_edge("hastitle", &[&programs[i], &id("w", w)], None, none())?;
            }
        }
    }
    for user in &users {
        if keep(&mut rng, p.densities.location) {
            let l = rng.gen_range(0..p.locations);
            ds.add_edge("located", &[user, &id("l", l)], None, none())?;
        }
    }
    Ok(ds)
}

/// Writes `<dir>/iptv.schema` and `<dir>/iptv.tsv`; returns their paths.
pub fn write(params: &IptvGenParams, dir: &Path) -> Result<(std::path::PathBuf, std::path::PathBuf)> {
    let ds = generate(params)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let schema = dir.join("iptv.schema");
    let data = dir.join("iptv.tsv");
    std::fs::write(&schema, ds.schema().to_text()).map_err(|e| Error::io(&schema, e))?;
    save_dataset(&ds, &data)?;
    Ok((schema, data))
}
