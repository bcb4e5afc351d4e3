//! Synthetic road networks with a planted volume function.
//!
//! Intersections sit on a square lattice; a random spanning tree plus extra
//! lattice edges forms the street graph and its line graph is the
//! node-centric road graph. Attributes derive from a few smooth spatial
//! fields, and true volumes from a known function of a segment's own
//! attributes and those of its neighbors.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;

use chrono::{Days, NaiveDate};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::{CountRecord, DatasetBundle, Provenance};
use crate::error::{Error, Result};
use crate::graph::{
    compute_adb, encode_features, line_graph_edges, FeatureColumn, FeatureSchema, LabelSet,
    RawTable, RoadGraph,
};
use crate::rng::{SeedTree, StreamRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LabelSampling {
    /// Uniform random sample of segments.
    Uniform,
    /// One segment drawn from each of K equal-size strata of true volume.
    #[default]
    Stratified,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub n_nodes: usize,
    pub label_fraction: f64,
    /// Standard deviation of the spatially correlated volume noise, in
    /// units of the planted score range.
    pub noise: f64,
    pub days: usize,
    pub min_volume: f64,
    pub max_volume: f64,
    pub label_sampling: LabelSampling,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_nodes: 2000,
            label_fraction: 0.01,
            noise: 0.03,
            days: 30,
            min_volume: 2.0,
            max_volume: 818.0,
            label_sampling: LabelSampling::Stratified,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn label_count(&self) -> usize {
        (self.label_fraction * self.n_nodes as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.label_fraction > 0.0 && self.label_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "label_fraction {} outside (0, 1]",
                self.label_fraction
            )));
        }
        if self.n_nodes < 12 {
            return Err(Error::Config("generator needs at least 12 segments".into()));
        }
        if self.label_count() < 5 {
            return Err(Error::Config(format!(
                "{} labeled segments cannot fill 5 traffic classes",
                self.label_count()
            )));
        }
        if self.days == 0 {
            return Err(Error::Config("days must be positive".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config("noise must be finite and non-negative".into()));
        }
        if !(self.min_volume > 0.0 && self.max_volume > self.min_volume) {
            return Err(Error::Config("volume range must satisfy 0 < min < max".into()));
        }
        Ok(())
    }
}

pub const ROAD_TYPES: [&str; 5] = ["residential", "tertiary", "secondary", "primary", "trunk"];
pub const INFRASTRUCTURE: [&str; 4] = ["none", "shared_path", "painted_lane", "separated_lane"];
pub const LTS: [&str; 4] = ["1", "2", "3", "4"];

pub fn default_schema() -> FeatureSchema {
    FeatureSchema::new(vec![
        FeatureColumn::categorical("road_type", &ROAD_TYPES),
        FeatureColumn::continuous("slope", Some("%")),
        FeatureColumn::continuous("speed_limit", Some("km/h")),
        FeatureColumn::categorical("lts", &LTS),
        FeatureColumn::categorical("infrastructure", &INFRASTRUCTURE),
    ])
    .expect("static schema is valid")
}

/// Sum of random cosine waves, rescaled to [0, 1] over `points`.
struct SmoothField {
    waves: Vec<([f64; 2], f64, f64)>,
}

impl SmoothField {
    fn new(rng: &mut StreamRng, components: usize, length_scale: f64) -> Self {
        let freq = Normal::new(0.0, TAU / length_scale).expect("positive scale");
        let waves = (0..components)
            .map(|_| {
                let w = [freq.sample(rng), freq.sample(rng)];
                (w, rng.random_range(0.0..TAU), rng.random_range(0.5..1.0))
            })
            .collect();
        Self { waves }
    }

    fn raw(&self, p: [f64; 2]) -> f64 {
        self.waves
            .iter()
            .map(|(w, phase, amp)| amp * (w[0] * p[0] + w[1] * p[1] + phase).cos())
            .sum()
    }

    fn sample(&self, points: &[[f64; 2]]) -> Vec<f64> {
        min_max(&points.iter().map(|&p| self.raw(p)).collect::<Vec<_>>())
    }
}

fn min_max(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        v.iter().map(|x| (x - lo) / (hi - lo)).collect()
    } else {
        vec![0.5; v.len()]
    }
}

/// Street segments over a lattice: a random spanning tree grown from the
/// centre, then extra lattice edges until exactly `n` segments exist.
/// Returns `(segments as intersection pairs, intersection coordinates)`.
fn street_network(n: usize, rng: &mut StreamRng) -> (Vec<(usize, usize)>, Vec<[f64; 2]>) {
    let side = ((n as f64 / 1.25).sqrt().ceil() as usize + 2).max(4);
    let id = |x: usize, y: usize| y * side + x;
    let lattice_nbrs = |v: usize| {
        let (x, y) = (v % side, v / side);
        let mut out = Vec::with_capacity(4);
        if x > 0 {
            out.push(id(x - 1, y));
        }
        if x + 1 < side {
            out.push(id(x + 1, y));
        }
        if y > 0 {
            out.push(id(x, y - 1));
        }
        if y + 1 < side {
            out.push(id(x, y + 1));
        }
        out
    };
    let target_vertices = ((n as f64 / 1.25).round() as usize + 1).min(side * side);
    let start = id(side / 2, side / 2);
    let mut inside = BTreeSet::from([start]);
    let mut frontier: Vec<(usize, usize)> = lattice_nbrs(start).into_iter().map(|u| (start, u)).collect();
    let mut segments: BTreeSet<(usize, usize)> = BTreeSet::new();

    let grow = |inside: &mut BTreeSet<usize>,
                frontier: &mut Vec<(usize, usize)>,
                segments: &mut BTreeSet<(usize, usize)>,
                rng: &mut StreamRng|
     -> bool {
        while !frontier.is_empty() {
            let k = rng.random_range(0..frontier.len());
            let (a, b) = frontier.swap_remove(k);
            if inside.contains(&b) {
                continue;
            }
            inside.insert(b);
            segments.insert((a.min(b), a.max(b)));
            frontier.extend(lattice_nbrs(b).into_iter().filter(|u| !inside.contains(u)).map(|u| (b, u)));
            return true;
        }
        false
    };

    while inside.len() < target_vertices && segments.len() < n {
        if !grow(&mut inside, &mut frontier, &mut segments, rng) {
            break;
        }
    }
    loop {
        let mut extra: Vec<(usize, usize)> = inside
            .iter()
            .flat_map(|&v| lattice_nbrs(v).into_iter().map(move |u| (v.min(u), v.max(u))))
            .filter(|&(a, b)| inside.contains(&a) && inside.contains(&b))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .filter(|e| !segments.contains(e))
            .collect();
        extra.shuffle(rng);
        for e in extra {
            if segments.len() >= n {
                break;
            }
            segments.insert(e);
        }
        if segments.len() >= n || !grow(&mut inside, &mut frontier, &mut segments, rng) {
            break;
        }
    }
    let coords = (0..side * side)
        .map(|v| [(v % side) as f64 / (side - 1) as f64, (v / side) as f64 / (side - 1) as f64])
        .collect();
    let mut segs: Vec<(usize, usize)> = segments.into_iter().collect();
    segs.shuffle(rng);
    (segs, coords)
}

/// Builds a bundle: features for every segment, daily count streams for the
/// labeled ones, and true ADB for all segments.
pub fn generate_synthetic_dataset(config: &GeneratorConfig) -> Result<DatasetBundle> {
    config.validate()?;
    let seeds = SeedTree::new(config.seed).child("generator");
    let mut net_rng = seeds.rng("network");
    let (segments, coords) = street_network(config.n_nodes, &mut net_rng);
    let n = segments.len();
    if n != config.n_nodes {
        return Err(Error::Contract(format!(
            "lattice produced {n} segments, wanted {}",
            config.n_nodes
        )));
    }
    let mid: Vec<[f64; 2]> = segments
        .iter()
        .map(|&(a, b)| [(coords[a][0] + coords[b][0]) / 2.0, (coords[a][1] + coords[b][1]) / 2.0])
        .collect();

    let mut field_rng = seeds.rng("fields");
    let corridor = SmoothField::new(&mut field_rng, 6, 0.9).sample(&mid);
    let terrain = SmoothField::new(&mut field_rng, 5, 1.2).sample(&mid);
    let provision = SmoothField::new(&mut field_rng, 6, 0.7).sample(&mid);
    let residual = SmoothField::new(&mut field_rng, 8, 0.4).sample(&mid);

    let mut attr_rng = seeds.rng("attributes");
    let jitter = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rows = Vec::with_capacity(n);
    let mut score = Vec::with_capacity(n);
    for i in 0..n {
        let c = (corridor[i] + 0.04 * jitter.sample(&mut attr_rng)).clamp(0.0, 1.0);
        let road = ((c * 5.0) as usize).min(4);
        let slope = (12.0 * terrain[i].powf(1.5) + 0.3 * jitter.sample(&mut attr_rng).abs()).max(0.0);
        let speed = (30.0 + 50.0 * c + 2.0 * jitter.sample(&mut attr_rng)).clamp(20.0, 90.0);
        let lts = match speed {
            s if s < 40.0 => 0,
            s if s < 55.0 => 1,
            s if s < 70.0 => 2,
            _ => 3,
        };
        let p = (0.35 * provision[i] + 0.65 * c + 0.05 * jitter.sample(&mut attr_rng)).clamp(0.0, 1.0);
        let infra = ((p * 4.0) as usize).min(3);
        rows.push(vec![
            ROAD_TYPES[road].to_string(),
            format!("{slope:.2}"),
            format!("{speed:.1}"),
            LTS[lts].to_string(),
            INFRASTRUCTURE[infra].to_string(),
        ]);
        // Cyclists favour busy corridors with good provision and avoid hills.
        score.push(c + 0.3 * infra as f64 / 3.0 - 0.2 * slope / 12.0);
    }

    let ids: Vec<String> = (0..n).map(|i| format!("seg{i:05}")).collect();
    let edges = line_graph_edges(&segments);
    let schema = default_schema();
    let raw = RawTable {
        columns: schema.column_names().iter().map(|s| s.to_string()).collect(),
        rows,
    };
    let features = encode_features(&raw, &schema)?;
    let graph = RoadGraph::new(ids.clone(), edges, features)?;

    let mut noise_rng = seeds.rng("volume_noise");
    let planted: Vec<f64> = (0..n)
        .map(|i| {
            let nb = graph.neighbors(i);
            let nb_mean = if nb.is_empty() {
                score[i]
            } else {
                nb.iter().map(|&j| score[j]).sum::<f64>() / nb.len() as f64
            };
            let spatial = residual[i] - 0.5;
            0.7 * score[i] + 0.3 * nb_mean + config.noise * (2.0 * spatial + jitter.sample(&mut noise_rng))
        })
        .collect();
    let u = min_max(&planted);
    let lambda: Vec<f64> = u
        .iter()
        .map(|&ui| config.min_volume + (config.max_volume - config.min_volume) * ui)
        .collect();

    let mut count_rng = seeds.rng("counts");
    let start = NaiveDate::from_ymd_opt(2023, 3, 1).expect("valid date");
    let dates: Vec<String> = (0..config.days)
        .map(|d| {
            start
                .checked_add_days(Days::new(d as u64))
                .expect("in range")
                .format("%Y-%m-%d")
                .to_string()
        })
        .collect();
    let mut truth = Vec::with_capacity(n);
    let mut streams = Vec::with_capacity(n);
    for &l in &lambda {
        let pois = Poisson::new(l).map_err(|e| Error::Contract(format!("poisson rate {l}: {e}")))?;
        let counts: Vec<u64> = (0..config.days).map(|_| pois.sample(&mut count_rng) as u64).collect();
        truth.push(compute_adb(&counts)? as f64);
        streams.push(counts);
    }

    let k = config.label_count();
    let mut label_rng = seeds.rng("labels");
    let mut labeled: Vec<usize> = match config.label_sampling {
        LabelSampling::Uniform => rand::seq::index::sample(&mut label_rng, n, k).into_vec(),
        LabelSampling::Stratified => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| truth[a].total_cmp(&truth[b]).then(a.cmp(&b)));
            (0..k)
                .map(|s| {
                    let lo = s * n / k;
                    let hi = (s + 1) * n / k;
                    order[label_rng.random_range(lo..hi)]
                })
                .collect()
        }
    };
    labeled.sort_unstable();

    let mut counts = Vec::new();
    let mut by_node = BTreeMap::new();
    for &i in &labeled {
        for (d, &c) in streams[i].iter().enumerate() {
            counts.push(CountRecord {
                segment_id: ids[i].clone(),
                date: dates[d].clone(),
                count: c,
            });
        }
        by_node.insert(i, compute_adb(&streams[i])? as f64);
    }
    let labels = LabelSet::new(labeled.clone(), labeled.iter().map(|i| by_node[i]).collect(), n)?;

    Ok(DatasetBundle {
        graph,
        schema,
        labels,
        raw,
        counts,
        ground_truth: Some(truth),
        provenance: Provenance::Generator(config.clone()),
    })
}
