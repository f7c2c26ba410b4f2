//! Quality-diversity parameter search: CMA-ES over a generator's parameter
//! vector, minimizing a validity/size/novelty penalty and collecting
//! mutually novel accepted samples in an archive.

pub mod cma;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::kernel::{build, default_domain, Aabb, Grid, VoxelSolid};
use crate::lang::{emit, param_map, Generator, ParamMap, Script, UnitTag};
use crate::trace::trace;

pub use cma::{cma_step, population_size, CmaState};

/// Length of a [`Descriptor`].
pub const DESCRIPTOR_LEN: usize = 70;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltyConfig {
    pub invalid_penalty: f64,
    pub size_range: [f64; 2],
    pub cube_half: f64,
    pub w_size: f64,
    pub w_cube: f64,
    pub w_novelty: f64,
    pub epsilon: f64,
    /// Voxel resolution used to evaluate candidates.
    pub resolution: usize,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig {
            invalid_penalty: 1e6,
            size_range: [60.0, 200.0],
            cube_half: 100.0,
            w_size: 1.0,
            w_cube: 1.0,
            w_novelty: 1.0,
            epsilon: 0.05,
            resolution: 64,
        }
    }
}

/// Shape descriptor: AABB extents over the cube side (3), fill fraction of
/// the AABB (1), 4×4×4 occupancy fractions over the AABB (64), normalized
/// log-volume (1), clamped component count over 8 (1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptor(pub Vec<f64>);

impl Descriptor {
    pub fn distance(&self, other: &Descriptor) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn of(v: &VoxelSolid, cube_half: f64) -> Descriptor {
        let mut d = Vec::with_capacity(DESCRIPTOR_LEN);
        let side = 2.0 * cube_half;
        let Some((lo, hi)) = v.index_bounds() else {
            return Descriptor(vec![0.0; DESCRIPTOR_LEN]);
        };
        let n: [usize; 3] = std::array::from_fn(|a| hi[a] - lo[a] + 1);
        let s = v.spacing();
        d.extend((0..3).map(|a| n[a] as f64 * s / side));
        let count = v.count();
        d.push(count as f64 / (n[0] * n[1] * n[2]) as f64);
        let mut cells = [0usize; 64];
        let mut sizes = [0usize; 64];
        let bin = |a: usize, c: usize| (c - lo[a]) * 4 / n[a];
        for k in lo[2]..=hi[2] {
            for j in lo[1]..=hi[1] {
                for i in lo[0]..=hi[0] {
                    let cell = bin(0, i) + 4 * bin(1, j) + 16 * bin(2, k);
                    sizes[cell] += 1;
                    if v.get(i, j, k) {
                        cells[cell] += 1;
                    }
                }
            }
        }
        d.extend(
            cells
                .iter()
                .zip(&sizes)
                .map(|(&c, &t)| if t == 0 { 0.0 } else { c as f64 / t as f64 }),
        );
        d.push((1.0 + v.volume()).ln() / (1.0 + side.powi(3)).ln());
        d.push(v.components().min(8) as f64 / 8.0);
        Descriptor(d)
    }
}

/// An evaluated candidate that produced exactly one valid solid.
#[derive(Debug, Clone)]
pub struct Assessment {
    pub script: Script,
    pub aabb: Aabb,
    pub descriptor: Descriptor,
}

impl Assessment {
    pub fn longest_side(&self) -> f64 {
        self.aabb.longest_side()
    }
}

/// Binds `z` (COUNT parameters rounded) and evaluates the traced script.
/// `None` when tracing or evaluation fails or the result is not exactly one
/// valid solid.
pub fn assess(g: &Generator, z: &[f64], cfg: &PenaltyConfig) -> Option<Assessment> {
    let t = trace(g, &bound_params(g, z)).ok()?;
    let script = t.to_script();
    let model = build(&script).ok()?;
    let bound = model.bbox()?;
    // evaluate on a domain that always contains the solid so that oversize
    // shapes get the soft penalty rather than a clipped result
    let domain = default_domain().union(&bound.inflated(bound.longest_side() * 0.05 + 1.0));
    let grid = Grid::over(&domain, cfg.resolution);
    let (v, report) = model.evaluate_on(&grid);
    if !report.success {
        return None;
    }
    let aabb = model.measure_aabb(cfg.resolution)?;
    let descriptor = Descriptor::of(&v, cfg.cube_half);
    Some(Assessment {
        script,
        aabb,
        descriptor,
    })
}

/// Parameter map for `z`; COUNT parameters are rounded to integers.
pub fn bound_params(g: &Generator, z: &[f64]) -> ParamMap {
    let values: Vec<f64> = g
        .params
        .iter()
        .zip(z)
        .map(|(p, &v)| {
            if p.unit_tag == UnitTag::Count {
                v.round()
            } else {
                v
            }
        })
        .collect();
    param_map(g, &values)
}

/// Soft penalty of an assessed candidate against the archive.
pub fn soft_penalty(a: &Assessment, archive: &Archive, cfg: &PenaltyConfig) -> f64 {
    let l = a.longest_side();
    let [lo, hi] = cfg.size_range;
    let size = (lo - l).max(0.0) + (l - hi).max(0.0);
    let cube: f64 = (0..3)
        .map(|k| {
            (a.aabb.max[k] - cfg.cube_half).max(0.0) + (-cfg.cube_half - a.aabb.min[k]).max(0.0)
        })
        .sum();
    let d_min = archive.min_distance(&a.descriptor);
    let novelty = if d_min.is_finite() {
        (cfg.epsilon - d_min).max(0.0) / cfg.epsilon
    } else {
        0.0
    };
    cfg.w_size * size + cfg.w_cube * cube + cfg.w_novelty * novelty
}

pub fn penalty(g: &Generator, z: &[f64], archive: &Archive, cfg: &PenaltyConfig) -> f64 {
    assert_eq!(z.len(), g.params.len(), "parameter vector dimension");
    match assess(g, z, cfg) {
        Some(a) => soft_penalty(&a, archive, cfg),
        None => cfg.invalid_penalty,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub z: Vec<f64>,
    pub descriptor: Descriptor,
    /// Traced script text.
    pub script: String,
    pub longest_side: f64,
    pub penalty: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Archive {
    pub accepted: Vec<Sample>,
    pub epsilon: f64,
}

impl Archive {
    pub fn new(epsilon: f64) -> Archive {
        assert!(epsilon > 0.0);
        Archive {
            accepted: Vec::new(),
            epsilon,
        }
    }

    pub fn len(&self) -> usize {
        self.accepted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accepted.is_empty()
    }

    /// Distance to the nearest archived descriptor; infinite when empty.
    pub fn min_distance(&self, d: &Descriptor) -> f64 {
        self.accepted
            .iter()
            .map(|s| s.descriptor.distance(d))
            .fold(f64::INFINITY, f64::min)
    }

    /// Inserts when at least `epsilon` away from every member.
    pub fn try_insert(&mut self, s: Sample) -> bool {
        if self.min_distance(&s.descriptor) < self.epsilon {
            return false;
        }
        self.accepted.push(s);
        true
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub archive: Archive,
    pub evaluations: usize,
    pub generations: usize,
    pub restarts: usize,
    /// Set when the generator is invalid at its defaults.
    pub zero_accepted: bool,
}

/// Generations without an acceptance before CMA-ES restarts from defaults.
const STALL_GENERATIONS: usize = 60;

/// Collects up to `n` zero-penalty samples within `budget` candidate
/// evaluations. CMA-ES starts at the defaults with per-coordinate scale
/// `0.2·|default| + 1` and restarts there after every acceptance.
pub fn sample_generator(
    g: &Generator,
    n: usize,
    cfg: &PenaltyConfig,
    budget: usize,
    seed: u64,
) -> SampleOutcome {
    let defaults = g.defaults();
    let mut out = SampleOutcome {
        archive: Archive::new(cfg.epsilon),
        evaluations: 0,
        generations: 0,
        restarts: 0,
        zero_accepted: false,
    };
    let Some(first) = assess(g, &defaults, cfg) else {
        out.zero_accepted = true;
        return out;
    };
    let admit = |archive: &mut Archive, z: &[f64], a: &Assessment| {
        let p = soft_penalty(a, archive, cfg);
        p == 0.0
            && archive.try_insert(Sample {
                z: z.to_vec(),
                descriptor: a.descriptor.clone(),
                script: emit(&a.script),
                longest_side: a.longest_side(),
                penalty: p,
            })
    };
    admit(&mut out.archive, &defaults, &first);
    if defaults.is_empty() {
        return out;
    }

    let scales: Vec<f64> = defaults.iter().map(|d| 0.2 * d.abs() + 1.0).collect();
    let fresh = || CmaState::with_scales(DVector::from_vec(defaults.clone()), &scales);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = fresh();
    let mut stall = 0;
    while out.archive.len() < n && out.evaluations < budget {
        let mut xs = state.ask(&mut rng);
        xs.truncate(budget - out.evaluations);
        let assessed: Vec<Option<Assessment>> = xs
            .par_iter()
            .map(|x| assess(g, x.as_slice(), cfg))
            .collect();
        out.evaluations += xs.len();
        let values: Vec<f64> = assessed
            .iter()
            .map(|a| {
                a.as_ref()
                    .map_or(cfg.invalid_penalty, |a| soft_penalty(a, &out.archive, cfg))
            })
            .collect();
        let mut order: Vec<usize> = (0..xs.len()).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let mut accepted_any = false;
        for &i in &order {
            if out.archive.len() >= n || values[i] > 0.0 {
                break;
            }
            if let Some(a) = &assessed[i] {
                accepted_any |= admit(&mut out.archive, xs[i].as_slice(), a);
            }
        }
        out.generations += 1;
        if xs.len() < state.lambda() {
            break;
        }
        stall = if accepted_any { 0 } else { stall + 1 };
        if accepted_any || stall >= STALL_GENERATIONS || !(state.sigma > 1e-12) {
            state = fresh();
            out.restarts += 1;
            stall = 0;
        } else {
            state.tell(&xs, &values);
        }
    }
    out
}

#[cfg(test)]
mod tests;
