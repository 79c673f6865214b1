//! Manhattan-grid mobility model.
//!
//! Intersections sit on a `(blocks_x + 1) × (blocks_y + 1)` lattice with
//! spacing `block_length_m`. Each vehicle drives along the streets at a speed
//! drawn uniformly per block and picks a direction at every intersection:
//! straight on with probability `1 − turn_probability`, otherwise a uniformly
//! chosen turn. U-turns happen only at dead ends. With `blocks_y = 0` the
//! grid degenerates into a single eastbound road.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{derive_kinematics, Trace, TraceSample, TraceSet};
use crate::error::{Error, Result};
use crate::rng::{stream, SimRng, DOMAIN_SYNTH};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub blocks_x: u32,
    pub blocks_y: u32,
    pub block_length_m: f64,
    pub vehicles: u32,
    pub speed_min_mps: f64,
    pub speed_max_mps: f64,
    pub duration_s: f64,
    pub turn_probability: f64,
    pub step_duration_s: f64,
    /// Vehicles enter at a uniformly drawn time in `[0, entry_window_s]`.
    pub entry_window_s: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            blocks_x: 5,
            blocks_y: 5,
            block_length_m: 200.0,
            vehicles: 200,
            speed_min_mps: 8.0,
            speed_max_mps: 14.0,
            duration_s: 600.0,
            turn_probability: 0.5,
            step_duration_s: 1.0,
            entry_window_s: 0.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synthetic traces: {m}")));
        if self.blocks_x == 0 {
            return bad("blocks_x must be positive");
        }
        if !(self.block_length_m >= 10.0) {
            return bad("block_length_m must be at least 10 m");
        }
        if self.vehicles == 0 {
            return bad("vehicles must be positive");
        }
        if !(self.step_duration_s > 0.0) {
            return bad("step_duration_s must be positive");
        }
        if !(self.duration_s > 0.0) {
            return bad("duration_s must be positive");
        }
        if !(self.speed_min_mps >= 1.0 && self.speed_max_mps >= self.speed_min_mps) {
            return bad("speeds must satisfy 1 <= speed_min_mps <= speed_max_mps");
        }
        if !(0.0..=1.0).contains(&self.turn_probability) {
            return bad("turn_probability must lie in [0, 1]");
        }
        if !(self.entry_window_s >= 0.0) {
            return bad("entry_window_s must be non-negative");
        }
        // every trace must survive the default 15 s filter
        if self.duration_s - self.entry_window_s < 15.0 + 2.0 * self.step_duration_s {
            return bad("duration_s - entry_window_s must leave at least 15 s of driving");
        }
        Ok(())
    }

    fn width(&self) -> f64 {
        self.blocks_x as f64 * self.block_length_m
    }

    fn height(&self) -> f64 {
        self.blocks_y as f64 * self.block_length_m
    }

    fn steps(&self) -> i64 {
        (self.duration_s / self.step_duration_s).round() as i64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dir {
    East,
    North,
    West,
    South,
}

impl Dir {
    const ALL: [Dir; 4] = [Dir::East, Dir::North, Dir::West, Dir::South];

    fn delta(self) -> (i64, i64) {
        match self {
            Dir::East => (1, 0),
            Dir::North => (0, 1),
            Dir::West => (-1, 0),
            Dir::South => (0, -1),
        }
    }

    fn reverse(self) -> Dir {
        match self {
            Dir::East => Dir::West,
            Dir::North => Dir::South,
            Dir::West => Dir::East,
            Dir::South => Dir::North,
        }
    }
}

struct Mover<'a> {
    cfg: &'a SynthConfig,
    node: (i64, i64),
    dir: Dir,
    /// metres travelled from `node` along `dir`
    progress: f64,
    speed: f64,
}

impl Mover<'_> {
    fn valid(&self, node: (i64, i64)) -> bool {
        node.0 >= 0
            && node.1 >= 0
            && node.0 <= self.cfg.blocks_x as i64
            && node.1 <= self.cfg.blocks_y as i64
    }

    fn position(&self) -> (f64, f64) {
        let l = self.cfg.block_length_m;
        let (dx, dy) = self.dir.delta();
        (
            self.node.0 as f64 * l + dx as f64 * self.progress,
            self.node.1 as f64 * l + dy as f64 * self.progress,
        )
    }

    fn draw_speed(&mut self, rng: &mut SimRng) {
        let (lo, hi) = (self.cfg.speed_min_mps, self.cfg.speed_max_mps);
        self.speed = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    }

    fn advance(&mut self, rng: &mut SimRng) {
        let l = self.cfg.block_length_m;
        let mut remaining = self.speed * self.cfg.step_duration_s;
        while self.progress + remaining >= l {
            remaining -= l - self.progress;
            let (dx, dy) = self.dir.delta();
            self.node = (self.node.0 + dx, self.node.1 + dy);
            self.progress = 0.0;
            self.dir = self.choose_direction(rng);
            self.draw_speed(rng);
        }
        self.progress += remaining;
    }

    fn choose_direction(&self, rng: &mut SimRng) -> Dir {
        let leads = |d: Dir| {
            let (dx, dy) = d.delta();
            self.valid((self.node.0 + dx, self.node.1 + dy))
        };
        let straight = leads(self.dir).then_some(self.dir);
        let turns: Vec<Dir> = Dir::ALL
            .into_iter()
            .filter(|&d| d != self.dir && d != self.dir.reverse() && leads(d))
            .collect();
        let turn_roll: f64 = rng.random();
        match (straight, turns.is_empty()) {
            (Some(s), true) => s,
            (Some(s), false) if turn_roll >= self.cfg.turn_probability => s,
            (_, false) => turns[rng.random_range(0..turns.len())],
            (None, true) => self.dir.reverse(),
        }
    }
}

/// Generates a reproducible trace set for `cfg` and `seed`, with kinematics
/// already derived.
pub fn generate_synthetic(cfg: &SynthConfig, seed: u64) -> Result<TraceSet> {
    cfg.validate()?;
    let steps = cfg.steps();
    let entry_steps = (cfg.entry_window_s / cfg.step_duration_s).floor() as i64;
    let width = format!("{}", cfg.vehicles - 1).len();
    let h_edges = cfg.blocks_x as u64 * (cfg.blocks_y as u64 + 1);
    let v_edges = (cfg.blocks_x as u64 + 1) * cfg.blocks_y as u64;

    let traces = (0..cfg.vehicles)
        .map(|i| {
            let mut rng = stream(seed, DOMAIN_SYNTH, i as u64);
            let mut m = Mover {
                cfg,
                node: (0, 0),
                dir: Dir::East,
                progress: 0.0,
                speed: cfg.speed_min_mps,
            };
            if cfg.blocks_y == 0 {
                let slack = (cfg.width() - cfg.speed_max_mps * cfg.duration_s).max(0.0);
                let offset = rng.random_range(0.0..=slack);
                let block = (offset / cfg.block_length_m).floor();
                m.node = (block as i64, 0);
                m.progress = offset - block * cfg.block_length_m;
            } else {
                let edge = rng.random_range(0..h_edges + v_edges);
                let forward: bool = rng.random();
                let (node, dir) = if edge < h_edges {
                    let (i, j) = ((edge % cfg.blocks_x as u64) as i64, (edge / cfg.blocks_x as u64) as i64);
                    if forward {
                        ((i, j), Dir::East)
                    } else {
                        ((i + 1, j), Dir::West)
                    }
                } else {
                    let e = edge - h_edges;
                    let cols = cfg.blocks_x as u64 + 1;
                    let (i, j) = ((e % cols) as i64, (e / cols) as i64);
                    if forward {
                        ((i, j), Dir::North)
                    } else {
                        ((i, j + 1), Dir::South)
                    }
                };
                m.node = node;
                m.dir = dir;
                m.progress = rng.random_range(0.0..cfg.block_length_m);
            }
            m.draw_speed(&mut rng);
            let entry = if entry_steps > 0 {
                rng.random_range(0..=entry_steps)
            } else {
                0
            };
            let samples = (entry..steps)
                .map(|k| {
                    if k > entry {
                        m.advance(&mut rng);
                    }
                    let (x, y) = m.position();
                    TraceSample::at(k, x, y)
                })
                .collect();
            Trace {
                vehicle_id: format!("v{i:0width$}"),
                samples,
            }
        })
        .collect();
    derive_kinematics(TraceSet::new(traces, cfg.step_duration_s)?)
}

/// Rectangle covered by the road network of `cfg`.
pub fn grid_bounds(cfg: &SynthConfig) -> super::Bounds {
    super::Bounds {
        min_x: 0.0,
        min_y: 0.0,
        max_x: cfg.width(),
        max_y: cfg.height(),
    }
}
