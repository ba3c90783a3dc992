//! Analytic mmWave throughput world used as a digital-twin oracle.
//!
//! UEs move around a rectangular 400 m x 250 m loop (1,300 m perimeter) served by
//! three base stations. Throughput decays exponentially with distance to the
//! nearest station, is scaled by mobility mode and heading, and collapses inside
//! blockage zones.

use std::io::Write;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::dataset::{Origin, Sample};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Column layout of synthetic samples. Indices are feature positions.
pub mod schema {
    pub const LONGITUDE: usize = 0;
    pub const LATITUDE: usize = 1;
    pub const POS_X: usize = 2;
    pub const POS_Y: usize = 3;
    pub const SPEED: usize = 4;
    pub const COMPASS: usize = 5;
    pub const MODE: usize = 6;
    pub const TRAJECTORY: usize = 7;
    pub const NR_RSRP: usize = 8;
    pub const NR_RSRQ: usize = 9;
    pub const NR_SINR: usize = 10;
    pub const LTE_RSSI: usize = 11;
    pub const LTE_RSRP: usize = 12;
    pub const LTE_RSRQ: usize = 13;
    pub const LTE_RSSNR: usize = 14;
    pub const TOWER_ID: usize = 15;
    pub const TOWER_BEARING: usize = 16;
    pub const HEADING_OFFSET: usize = 17;
    pub const LOOP_PROGRESS: usize = 18;

    pub const FEATURE_COUNT: usize = 19;

    pub const COLUMNS: [&str; FEATURE_COUNT] = [
        "longitude",
        "latitude",
        "pos_x",
        "pos_y",
        "moving_speed",
        "compass_direction",
        "mobility_mode",
        "trajectory_direction",
        "nr_ssRsrp",
        "nr_ssRsrq",
        "nr_ssSinr",
        "lte_rssi",
        "lte_rsrp",
        "lte_rsrq",
        "lte_rssnr",
        "tower_id",
        "tower_bearing",
        "heading_offset",
        "loop_progress",
    ];

    pub const TARGET: &str = "throughput";

    /// Categorical codes of the `mobility_mode` column.
    pub const MODES: [(&str, i64); 2] = [("walking", 0), ("driving", 1)];
}

const ORIGIN_LAT: f64 = 44.9740;
const ORIGIN_LON: f64 = -93.2760;
const METERS_PER_DEG_LAT: f64 = 111_132.0;

/// Axis-aligned rectangle that multiplies throughput by `attenuation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blockage {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub attenuation: f64,
}

impl Blockage {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.y_min..=self.y_max).contains(&y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwinWorld {
    pub base_stations: Vec<(f64, f64)>,
    pub blockages: Vec<Blockage>,
    pub walking_factor: f64,
    pub driving_factor: f64,
    pub peak_rate: f64,
    pub range_scale: f64,
    pub noise_std: f64,
    /// Max throughput loss when heading directly away from the serving station.
    pub orientation_loss: f64,
    pub loop_width: f64,
    pub loop_height: f64,
    pub position_jitter: f64,
    pub driving_probability: f64,
}

impl Default for TwinWorld {
    fn default() -> Self {
        let blockage = |x_min, y_min, x_max, y_max| Blockage {
            x_min,
            y_min,
            x_max,
            y_max,
            attenuation: 0.25,
        };
        TwinWorld {
            base_stations: vec![(60.0, -40.0), (440.0, 90.0), (180.0, 290.0)],
            blockages: vec![
                blockage(230.0, -30.0, 300.0, 30.0),
                blockage(-30.0, 120.0, 30.0, 190.0),
            ],
            walking_factor: 1.0,
            driving_factor: 0.8,
            peak_rate: 2000.0,
            range_scale: 300.0,
            noise_std: 50.0,
            orientation_loss: 0.3,
            loop_width: 400.0,
            loop_height: 250.0,
            position_jitter: 4.0,
            driving_probability: 0.4,
        }
    }
}

/// The physically meaningful part of a sample; everything else is rendered from it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub x: f64,
    pub y: f64,
    pub speed: f64,
    /// Degrees clockwise from north.
    pub compass: f64,
    pub driving: bool,
    pub counter_clockwise: bool,
}

impl Scenario {
    /// Extracts the scenario from a feature vector in the synthetic schema.
    ///
    /// Continuous codes are snapped: mode and trajectory round to the nearest of {0, 1}.
    pub fn from_features(features: &[f64]) -> Result<Self> {
        if features.len() != schema::FEATURE_COUNT {
            return Err(Error::Shape {
                expected: schema::FEATURE_COUNT,
                actual: features.len(),
            });
        }
        Ok(Scenario {
            x: features[schema::POS_X],
            y: features[schema::POS_Y],
            speed: features[schema::SPEED].max(0.0),
            compass: features[schema::COMPASS].rem_euclid(360.0),
            driving: features[schema::MODE] >= 0.5,
            counter_clockwise: features[schema::TRAJECTORY] >= 0.5,
        })
    }
}

fn bearing_deg(from: (f64, f64), to: (f64, f64)) -> f64 {
    // Compass bearing: 0 = +y (north), 90 = +x (east).
    (to.0 - from.0).atan2(to.1 - from.1).to_degrees().rem_euclid(360.0)
}

fn angle_diff_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

impl TwinWorld {
    pub fn perimeter(&self) -> f64 {
        2.0 * (self.loop_width + self.loop_height)
    }

    /// Index and distance of the nearest base station.
    pub fn nearest_station(&self, x: f64, y: f64) -> (usize, f64) {
        self.base_stations
            .iter()
            .enumerate()
            .map(|(i, (bx, by))| (i, ((x - bx).powi(2) + (y - by).powi(2)).sqrt()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("world has base stations")
    }

    pub fn mode_factor(&self, mode_code: f64) -> Result<f64> {
        match mode_code {
            0.0 => Ok(self.walking_factor),
            1.0 => Ok(self.driving_factor),
            c => Err(Error::UnknownMode(c)),
        }
    }

    pub fn orientation_factor(&self, x: f64, y: f64, compass: f64) -> f64 {
        let (i, d) = self.nearest_station(x, y);
        if d < 1e-9 {
            return 1.0;
        }
        let to_station = bearing_deg((x, y), self.base_stations[i]);
        let off = angle_diff_deg(compass, to_station).to_radians();
        1.0 - self.orientation_loss * (1.0 - off.cos()) / 2.0
    }

    pub fn attenuation(&self, x: f64, y: f64) -> f64 {
        self.blockages
            .iter()
            .filter(|b| b.contains(x, y))
            .map(|b| b.attenuation)
            .product()
    }

    /// Throughput without noise, before clamping.
    pub fn mean_rate(&self, x: f64, y: f64, compass: f64, mode_code: f64) -> Result<f64> {
        let (_, d) = self.nearest_station(x, y);
        Ok(self.peak_rate
            * (-d / self.range_scale).exp()
            * self.mode_factor(mode_code)?
            * self.attenuation(x, y)
            * self.orientation_factor(x, y, compass))
    }

    /// Point on the loop at arc length `s`, and the clockwise travel heading there.
    fn loop_point(&self, s: f64) -> (f64, f64, f64) {
        let (w, h) = (self.loop_width, self.loop_height);
        let s = s.rem_euclid(self.perimeter());
        // Clockwise from the origin corner: up the west edge, east along the top,
        // down the east edge, west along the bottom.
        if s < h {
            (0.0, s, 0.0)
        } else if s < h + w {
            (s - h, h, 90.0)
        } else if s < 2.0 * h + w {
            (w, h - (s - h - w), 180.0)
        } else {
            (w - (s - 2.0 * h - w), 0.0, 270.0)
        }
    }

    /// Draws a scenario along the loop.
    pub fn sample_scenario(&self, r: &mut Rng) -> Scenario {
        let jitter = Normal::new(0.0, self.position_jitter.max(1e-12)).expect("valid std");
        let s = r.random::<f64>() * self.perimeter();
        let (x, y, cw_heading) = self.loop_point(s);
        let counter_clockwise = r.random::<bool>();
        let driving = r.random::<f64>() < self.driving_probability;
        let speed = if driving {
            Normal::new(8.0f64, 2.5).unwrap().sample(r).max(1.0)
        } else {
            Normal::new(1.4f64, 0.3).unwrap().sample(r).max(0.2)
        };
        let heading = if counter_clockwise {
            cw_heading + 180.0
        } else {
            cw_heading
        };
        let compass = (heading + Normal::new(0.0, 15.0).unwrap().sample(r)).rem_euclid(360.0);
        Scenario {
            x: x + jitter.sample(r),
            y: y + jitter.sample(r),
            speed,
            compass,
            driving,
            counter_clockwise,
        }
    }

    /// `n` scenarios evenly spaced along the loop, cycling through walking/driving
    /// and both travel directions, rendered with a fixed seed.
    pub fn probe_grid(&self, n: usize, rng_seed: u64) -> Vec<Vec<f64>> {
        let mut r = rng::rng(rng_seed);
        (0..n)
            .map(|i| {
                let s = (i as f64 + 0.5) / n as f64 * self.perimeter();
                let (x, y, cw_heading) = self.loop_point(s);
                let driving = i % 2 == 1;
                let counter_clockwise = (i / 2) % 2 == 1;
                let compass = if counter_clockwise {
                    (cw_heading + 180.0).rem_euclid(360.0)
                } else {
                    cw_heading
                };
                let sc = Scenario {
                    x,
                    y,
                    speed: if driving { 8.0 } else { 1.4 },
                    compass,
                    driving,
                    counter_clockwise,
                };
                self.render_features(&sc, &mut r)
            })
            .collect()
    }

    /// Renders the full 19-feature vector of a scenario. Signal features carry
    /// measurement noise drawn from `r`.
    pub fn render_features(&self, sc: &Scenario, r: &mut Rng) -> Vec<f64> {
        let mut noise = |sd: f64| Normal::new(0.0, sd).unwrap().sample(r);
        let (tower, d) = self.nearest_station(sc.x, sc.y);
        let blocked = self.attenuation(sc.x, sc.y) < 1.0;
        let path_loss = 25.0 * (1.0 + d / 10.0).log10();
        let block_db = if blocked { 8.0 } else { 0.0 };
        let lte_d = ((sc.x - 200.0).powi(2) + (sc.y - 125.0).powi(2)).sqrt();
        let lte_loss = 20.0 * (1.0 + lte_d / 50.0).log10();
        let tower_bearing = bearing_deg(self.base_stations[tower], (sc.x, sc.y));
        let to_station = bearing_deg((sc.x, sc.y), self.base_stations[tower]);
        let lat = ORIGIN_LAT + sc.y / METERS_PER_DEG_LAT;
        let lon = ORIGIN_LON + sc.x / (METERS_PER_DEG_LAT * ORIGIN_LAT.to_radians().cos());

        let mut f = vec![0.0; schema::FEATURE_COUNT];
        f[schema::LONGITUDE] = lon;
        f[schema::LATITUDE] = lat;
        f[schema::POS_X] = sc.x;
        f[schema::POS_Y] = sc.y;
        f[schema::SPEED] = sc.speed;
        f[schema::COMPASS] = sc.compass;
        f[schema::MODE] = if sc.driving { 1.0 } else { 0.0 };
        f[schema::TRAJECTORY] = if sc.counter_clockwise { 1.0 } else { 0.0 };
        f[schema::NR_RSRP] = -70.0 - path_loss - block_db + noise(4.0);
        f[schema::NR_RSRQ] = -10.0 - 0.3 * path_loss - 0.5 * block_db + noise(2.0);
        f[schema::NR_SINR] = 25.0 - 0.6 * path_loss - block_db + noise(3.0);
        f[schema::LTE_RSSI] = -55.0 - lte_loss + noise(3.0);
        f[schema::LTE_RSRP] = -80.0 - lte_loss + noise(3.0);
        f[schema::LTE_RSRQ] = -9.0 - 0.2 * lte_loss + noise(1.5);
        f[schema::LTE_RSSNR] = 20.0 - 0.5 * lte_loss + noise(2.0);
        f[schema::TOWER_ID] = tower as f64;
        f[schema::TOWER_BEARING] = tower_bearing;
        f[schema::HEADING_OFFSET] = angle_diff_deg(sc.compass, to_station);
        f[schema::LOOP_PROGRESS] = self.loop_progress(sc.x, sc.y);
        f
    }

    /// Normalized arc-length position of the closest loop point.
    fn loop_progress(&self, x: f64, y: f64) -> f64 {
        let (w, h) = (self.loop_width, self.loop_height);
        let xc = x.clamp(0.0, w);
        let yc = y.clamp(0.0, h);
        let candidates = [
            (x.abs(), yc),
            ((y - h).abs(), h + xc),
            ((x - w).abs(), 2.0 * h + w - yc),
            (y.abs(), 2.0 * h + 2.0 * w - xc),
        ];
        let (_, s) = candidates
            .into_iter()
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .expect("four edges");
        (s / self.perimeter()).rem_euclid(1.0)
    }
}

/// Ground-truth throughput (Mbps) for a feature vector in the synthetic schema.
///
/// Noise is `Normal(0, noise_std^2)` drawn from `noise_seed`; the result is clamped at 0.
pub fn twin_label(world: &TwinWorld, features: &[f64], noise_seed: u64) -> Result<f64> {
    if features.len() != schema::FEATURE_COUNT {
        return Err(Error::Shape {
            expected: schema::FEATURE_COUNT,
            actual: features.len(),
        });
    }
    let rate = world.mean_rate(
        features[schema::POS_X],
        features[schema::POS_Y],
        features[schema::COMPASS],
        features[schema::MODE],
    )?;
    let noise = if world.noise_std > 0.0 {
        let mut r = rng::rng(noise_seed);
        Normal::new(0.0, world.noise_std)
            .expect("finite noise std")
            .sample(&mut r)
    } else {
        0.0
    };
    Ok((rate + noise).max(0.0))
}

/// `n` labeled samples drawn along the loop. Sample `i` is generated from its own
/// seed, so any index range can be produced independently.
pub fn generate_synthetic_dataset(world: &TwinWorld, n: usize, rng_seed: u64) -> Vec<Sample> {
    (0..n)
        .map(|i| {
            let seed = rng::item_seed(rng_seed, i as u64);
            let mut r = rng::rng(seed);
            let sc = world.sample_scenario(&mut r);
            let features = world.render_features(&sc, &mut r);
            let label = twin_label(world, &features, rng::mix(seed))
                .expect("generated scenarios use valid mode codes");
            Sample {
                id: i,
                features,
                label: Some(label),
                origin: Origin::Synthesized,
                iteration_acquired: None,
            }
        })
        .collect()
}

/// Writes samples as a CSV `load_csv` accepts; the mode column is written as
/// `walking` / `driving` so the categorical mapping path is exercised.
pub fn write_dataset_csv(samples: &[Sample], path: &Path) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    let mut header = schema::COLUMNS.join(",");
    header.push(',');
    header.push_str(schema::TARGET);
    writeln!(out, "{header}").map_err(io)?;
    for s in samples {
        let mut cells: Vec<String> = s
            .features
            .iter()
            .enumerate()
            .map(|(j, v)| {
                if j == schema::MODE {
                    let code = v.round() as i64;
                    schema::MODES
                        .iter()
                        .find(|(_, c)| *c == code)
                        .map_or_else(|| v.to_string(), |(n, _)| n.to_string())
                } else {
                    format!("{v}")
                }
            })
            .collect();
        cells.push(s.label.map_or_else(String::new, |l| format!("{l}")));
        writeln!(out, "{}", cells.join(",")).map_err(io)?;
    }
    out.flush().map_err(io)
}
