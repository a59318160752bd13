//! Synthetic trip generator with known structure.
//!
//! The count of requests from grid `i` to grid `j` in a slot is
//! `base[i][j] · profile[slot of day] · hotspot[i][j]`, rounded to the
//! nearest integer (exact mode) or drawn from a Poisson distribution with
//! that mean. Without noise the OD sequence repeats exactly every day.

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::autodiff::Mat;
use crate::config::RunConfig;
use crate::error::{OdpError, Result};
use crate::preprocess::{GridSpec, Request};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Noise {
    None,
    Poisson,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub days: usize,
    pub grid: GridSpec,
    pub start: NaiveDateTime,
    /// Mean requests per slot, `n × n`, before the profile.
    pub base: Mat,
    /// Multiplier per slot of the day, length `l`.
    pub profile: Vec<f64>,
    pub noise: Noise,
    pub hotspots: Vec<(usize, usize, f64)>,
}

/// Built-in day shape: low at midnight, peak at midday, in `[0.3, 1.7]`.
pub fn periodic_profile(l: usize) -> Vec<f64> {
    (0..l)
        .map(|h| 1.0 - 0.7 * (2.0 * std::f64::consts::PI * h as f64 / l as f64).cos())
        .collect()
}

/// Seeded base matrix: each pair is active with probability `density` and
/// then has intensity uniform in `[0.5, 1.5] · intensity`.
pub fn random_base(n: usize, intensity: f64, density: f64, rng: &mut ChaCha8Rng) -> Mat {
    Mat::from_shape_simple_fn((n, n), || {
        let active = rng.random::<f64>() < density;
        let scale = rng.random_range(0.5..=1.5);
        if active {
            intensity * scale
        } else {
            0.0
        }
    })
}

impl SyntheticSpec {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let grid = cfg.grid_spec()?;
        let l = grid.slots_per_day();
        let seed = cfg.seed()?;
        let parse_f = |key: &str| -> Result<f64> {
            cfg.get(key)
                .parse()
                .map_err(|_| OdpError::config(format!("{key}: cannot parse {:?}", cfg.get(key))))
        };
        let days: usize = cfg
            .get("synth_days")
            .parse()
            .map_err(|_| OdpError::config("synth_days: expected a whole number"))?;
        let intensity = parse_f("synth_intensity")?;
        let density = parse_f("synth_density")?;
        if !(intensity >= 0.0) || !(0.0..=1.0).contains(&density) {
            return Err(OdpError::config("synth_intensity must be >= 0 and synth_density in [0, 1]"));
        }
        let profile = match cfg.get("synth_profile") {
            "constant" => vec![1.0; l],
            "periodic" => periodic_profile(l),
            list => list
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|_| OdpError::config(format!("synth_profile: cannot parse {s:?}"))))
                .collect::<Result<Vec<_>>>()?,
        };
        let noise = match cfg.get("synth_noise") {
            "none" => Noise::None,
            "poisson" => Noise::Poisson,
            v => return Err(OdpError::config(format!("synth_noise: expected none or poisson, got {v:?}"))),
        };
        let mut hotspots = Vec::new();
        for item in cfg.get("synth_hotspots").split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let parts: Vec<&str> = item.split(':').collect();
            let bad = || OdpError::config(format!("synth_hotspots: expected origin:destination:factor, got {item:?}"));
            if parts.len() != 3 {
                return Err(bad());
            }
            hotspots.push((
                parts[0].parse().map_err(|_| bad())?,
                parts[1].parse().map_err(|_| bad())?,
                parts[2].parse().map_err(|_| bad())?,
            ));
        }
        let start = cfg.start_time()?.unwrap_or_else(|| {
            NaiveDate::from_ymd_opt(2016, 1, 4)
                .expect("valid date")
                .and_hms_opt(0, 0, 0)
                .expect("valid time")
        });
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = random_base(grid.n(), intensity, density, &mut rng);
        let spec = SyntheticSpec {
            seed,
            days,
            grid,
            start,
            base,
            profile,
            noise,
            hotspots,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grid.n();
        if self.base.dim() != (n, n) || self.base.iter().any(|&v| !(v >= 0.0)) {
            return Err(OdpError::config("synthetic base intensities must be an n x n nonnegative matrix"));
        }
        if self.profile.len() != self.grid.slots_per_day() || self.profile.iter().any(|&v| !(v >= 0.0)) {
            return Err(OdpError::config(format!(
                "synthetic profile needs {} nonnegative values, got {}",
                self.grid.slots_per_day(),
                self.profile.len()
            )));
        }
        if self.hotspots.iter().any(|&(i, j, f)| i >= n || j >= n || !(f >= 0.0)) {
            return Err(OdpError::config("hotspot grid out of range or negative factor"));
        }
        Ok(())
    }

    pub fn slots(&self) -> usize {
        self.days * self.grid.slots_per_day()
    }

    /// Expected count for a 1-based slot.
    pub fn intensity(&self, slot: usize, i: usize, j: usize) -> f64 {
        let l = self.grid.slots_per_day();
        let boost: f64 = self
            .hotspots
            .iter()
            .filter(|&&(a, b, _)| a == i && b == j)
            .map(|&(_, _, f)| f)
            .product();
        self.base[[i, j]] * self.profile[(slot - 1) % l] * boost
    }

    /// Requests sorted by time. Coordinates fall well inside their cells and
    /// times inside their slots.
    pub fn generate(&self) -> Vec<Request> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(0x5eed));
        let n = self.grid.n();
        let slot_secs = i64::from(self.grid.slot_hours) * 3600;
        let (h, w) = (self.grid.cell_height_deg(), self.grid.cell_width_deg());
        let mut out = Vec::new();
        for slot in 1..=self.slots() {
            let slot_start = self.start + Duration::seconds((slot as i64 - 1) * slot_secs);
            for i in 0..n {
                for j in 0..n {
                    let lambda = self.intensity(slot, i, j);
                    let count = match self.noise {
                        Noise::None => lambda.round() as u64,
                        Noise::Poisson if lambda > 0.0 => Poisson::new(lambda).expect("positive mean").sample(&mut rng) as u64,
                        Noise::Poisson => 0,
                    };
                    let (oc, dc) = (self.grid.center(i), self.grid.center(j));
                    for _ in 0..count {
                        let mut jitter = |c: (f64, f64)| {
                            (
                                c.0 + rng.random_range(-0.4..0.4) * h,
                                c.1 + rng.random_range(-0.4..0.4) * w,
                            )
                        };
                        let (olat, olng) = jitter(oc);
                        let (dlat, dlng) = jitter(dc);
                        out.push(Request {
                            time: slot_start + Duration::seconds(rng.random_range(0..slot_secs)),
                            origin_lat: olat,
                            origin_lng: olng,
                            dest_lat: dlat,
                            dest_lng: dlng,
                        });
                    }
                }
            }
        }
        out.sort_by_key(|r| r.time);
        out
    }
}
