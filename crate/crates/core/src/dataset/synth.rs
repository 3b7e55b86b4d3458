//! Synthetic stand-ins for the EO and SAR ship chip datasets.
//!
//! SAR-like chips: dark sea under multiplicative exponential speckle; ships are
//! bright, smoothed, rotated rectangles. Cross-polarized (HV/VH) ships are
//! smaller and dimmer, HH and SCNA ships brighter. EO-like chips: smooth
//! low-frequency colored water with sparse glint specks; ships are gray/white
//! hulls trailing a dark wake.

use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{ChipRecord, ChipSource, Label, Polarization, RawImage, SarAttributes, Sensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    Eo,
    Sar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub domain: Domain,
    pub ships: usize,
    pub no_ships: usize,
    pub chip_size: usize,
    /// Ship length range in pixels.
    pub ship_length: (f64, f64),
    /// Ship intensity range in [0, 1].
    pub brightness: (f64, f64),
    /// 0 = no speckle, 1 = fully developed single-look speckle. SAR only.
    pub speckle: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn eo(chip_size: usize, ships: usize, no_ships: usize, seed: u64) -> Self {
        SyntheticConfig {
            domain: Domain::Eo,
            ships,
            no_ships,
            chip_size,
            ship_length: (0.25 * chip_size as f64, 0.55 * chip_size as f64),
            brightness: (0.6, 0.95),
            speckle: 0.0,
            seed,
        }
    }

    pub fn sar(chip_size: usize, ships: usize, no_ships: usize, seed: u64) -> Self {
        SyntheticConfig {
            domain: Domain::Sar,
            ships,
            no_ships,
            chip_size,
            ship_length: (0.15 * chip_size as f64, 0.35 * chip_size as f64),
            brightness: (0.55, 0.95),
            speckle: 0.4,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.ship_length;
        if self.chip_size < 8 {
            return Err(Error::Parameter(format!("chip size {} too small", self.chip_size)));
        }
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::Parameter(format!("invalid ship length range {:?}", self.ship_length)));
        }
        if hi + 2.0 > self.chip_size as f64 {
            return Err(Error::Parameter(format!(
                "ship length up to {hi} px does not fit a {} px chip",
                self.chip_size
            )));
        }
        let (b0, b1) = self.brightness;
        if !(0.0..=1.0).contains(&b0) || !(b0..=1.0).contains(&b1) {
            return Err(Error::Parameter(format!("invalid brightness range {:?}", self.brightness)));
        }
        if !(0.0..=1.0).contains(&self.speckle) {
            return Err(Error::Parameter(format!("speckle strength {} outside [0, 1]", self.speckle)));
        }
        Ok(())
    }
}

/// Axis-aligned ground-truth box of a positive chip, in pixels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShipBox {
    pub id: String,
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl ShipBox {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.w && y >= self.y && y < self.y + self.h
    }

    /// Grow by `margin` pixels on every side, clipped to a `size × size` chip.
    pub fn dilate(&self, margin: usize, size: usize) -> ShipBox {
        let x = self.x.saturating_sub(margin);
        let y = self.y.saturating_sub(margin);
        ShipBox {
            id: self.id.clone(),
            x,
            y,
            w: (self.x + self.w + margin).min(size) - x,
            h: (self.y + self.h + margin).min(size) - y,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSet {
    pub records: Vec<ChipRecord>,
    pub boxes: Vec<ShipBox>,
}

/// Fraction of EO water pixels carrying a sun glint or whitecap speck.
const GLINT_DENSITY: f64 = 0.03;

/// Speckle strength on ship pixels relative to the sea.
const HULL_SPECKLE: f64 = 0.25;

struct Hull {
    cx: f64,
    cy: f64,
    cos: f64,
    sin: f64,
    half_len: f64,
    half_wid: f64,
}

impl Hull {
    fn place(rng: &mut ChaCha8Rng, size: usize, length: f64) -> Hull {
        let width = (length / 3.5).max(2.0);
        let theta = rng.random_range(0.0..PI);
        let (sin, cos) = theta.sin_cos();
        let (hl, hw) = (length / 2.0, width / 2.0);
        let ex = cos.abs() * hl + sin.abs() * hw;
        let ey = sin.abs() * hl + cos.abs() * hw;
        let s = size as f64;
        let cx = rng.random_range(ex + 1.0..=s - ex - 1.0);
        let cy = rng.random_range(ey + 1.0..=s - ey - 1.0);
        Hull { cx, cy, cos, sin, half_len: hl, half_wid: hw }
    }

    /// Local (along, across) coordinates of pixel center `(x, y)`.
    fn local(&self, x: usize, y: usize) -> (f64, f64) {
        let dx = x as f64 + 0.5 - self.cx;
        let dy = y as f64 + 0.5 - self.cy;
        (dx * self.cos + dy * self.sin, -dx * self.sin + dy * self.cos)
    }

    /// Coverage in [0, 1] with a one-pixel linear edge ramp.
    fn coverage(&self, x: usize, y: usize) -> f64 {
        let (a, c) = self.local(x, y);
        let ramp = |d: f64| (d + 0.5).clamp(0.0, 1.0);
        ramp(self.half_len - a.abs()) * ramp(self.half_wid - c.abs())
    }

    fn bbox(&self, id: &str, size: usize) -> ShipBox {
        let ex = self.cos.abs() * self.half_len + self.sin.abs() * self.half_wid;
        let ey = self.sin.abs() * self.half_len + self.cos.abs() * self.half_wid;
        let x0 = (self.cx - ex).floor().max(0.0) as usize;
        let y0 = (self.cy - ey).floor().max(0.0) as usize;
        let x1 = ((self.cx + ex).ceil() as usize).min(size);
        let y1 = ((self.cy + ey).ceil() as usize).min(size);
        ShipBox { id: id.to_string(), x: x0, y: y0, w: x1 - x0, h: y1 - y0 }
    }
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn sample_sar_attributes(rng: &mut ChaCha8Rng) -> SarAttributes {
    let sensor = Sensor::ALL[rng.random_range(0..Sensor::ALL.len())];
    // Combinations absent from the real data (GRDM HH/HV, SCNA HV/VV/VH) are never drawn.
    let pols: &[Polarization] = match sensor {
        Sensor::Grdh => Polarization::ALL,
        Sensor::Grdm => &[Polarization::Vv, Polarization::Vh],
        Sensor::Scna => &[Polarization::Hh],
    };
    let polarization = pols[rng.random_range(0..pols.len())];
    let (lo, hi) = match sensor {
        Sensor::Scna => (20.0, 39.0),
        _ => (19.0, 47.0),
    };
    // (lo, hi], rounded to 0.01 degree.
    let raw: f64 = hi - rng.random::<f64>() * (hi - lo);
    let incidence_angle = ((raw * 100.0).round() / 100.0).clamp(lo + 0.01, hi);
    SarAttributes { sensor, polarization, incidence_angle }
}

fn sar_chip(rng: &mut ChaCha8Rng, cfg: &SyntheticConfig, ship: bool, attrs: &SarAttributes, id: &str) -> (RawImage, Option<ShipBox>) {
    let s = cfg.chip_size;
    let sea = rng.random_range(0.04..0.12);
    let hull = ship.then(|| {
        let cross_pol = matches!(attrs.polarization, Polarization::Hv | Polarization::Vh);
        let bright_mode = attrs.polarization == Polarization::Hh || attrs.sensor == Sensor::Scna;
        let length = rng.random_range(cfg.ship_length.0..=cfg.ship_length.1) * if cross_pol { 0.7 } else { 1.0 };
        let mut level = rng.random_range(cfg.brightness.0..=cfg.brightness.1);
        if bright_mode {
            level = (level + 0.1).min(1.0);
        } else if cross_pol {
            level -= 0.1;
        }
        (Hull::place(rng, s, length.max(3.0)), level)
    });

    let mut pixels = Vec::with_capacity(s * s);
    for y in 0..s {
        for x in 0..s {
            let cover = hull.as_ref().map_or(0.0, |(h, _)| h.coverage(x, y));
            let level = hull.as_ref().map_or(sea, |(_, l)| *l);
            // The hull's few dominant scatterers fluctuate much less than the sea.
            let e_sea: f64 = Exp1.sample(rng);
            let e_hull: f64 = Exp1.sample(rng);
            let sea_px = sea * (1.0 + cfg.speckle * (e_sea - 1.0));
            let hull_px = level * (1.0 + HULL_SPECKLE * cfg.speckle * (e_hull - 1.0));
            pixels.push(quantize(sea_px + cover * (hull_px - sea_px)));
        }
    }
    let bbox = hull.map(|(h, _)| h.bbox(id, s));
    (RawImage { width: s, height: s, channels: 1, pixels }, bbox)
}

fn eo_chip(rng: &mut ChaCha8Rng, cfg: &SyntheticConfig, ship: bool, id: &str) -> (RawImage, Option<ShipBox>) {
    let s = cfg.chip_size;
    let base = [rng.random_range(0.10..0.35), rng.random_range(0.20..0.45), rng.random_range(0.30..0.55)];
    // Two low-frequency waves (at most two cycles across the chip) shared by all channels.
    let waves: Vec<(f64, f64, f64, f64)> = (0..2)
        .map(|_| {
            (
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(0.02..0.06),
            )
        })
        .collect();
    let hull = ship.then(|| {
        let length = rng.random_range(cfg.ship_length.0..=cfg.ship_length.1);
        (Hull::place(rng, s, length), rng.random_range(cfg.brightness.0..=cfg.brightness.1))
    });

    let mut pixels = Vec::with_capacity(3 * s * s);
    for y in 0..s {
        for x in 0..s {
            let (u, v) = (x as f64 / s as f64, y as f64 / s as f64);
            let swell: f64 = waves.iter().map(|&(fx, fy, ph, amp)| amp * (2.0 * PI * (fx * u + fy * v) + ph).sin()).sum();
            let (cover, wake) = match &hull {
                Some((h, _)) => {
                    let (along, across) = h.local(x, y);
                    // Wake: a fading dark band behind the stern, slightly wider than the hull.
                    let behind = -along - h.half_len;
                    let wake = if behind > 0.0 && behind < 2.0 * h.half_len && across.abs() < 1.5 * h.half_wid {
                        0.10 * (1.0 - behind / (2.0 * h.half_len))
                    } else {
                        0.0
                    };
                    (h.coverage(x, y), wake)
                }
                None => (0.0, 0.0),
            };
            let hull_level = hull.as_ref().map_or(0.0, |(_, l)| *l);
            let glint = if rng.random::<f64>() < GLINT_DENSITY { rng.random_range(0.3..0.7) } else { 0.0 };
            for b in base {
                let noise: f64 = StandardNormal.sample(rng);
                let water = b + swell - wake + 0.01 * noise + glint;
                pixels.push(quantize(water + cover * (hull_level - water)));
            }
        }
    }
    let bbox = hull.map(|(h, _)| h.bbox(id, s));
    (RawImage { width: s, height: s, channels: 3, pixels }, bbox)
}

/// Generate a labeled dataset; positives come first. A pure function of `config`.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<SyntheticSet> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let prefix = match config.domain {
        Domain::Eo => "eo",
        Domain::Sar => "sar",
    };
    let mut records = Vec::with_capacity(config.ships + config.no_ships);
    let mut boxes = Vec::with_capacity(config.ships);
    for i in 0..config.ships + config.no_ships {
        let ship = i < config.ships;
        let id = format!("images/{prefix}_{i:05}.png");
        let (image, attributes, bbox) = match config.domain {
            Domain::Sar => {
                let attrs = sample_sar_attributes(&mut rng);
                let (img, bbox) = sar_chip(&mut rng, config, ship, &attrs, &id);
                (img, Some(attrs), bbox)
            }
            Domain::Eo => {
                let (img, bbox) = eo_chip(&mut rng, config, ship, &id);
                (img, None, bbox)
            }
        };
        boxes.extend(bbox);
        records.push(ChipRecord {
            id,
            source: ChipSource::Pixels(image),
            label: if ship { Label::Ship } else { Label::NoShip },
            attributes,
        });
    }
    Ok(SyntheticSet { records, boxes })
}
