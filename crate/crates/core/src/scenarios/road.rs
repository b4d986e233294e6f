//! Road profiles: CSV ingestion with uniform resampling, emission, and a
//! synthetic rolling-hills generator.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::RoadSegment;
use crate::{Error, Result};

pub const DEFAULT_SEGMENT_L: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoadSource {
    File { path: String },
    Synthetic(SynthSpec),
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadProfile {
    pub name: String,
    pub segments: Vec<RoadSegment>,
    pub source: RoadSource,
}

impl RoadProfile {
    /// Builds segments between consecutive grid altitudes spaced `segment_l`
    /// apart. Slopes are `atan(Δh/l)`; each segment starts at its grid altitude.
    pub fn from_altitudes(name: impl Into<String>, segment_l: f64, altitudes: &[f64], source: RoadSource) -> Result<Self> {
        if !(segment_l > 0.0 && segment_l.is_finite()) {
            return Err(Error::Road(format!("segment length must be positive, got {segment_l}")));
        }
        if altitudes.len() < 2 {
            return Err(Error::Road("need at least two grid altitudes".into()));
        }
        if let Some(h) = altitudes.iter().find(|h| !h.is_finite()) {
            return Err(Error::Road(format!("non-finite altitude {h}")));
        }
        let segments = altitudes
            .windows(2)
            .map(|w| RoadSegment::new(segment_l, ((w[1] - w[0]) / segment_l).atan(), w[0]))
            .collect();
        Ok(Self { name: name.into(), segments, source })
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn segment_l(&self) -> f64 {
        self.segments.first().map_or(0.0, |s| s.length_m)
    }

    pub fn length_m(&self) -> f64 {
        self.segments.iter().map(|s| s.length_m).sum()
    }

    pub fn max_abs_slope(&self) -> f64 {
        self.segments.iter().map(|s| s.slope_rad.abs()).fold(0.0, f64::max)
    }

    /// Grid altitudes at every segment boundary.
    pub fn altitudes(&self) -> Vec<f64> {
        let mut h: Vec<f64> = self.segments.iter().map(|s| s.altitude_start_m).collect();
        if let Some(last) = self.segments.last() {
            h.push(last.altitude_end_m());
        }
        h
    }

    /// The same road driven the other way: every slope negates.
    pub fn reversed(&self) -> Self {
        let segments = self
            .segments
            .iter()
            .rev()
            .map(|s| RoadSegment::new(s.length_m, -s.slope_rad, s.altitude_end_m()))
            .collect();
        Self { name: format!("{}-reversed", self.name), segments, source: self.source.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.segment_l();
        if self.segments.is_empty() {
            return Err(Error::Road("road has no segments".into()));
        }
        for (i, s) in self.segments.iter().enumerate() {
            s.validate().map_err(|e| Error::Road(format!("segment {i}: {e}")))?;
            if s.length_m != l {
                return Err(Error::Road(format!("segment {i} is {} m long, expected {l} m", s.length_m)));
            }
            if i > 0 {
                let prev = &self.segments[i - 1];
                let jump = (prev.altitude_end_m() - s.altitude_start_m).abs();
                if jump > 1e-6 {
                    return Err(Error::Road(format!("altitude jumps {jump} m at the start of segment {i}")));
                }
            }
        }
        Ok(())
    }

    /// Writes the boundary grid as `distance_m,altitude_m`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["distance_m", "altitude_m"])?;
        let l = self.segment_l();
        for (i, h) in self.altitudes().into_iter().enumerate() {
            wr.write_record([(i as f64 * l).to_string(), h.to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
struct AltitudeRow {
    distance_m: f64,
    altitude_m: f64,
}

/// Reads `distance_m,altitude_m` rows and resamples altitude onto a uniform
/// grid of `segment_l` by linear interpolation. A tail shorter than one
/// segment is dropped.
pub fn read_road<R: Read>(r: R, name: &str, segment_l: f64) -> Result<RoadProfile> {
    let mut rd = csv::Reader::from_reader(r);
    let headers = rd.headers().map_err(|e| Error::Road(format!("{name}: {e}")))?.clone();
    if headers.len() < 2 || &headers[0] != "distance_m" || &headers[1] != "altitude_m" {
        return Err(Error::Road(format!(
            "{name}: expected header distance_m,altitude_m, found {}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows: Vec<AltitudeRow> = Vec::new();
    for (k, row) in rd.deserialize().enumerate() {
        // Line 1 is the header.
        let row: AltitudeRow = row.map_err(|e| Error::Road(format!("{name}: line {}: {e}", k + 2)))?;
        if !row.distance_m.is_finite() || !row.altitude_m.is_finite() {
            return Err(Error::Road(format!("{name}: line {}: non-finite value", k + 2)));
        }
        if let Some(prev) = rows.last() {
            if row.distance_m <= prev.distance_m {
                return Err(Error::Road(format!(
                    "{name}: line {}: distance {} does not increase past {}",
                    k + 2,
                    row.distance_m,
                    prev.distance_m
                )));
            }
        }
        rows.push(row);
    }
    if rows.len() < 2 {
        return Err(Error::Road(format!("{name}: need at least two rows, found {}", rows.len())));
    }
    let d0 = rows[0].distance_m;
    let span = rows[rows.len() - 1].distance_m - d0;
    let n = (span / segment_l * (1.0 + 1e-12)).floor() as usize;
    if n == 0 {
        return Err(Error::Road(format!("{name}: {span} m is shorter than one {segment_l} m segment")));
    }
    let dist: Vec<f64> = rows.iter().map(|r| r.distance_m).collect();
    let alt: Vec<f64> = rows.iter().map(|r| r.altitude_m).collect();
    let grid: Vec<f64> = (0..=n).map(|i| interp(&dist, &alt, d0 + i as f64 * segment_l)).collect();
    RoadProfile::from_altitudes(name, segment_l, &grid, RoadSource::Custom)
}

/// Linear interpolation; exact at the sample points, clamped at the ends.
fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let k = xs.partition_point(|&v| v <= x);
    if k == 0 {
        return ys[0];
    }
    if xs[k - 1] == x || k == xs.len() {
        return ys[k - 1];
    }
    let (x0, x1, y0, y1) = (xs[k - 1], xs[k], ys[k - 1], ys[k]);
    y0 + (x - x0) / (x1 - x0) * (y1 - y0)
}

pub fn load_road(path: &Path, segment_l: f64) -> Result<RoadProfile> {
    let f = std::fs::File::open(path).map_err(|e| Error::Road(format!("{}: {e}", path.display())))?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("road");
    let mut road = read_road(f, name, segment_l)?;
    road.source = RoadSource::File { path: path.display().to_string() };
    Ok(road)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub length_km: f64,
    pub hill_amplitude_m: f64,
    pub hill_wavelength_km: f64,
    pub seed: u64,
    /// Relative amplitude of the slow random undulation added to the sinusoid.
    pub roughness: f64,
    pub segment_l: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            length_km: 20.0,
            hill_amplitude_m: 40.0,
            hill_wavelength_km: 4.0,
            seed: 1,
            roughness: 0.05,
            segment_l: DEFAULT_SEGMENT_L,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Road(format!("{what} must be positive, got {v}")))
            }
        };
        pos(self.length_km, "length_km")?;
        pos(self.hill_wavelength_km, "hill_wavelength_km")?;
        pos(self.segment_l, "segment_l")?;
        if !(self.hill_amplitude_m >= 0.0 && self.hill_amplitude_m.is_finite()) {
            return Err(Error::Road(format!("hill_amplitude_m must be non-negative, got {}", self.hill_amplitude_m)));
        }
        if !(0.0..=1.0).contains(&self.roughness) {
            return Err(Error::Road(format!("roughness must lie in [0, 1], got {}", self.roughness)));
        }
        Ok(())
    }
}

/// Rolling hills: a sinusoid of random phase plus three slower sinusoids
/// (wavelengths 2–5× the main one) scaled by `roughness`.
pub fn synth_road(spec: &SynthSpec) -> Result<RoadProfile> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let tau = std::f64::consts::TAU;
    let lambda = spec.hill_wavelength_km * 1000.0;
    let phase: f64 = rng.random_range(0.0..tau);
    let slow: Vec<(f64, f64)> = (0..3)
        .map(|_| (lambda * rng.random_range(2.0..5.0), rng.random_range(0.0..tau)))
        .collect();
    let a = spec.hill_amplitude_m;
    let n = (spec.length_km * 1000.0 / spec.segment_l).round().max(1.0) as usize;
    let h: Vec<f64> = (0..=n)
        .map(|i| {
            let s = i as f64 * spec.segment_l;
            let wiggle: f64 = slow.iter().map(|&(w, p)| (tau * s / w + p).sin()).sum::<f64>() / 3.0;
            a * ((tau * s / lambda + phase).sin() + spec.roughness * wiggle)
        })
        .collect();
    let name = format!(
        "synth-{}km-{}m-{}km-s{}",
        spec.length_km, spec.hill_amplitude_m, spec.hill_wavelength_km, spec.seed
    );
    RoadProfile::from_altitudes(name, spec.segment_l, &h, RoadSource::Synthetic(spec.clone()))
}

/// Flat approach, a straight grade of `grade` (rise over run, negative for
/// downhill) over `grade_km`, and a flat exit.
pub fn grade_road(flat_km: f64, grade_km: f64, grade: f64, segment_l: f64) -> Result<RoadProfile> {
    let n_flat = (flat_km * 1000.0 / segment_l).round() as usize;
    let n_grade = (grade_km * 1000.0 / segment_l).round() as usize;
    let mut h = vec![0.0; n_flat + 1];
    for i in 1..=n_grade {
        h.push(grade * segment_l * i as f64);
    }
    let bottom = *h.last().unwrap_or(&0.0);
    h.extend(std::iter::repeat_n(bottom, n_flat));
    RoadProfile::from_altitudes(format!("grade-{grade}"), segment_l, &h, RoadSource::Custom)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str, l: f64) -> Result<RoadProfile> {
        read_road(s.as_bytes(), "t", l)
    }

    #[test]
    fn linear_profile() {
        let r = parse("distance_m,altitude_m\n0,0\n1000,10\n", 50.0).unwrap();
        assert_eq!(r.len(), 20);
        for s in &r.segments {
            assert!((s.slope_rad - (10.0f64 / 1000.0).atan()).abs() < 1e-12);
        }
        r.validate().unwrap();
    }

    #[test]
    fn constant_altitude_is_flat() {
        let r = parse("distance_m,altitude_m\n0,5\n333,5\n1000,5\n", 50.0).unwrap();
        assert!(r.segments.iter().all(|s| s.slope_rad == 0.0));
    }

    #[test]
    fn irregular_sampling_matches_interpolation() {
        let d = [0.0, 17.0, 80.0, 260.0, 261.5, 400.0];
        let h = [3.0, 4.5, -2.0, 7.0, 7.25, 1.0];
        let mut csv = String::from("distance_m,altitude_m\n");
        for (x, y) in d.iter().zip(&h) {
            csv.push_str(&format!("{x},{y}\n"));
        }
        let r = parse(&csv, 50.0).unwrap();
        assert_eq!(r.len(), 8);
        // Independent oracle: scan for the bracketing pair.
        for (i, got) in r.altitudes().iter().enumerate() {
            let x = i as f64 * 50.0;
            let j = (0..d.len() - 1).find(|&j| d[j] <= x && x <= d[j + 1]).unwrap();
            let want = h[j] + (h[j + 1] - h[j]) * (x - d[j]) / (d[j + 1] - d[j]);
            assert!((got - want).abs() < 1e-9, "grid {i}: {got} vs {want}");
        }
    }

    #[test]
    fn descriptive_errors() {
        let cases = [
            ("distance_m,altitude_m\n0,0\n", "at least two rows"),
            ("distance_m,altitude_m\n0,0\n100,1\n50,2\n", "line 4"),
            ("distance_m,altitude_m\n0,0\n100,x\n", "line 3"),
            ("dist,alt\n0,0\n100,1\n", "header"),
            ("distance_m,altitude_m\n0,0\n20,1\n", "shorter than one"),
        ];
        for (csv, needle) in cases {
            let msg = parse(csv, 50.0).unwrap_err().to_string();
            assert!(msg.contains(needle), "{msg:?} lacks {needle:?}");
        }
    }

    #[test]
    fn emit_round_trip_is_bit_exact() {
        for seed in 0..5 {
            let r = synth_road(&SynthSpec { seed, length_km: 3.0, ..Default::default() }).unwrap();
            let mut buf = Vec::new();
            r.write_csv(&mut buf).unwrap();
            let back = read_road(buf.as_slice(), "t", r.segment_l()).unwrap();
            assert_eq!(back.segments.len(), r.segments.len());
            for (a, b) in r.segments.iter().zip(&back.segments) {
                assert_eq!(a.slope_rad.to_bits(), b.slope_rad.to_bits());
                assert_eq!(a.altitude_start_m.to_bits(), b.altitude_start_m.to_bits());
                assert_eq!(a.length_m.to_bits(), b.length_m.to_bits());
            }
        }
    }

    #[test]
    fn synth_amplitude_zero_is_flat() {
        let r = synth_road(&SynthSpec { hill_amplitude_m: 0.0, ..Default::default() }).unwrap();
        assert!(r.segments.iter().all(|s| s.slope_rad == 0.0));
    }

    #[test]
    fn synth_max_slope_follows_sinusoid_derivative() {
        let spec = SynthSpec { roughness: 0.0, ..Default::default() };
        let r = synth_road(&spec).unwrap();
        let want = (std::f64::consts::TAU * 40.0 / 4000.0).atan();
        assert!((r.max_abs_slope() - want).abs() / want < 0.01, "{} vs {want}", r.max_abs_slope());
        // ≈ 3.6 degrees
        assert!((want.to_degrees() - 3.6).abs() < 0.05);
        // The default undulation moves it only a little.
        let rough = synth_road(&SynthSpec::default()).unwrap();
        assert!((rough.max_abs_slope() - want).abs() / want < 0.1);
        r.validate().unwrap();
        rough.validate().unwrap();
    }

    #[test]
    fn synth_is_deterministic_per_seed() {
        let a = synth_road(&SynthSpec::default()).unwrap();
        let b = synth_road(&SynthSpec::default()).unwrap();
        let c = synth_road(&SynthSpec { seed: 2, ..Default::default() }).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.segments, c.segments);
    }

    #[test]
    fn reversing_negates_slopes() {
        let r = synth_road(&SynthSpec::default()).unwrap();
        let rev = r.reversed();
        let n = r.len();
        for i in 0..n {
            assert_eq!(rev.segments[i].slope_rad, -r.segments[n - 1 - i].slope_rad);
        }
        rev.validate().unwrap();
    }

    #[test]
    fn grade_road_shape() {
        let r = grade_road(1.0, 2.0, -0.04, 50.0).unwrap();
        assert_eq!(r.len(), 20 + 40 + 20);
        assert!(r.segments[..20].iter().all(|s| s.slope_rad == 0.0));
        assert!(r.segments[20..60].iter().all(|s| (s.slope_rad + 0.04f64.atan()).abs() < 1e-12));
        assert!(r.segments[60..].iter().all(|s| s.slope_rad == 0.0));
        r.validate().unwrap();
    }
}
