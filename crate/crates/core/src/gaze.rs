//! Top-down attention: gaze traces, Gaussian gaze maps and the attention
//! dispersion score (ADS).

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{GrayMap, Mask};

/// One tracker sample. Coordinates are image pixels; pixel `(i, j)` has its
/// centre at `(i, j)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GazeSample {
    pub t_ms: f64,
    pub x: f64,
    pub y: f64,
    /// Absent in JSON means valid.
    #[serde(with = "bool_as_int", default = "always_valid")]
    pub valid: bool,
}

fn always_valid() -> bool {
    true
}

impl GazeSample {
    pub fn new(t_ms: f64, x: f64, y: f64) -> Self {
        Self {
            t_ms,
            x,
            y,
            valid: true,
        }
    }
}

mod bool_as_int {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(*v as u8)
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Flag {
        Bool(bool),
        Int(i64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match Flag::deserialize(d)? {
            Flag::Bool(b) => Ok(b),
            Flag::Int(1) => Ok(true),
            Flag::Int(0) => Ok(false),
            Flag::Int(other) => Err(de::Error::custom(format!("invalid `valid` flag `{other}`"))),
            Flag::Text(raw) => match raw.trim() {
                "1" | "true" => Ok(true),
                "0" | "false" => Ok(false),
                other => Err(de::Error::custom(format!("invalid `valid` flag `{other}`"))),
            },
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GazeTrace {
    pub image_id: String,
    pub samples: Vec<GazeSample>,
}

/// Header line of the gaze trace file format.
pub const TRACE_HEADER: &str = "t_ms,x,y,valid";

impl GazeTrace {
    pub fn new(image_id: impl Into<String>, samples: Vec<GazeSample>) -> Self {
        Self {
            image_id: image_id.into(),
            samples,
        }
    }

    pub fn valid_count(&self) -> usize {
        self.samples.iter().filter(|s| s.valid).count()
    }

    /// Reads a `t_ms,x,y,valid` file. The image id is the file stem.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let image_id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::from_reader(file, image_id, path)
    }

    pub fn from_reader(reader: impl std::io::Read, image_id: String, path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let parse_err = |line: Option<u64>, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let headers = rdr
            .headers()
            .map_err(|e| parse_err(Some(1), e.to_string()))?
            .clone();
        if headers.iter().collect::<Vec<_>>() != ["t_ms", "x", "y", "valid"] {
            return Err(parse_err(
                Some(1),
                format!("expected header `{TRACE_HEADER}`"),
            ));
        }
        let mut samples = Vec::new();
        let mut last_t = f64::NEG_INFINITY;
        for record in rdr.deserialize::<GazeSample>() {
            let sample = record.map_err(|e| {
                parse_err(e.position().map(|p| p.line()), e.to_string())
            })?;
            if !(sample.t_ms.is_finite() && sample.x.is_finite() && sample.y.is_finite()) {
                return Err(parse_err(
                    Some(samples.len() as u64 + 2),
                    "non-finite field".into(),
                ));
            }
            if sample.t_ms < last_t {
                return Err(parse_err(
                    Some(samples.len() as u64 + 2),
                    "timestamps must be non-decreasing".into(),
                ));
            }
            last_t = sample.t_ms;
            samples.push(sample);
        }
        Ok(Self { image_id, samples })
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(TRACE_HEADER);
        out.push('\n');
        for s in &self.samples {
            out.push_str(&format!("{},{},{},{}\n", s.t_ms, s.x, s.y, s.valid as u8));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}

/// Peak amplitude of the gaze Gaussian, `1 / (sqrt(2π) σ)`.
pub fn kernel_amplitude(sigma: f64) -> f64 {
    1.0 / ((2.0 * PI).sqrt() * sigma)
}

/// Gaze Gaussian evaluated at offset `(dx, dy)` from the gaze point.
#[inline]
pub fn kernel_value(dx: f64, dy: f64, sigma: f64) -> f64 {
    let two_var = 2.0 * sigma * sigma;
    kernel_amplitude(sigma) * (-(dy * dy) / two_var).exp() * (-(dx * dx) / two_var).exp()
}

/// Top-down attention map plus the gaze points that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct GazeMap {
    pub map: GrayMap,
    /// Deposited mass in units of one untruncated kernel.
    pub total_weight: f64,
    /// Gaze points that were deposited, in order.
    pub points: Vec<(f64, f64)>,
    /// Valid samples dropped for lying outside the frame.
    pub skipped_out_of_frame: usize,
    pub sigma: f64,
}

impl GazeMap {
    pub fn dims(&self) -> (u32, u32) {
        self.map.dims()
    }

    /// Attention value at a gaze point (nearest pixel).
    pub fn weight_at(&self, x: f64, y: f64) -> f64 {
        let xi = (x.round().max(0.0) as u32).min(self.map.width() - 1);
        let yi = (y.round().max(0.0) as u32).min(self.map.height() - 1);
        self.map.get(xi, yi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleOutcome {
    Deposited,
    Invalid,
    OutOfFrame,
}

/// Single-writer incremental gaze map. Appending samples in order gives the
/// same map, bit for bit, as building from the whole trace at once.
#[derive(Clone, Debug)]
pub struct GazeAccumulator {
    map: GrayMap,
    sigma: f64,
    deposited_sum: f64,
    points: Vec<(f64, f64)>,
    skipped: usize,
}

impl GazeAccumulator {
    pub fn new(dims: (u32, u32), sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid("sigma_px", format!("must be positive, got {sigma}")));
        }
        if dims.0 == 0 || dims.1 == 0 {
            return Err(Error::invalid("frame_dims", "must be positive"));
        }
        Ok(Self {
            map: GrayMap::zeros(dims.0, dims.1),
            sigma,
            deposited_sum: 0.0,
            points: Vec::new(),
            skipped: 0,
        })
    }

    pub fn in_frame(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x < self.map.width() as f64 && y < self.map.height() as f64
    }

    pub fn push(&mut self, sample: &GazeSample) -> SampleOutcome {
        if !sample.valid {
            return SampleOutcome::Invalid;
        }
        if !self.in_frame(sample.x, sample.y) {
            self.skipped += 1;
            return SampleOutcome::OutOfFrame;
        }
        let (w, h) = (self.map.width() as i64, self.map.height() as i64);
        let reach = 3.0 * self.sigma;
        let r = reach.ceil() as i64;
        let (cx, cy) = (sample.x.round() as i64, sample.y.round() as i64);
        let (x0, x1) = ((cx - r).max(0), (cx + r).min(w - 1));
        let (y0, y1) = ((cy - r).max(0), (cy + r).min(h - 1));
        // per-axis factors, multiplied in the same order as `kernel_value`
        let two_var = 2.0 * self.sigma * self.sigma;
        let amp = kernel_amplitude(self.sigma);
        let ex: Vec<f64> = (x0..=x1)
            .map(|x| {
                let dx = x as f64 - sample.x;
                (-(dx * dx) / two_var).exp()
            })
            .collect();
        let values = self.map.values_mut();
        for y in y0..=y1 {
            let dy = y as f64 - sample.y;
            let ey = amp * (-(dy * dy) / two_var).exp();
            for x in x0..=x1 {
                let dx = x as f64 - sample.x;
                if dx * dx + dy * dy > reach * reach {
                    continue;
                }
                let v = ey * ex[(x - x0) as usize];
                values[(y * w + x) as usize] += v;
                self.deposited_sum += v;
            }
        }
        self.points.push((sample.x, sample.y));
        SampleOutcome::Deposited
    }

    pub fn extend<'a>(&mut self, samples: impl IntoIterator<Item = &'a GazeSample>) {
        for s in samples {
            self.push(s);
        }
    }

    pub fn deposited(&self) -> usize {
        self.points.len()
    }

    pub fn snapshot(&self) -> GazeMap {
        GazeMap {
            map: self.map.clone(),
            total_weight: self.deposited_sum / ((2.0 * PI).sqrt() * self.sigma),
            points: self.points.clone(),
            skipped_out_of_frame: self.skipped,
            sigma: self.sigma,
        }
    }
}

/// Splats every valid sample of `trace` as a 3σ-truncated Gaussian.
pub fn build_gaze_map(trace: &GazeTrace, frame_dims: (u32, u32), sigma_px: f64) -> Result<GazeMap> {
    let mut acc = GazeAccumulator::new(frame_dims, sigma_px)?;
    if trace.valid_count() == 0 {
        return Err(Error::EmptyTrace);
    }
    acc.extend(&trace.samples);
    if acc.deposited() == 0 {
        return Err(Error::EmptyTrace);
    }
    if acc.skipped > 0 {
        log::warn!(
            "{}: {} gaze samples outside the {}x{} frame were skipped",
            trace.image_id,
            acc.skipped,
            frame_dims.0,
            frame_dims.1
        );
    }
    Ok(acc.snapshot())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdsResult {
    pub score: f64,
    pub center: (f64, f64),
}

const WEISZFELD_TOL: f64 = 1e-6;
const WEISZFELD_MAX_ITER: usize = 100_000;

/// Weighted geometric median by Weiszfeld iteration. When the iterate lands
/// on a data point that is not optimal, a half step toward the Weiszfeld
/// update of the remaining points is taken instead.
pub fn weighted_geometric_median(points: &[(f64, f64)], weights: &[f64]) -> Result<(f64, f64)> {
    if points.len() != weights.len() {
        return Err(Error::invalid("weights", "one weight per point required"));
    }
    let total: f64 = weights.iter().sum();
    if points.is_empty() || total.is_nan() || total <= 0.0 {
        return Err(Error::EmptyMap);
    }
    let mut cur = points
        .iter()
        .zip(weights)
        .fold((0.0, 0.0), |acc, (p, w)| (acc.0 + w * p.0, acc.1 + w * p.1));
    cur = (cur.0 / total, cur.1 / total);

    for _ in 0..WEISZFELD_MAX_ITER {
        let mut num = (0.0, 0.0);
        let mut den = 0.0;
        let mut coincident_weight = 0.0;
        // pull of the non-coincident points, for the optimality test
        let mut pull = (0.0, 0.0);
        for (p, &w) in points.iter().zip(weights) {
            if w <= 0.0 {
                continue;
            }
            let d = ((p.0 - cur.0).powi(2) + (p.1 - cur.1).powi(2)).sqrt();
            if d < 1e-12 {
                coincident_weight += w;
                continue;
            }
            num.0 += w * p.0 / d;
            num.1 += w * p.1 / d;
            den += w / d;
            pull.0 += w * (p.0 - cur.0) / d;
            pull.1 += w * (p.1 - cur.1) / d;
        }
        if den == 0.0 {
            // all mass sits at the current point
            return Ok(cur);
        }
        let target = (num.0 / den, num.1 / den);
        let next = if coincident_weight > 0.0 {
            if (pull.0 * pull.0 + pull.1 * pull.1).sqrt() <= coincident_weight {
                return Ok(cur);
            }
            (0.5 * (cur.0 + target.0), 0.5 * (cur.1 + target.1))
        } else {
            target
        };
        let step = ((next.0 - cur.0).powi(2) + (next.1 - cur.1).powi(2)).sqrt();
        cur = next;
        if step < WEISZFELD_TOL {
            break;
        }
    }
    Ok(cur)
}

/// ADS on an explicit weighted point set over a `width`×`height` map.
pub fn ads_points(points: &[(f64, f64)], weights: &[f64], dims: (u32, u32)) -> Result<AdsResult> {
    let center = weighted_geometric_median(points, weights)?;
    let center = (
        center.0.clamp(0.0, dims.0 as f64),
        center.1.clamp(0.0, dims.1 as f64),
    );
    let total: f64 = weights.iter().sum();
    let spread: f64 = points
        .iter()
        .zip(weights)
        .map(|(p, w)| w * ((p.0 - center.0).powi(2) + (p.1 - center.1).powi(2)).sqrt())
        .sum();
    let z = total * (dims.0 as f64 * dims.1 as f64).sqrt() / 100.0;
    Ok(AdsResult {
        score: spread / z,
        center,
    })
}

/// Attention dispersion score of a gaze map. Each deposited gaze point is
/// weighted by the map value under it.
pub fn ads(map: &GazeMap) -> Result<AdsResult> {
    if map.total_weight.is_nan() || map.total_weight <= 0.0 || map.points.is_empty() {
        return Err(Error::EmptyMap);
    }
    let weights: Vec<f64> = map.points.iter().map(|&(x, y)| map.weight_at(x, y)).collect();
    ads_points(&map.points, &weights, map.dims())
}

/// Value at quantile `q` of the positive entries (`floor(q·n)`-th smallest),
/// or `None` when there are none.
pub(crate) fn positive_quantile(map: &GrayMap, q: f64) -> Option<f64> {
    let mut vals: Vec<f64> = map.values().iter().copied().filter(|&v| v > 0.0).collect();
    if vals.is_empty() {
        return None;
    }
    let idx = ((q * vals.len() as f64).floor() as usize).min(vals.len() - 1);
    let (_, nth, _) = vals.select_nth_unstable_by(idx, f64::total_cmp);
    Some(*nth)
}

/// Pixels at or above the `quantile` of the map's positive values.
pub fn binarize_gaze(map: &GazeMap, quantile: f64) -> Result<Mask> {
    binarize_positive(&map.map, quantile)?.ok_or(Error::EmptyMap)
}

pub(crate) fn binarize_positive(map: &GrayMap, quantile: f64) -> Result<Option<Mask>> {
    if !(0.0..1.0).contains(&quantile) {
        return Err(Error::invalid("quantile", format!("must lie in [0, 1), got {quantile}")));
    }
    let Some(threshold) = positive_quantile(map, quantile) else {
        return Ok(None);
    };
    let bits = map.values().iter().map(|&v| v > 0.0 && v >= threshold).collect();
    Ok(Some(Mask::from_bits(map.width(), map.height(), bits)?))
}
