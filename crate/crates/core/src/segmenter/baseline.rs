use super::{Capabilities, CandidateMask, SegmenterBackend};
use crate::error::{Error, Result};
use crate::raster::{Frame, GrayMap, PixelPoint};

/// Regions larger than this fraction of the image are discarded.
pub const AREA_CAP_FRACTION: f64 = 0.05;
/// Relative tolerance offset for the stability score.
pub const STABILITY_OFFSET: f64 = 0.5;
/// Regions with fewer pixels are discarded.
pub const MIN_AREA: usize = 9;

/// Built-in segmenter: 4-connected luminance region growing from each prompt.
/// A mask's confidence is its stability: the area grown at half the
/// tolerance over the area grown at one and a half times the tolerance.
#[derive(Clone, Debug)]
pub struct BaselineBackend {
    /// Luminance tolerance on a 0..1 scale.
    pub tolerance: f64,
}

impl Default for BaselineBackend {
    fn default() -> Self {
        Self {
            tolerance: 12.0 / 255.0,
        }
    }
}

impl BaselineBackend {
    pub fn new(tolerance: f64) -> Self {
        Self { tolerance }
    }
}

fn luminance(frame: &Frame) -> GrayMap {
    let gray = frame.gray();
    gray.map(|v| v / 255.0).expect("finite")
}

fn area_cap(dims: (u32, u32)) -> usize {
    (AREA_CAP_FRACTION * dims.0 as f64 * dims.1 as f64).floor() as usize
}

fn local_mean(lum: &GrayMap, p: PixelPoint) -> f64 {
    let (w, h) = (lum.width() as i64, lum.height() as i64);
    let (mut sum, mut n) = (0.0, 0.0);
    for dy in -1..=1 {
        for dx in -1..=1 {
            let (x, y) = (p.x as i64 + dx, p.y as i64 + dy);
            if x >= 0 && y >= 0 && x < w && y < h {
                sum += lum.get(x as u32, y as u32);
                n += 1.0;
            }
        }
    }
    sum / n
}

enum Grown {
    Region(Vec<PixelPoint>),
    TooLarge,
}

/// Scratch state shared by successive fills over one image.
struct Filler<'a> {
    lum: &'a GrayMap,
    cap: usize,
    /// Pixels visited by any fill so far.
    claimed: Vec<bool>,
    /// `visit[i] == generation` marks pixels of the current fill.
    visit: Vec<u32>,
    generation: u32,
}

impl<'a> Filler<'a> {
    fn new(lum: &'a GrayMap) -> Self {
        let n = lum.values().len();
        Self {
            lum,
            cap: area_cap(lum.dims()),
            claimed: vec![false; n],
            visit: vec![0; n],
            generation: 0,
        }
    }

    fn is_claimed(&self, p: PixelPoint) -> bool {
        self.claimed[p.y as usize * self.lum.width() as usize + p.x as usize]
    }

    /// Flood fill from `seed`. The seed is always part of the region. With
    /// `claim` the visited pixels are recorded as claimed.
    fn grow(&mut self, seed: PixelPoint, tolerance: f64, claim: bool) -> Grown {
        let (w, h) = (self.lum.width() as usize, self.lum.height() as usize);
        let values = self.lum.values();
        let reference = local_mean(self.lum, seed);
        self.generation += 1;
        let g = self.generation;
        let start = seed.y as usize * w + seed.x as usize;
        self.visit[start] = g;
        self.claimed[start] |= claim;
        let mut stack = vec![start];
        let mut region = Vec::new();
        while let Some(i) = stack.pop() {
            region.push(PixelPoint::new((i % w) as u32, (i / w) as u32));
            if region.len() > self.cap {
                return Grown::TooLarge;
            }
            let (x, y) = (i % w, i / w);
            let neighbours = [
                (x > 0).then(|| i - 1),
                (x + 1 < w).then(|| i + 1),
                (y > 0).then(|| i - w),
                (y + 1 < h).then(|| i + w),
            ];
            for j in neighbours.into_iter().flatten() {
                if self.visit[j] != g && (values[j] - reference).abs() <= tolerance {
                    self.visit[j] = g;
                    self.claimed[j] |= claim;
                    stack.push(j);
                }
            }
        }
        region.sort_unstable();
        Grown::Region(region)
    }

    fn candidate(&mut self, seed: PixelPoint, tolerance: f64) -> Option<CandidateMask> {
        let region = match self.grow(seed, tolerance, true) {
            Grown::TooLarge => return None,
            Grown::Region(region) if region.len() < MIN_AREA => return None,
            Grown::Region(region) => region,
        };
        let conf = self.stability(seed, tolerance);
        CandidateMask::from_pixels(self.lum.dims(), &region, conf, seed)
    }

    /// Area of the fill at the tighter tolerance over the area at the looser
    /// one; 0 when the looser fill exceeds the cap.
    fn stability(&mut self, seed: PixelPoint, tolerance: f64) -> f64 {
        let loose = match self.grow(seed, tolerance * (1.0 + STABILITY_OFFSET), false) {
            Grown::Region(r) => r.len(),
            Grown::TooLarge => return 0.0,
        };
        match self.grow(seed, tolerance * (1.0 - STABILITY_OFFSET), false) {
            Grown::Region(r) => r.len() as f64 / loose as f64,
            Grown::TooLarge => unreachable!("tighter fill is contained in the looser one"),
        }
    }
}

/// Region of pixels 4-connected to `seed` whose luminance is within
/// `tolerance` of the seed's 3×3 mean. Regions above 5% of the frame area
/// yield `None`.
pub fn baseline_region_grow(
    roi_frame: &Frame,
    seed: PixelPoint,
    tolerance: f64,
) -> Result<Option<CandidateMask>> {
    if seed.x >= roi_frame.width() || seed.y >= roi_frame.height() {
        return Err(Error::OutOfBounds {
            x: seed.x,
            y: seed.y,
            width: roi_frame.width(),
            height: roi_frame.height(),
        });
    }
    let lum = luminance(roi_frame);
    Ok(Filler::new(&lum).candidate(seed, tolerance))
}

impl SegmenterBackend for BaselineBackend {
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            name: "baseline-region-grow".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            max_prompts: usize::MAX,
        }
    }

    /// Prompts that land on a pixel already visited by an earlier prompt's
    /// fill are merged into that fill and produce no mask of their own.
    fn segment_prompts(&self, image: &Frame, prompts: &[PixelPoint]) -> Result<Vec<CandidateMask>> {
        let lum = luminance(image);
        let mut filler = Filler::new(&lum);
        let mut out = Vec::new();
        for &p in prompts {
            if filler.is_claimed(p) {
                continue;
            }
            if let Some(m) = filler.candidate(p, self.tolerance) {
                out.push(m);
            }
        }
        Ok(out)
    }
}
