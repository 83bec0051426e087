//! Interpretable per-image color features and their mean pooling to users.
//!
//! Every feature here is a statistic over HSV pixels. Hue-based features only
//! look at pixels whose hue is reliable: value in `[0.15, 0.95]` and saturation
//! strictly above `0.2`. An image without a single such pixel is grayscale and
//! only carries the grayscale flag, contrast and the sharpness proxy.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_RELIABLE_VALUE: f64 = 0.15;
pub const MAX_RELIABLE_VALUE: f64 = 0.95;
pub const MIN_RELIABLE_SATURATION: f64 = 0.2;

/// Number of bins of the hue histogram behind the hue count.
pub const HUE_COUNT_BINS: usize = 20;
/// A bin counts as a distinct hue when it holds at least `1 / HUE_COUNT_RATIO`
/// of the fullest bin (5%).
const HUE_COUNT_RATIO: usize = 20;

pub const DEFAULT_MIN_IMAGES: usize = 20;

/// A raster with channels scaled to `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<[f64; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[f64; 3]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "image has no pixels ({width}x{height})"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "expected {} pixels for {width}x{height}, got {}",
                width * height,
                pixels.len()
            )));
        }
        if let Some(bad) = pixels
            .iter()
            .flatten()
            .find(|c| !(0.0..=1.0).contains(*c))
        {
            return Err(Error::InvalidInput(format!(
                "channel value {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Builds an image from interleaved 8-bit RGB samples.
    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != width * height * 3 {
            return Err(Error::InvalidInput(format!(
                "expected {} bytes for {width}x{height} RGB, got {}",
                width * height * 3,
                bytes.len()
            )));
        }
        let pixels = bytes
            .chunks_exact(3)
            .map(|p| {
                [
                    f64::from(p[0]) / 255.0,
                    f64::from(p[1]) / 255.0,
                    f64::from(p[2]) / 255.0,
                ]
            })
            .collect();
        Self::new(width, height, pixels)
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Result<Self> {
        Self::new(width, height, vec![rgb; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }

    fn hsv_pixels(&self) -> Vec<Hsv> {
        self.pixels.iter().map(|&p| rgb_to_hsv(p)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hsv {
    /// Degrees in `[0, 360)`; stored as 0 for achromatic pixels.
    pub hue: f64,
    pub saturation: f64,
    pub value: f64,
}

impl Hsv {
    /// Whether the hue of this pixel can be trusted.
    pub fn has_reliable_hue(&self) -> bool {
        (MIN_RELIABLE_VALUE..=MAX_RELIABLE_VALUE).contains(&self.value)
            && self.saturation > MIN_RELIABLE_SATURATION
    }
}

/// Hexcone RGB to HSV conversion.
pub fn rgb_to_hsv([r, g, b]: [f64; 3]) -> Hsv {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let saturation = if max > 0.0 { delta / max } else { 0.0 };
    let hue = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    Hsv {
        hue: wrap_degrees(hue),
        saturation,
        value: max,
    }
}

fn wrap_degrees(h: f64) -> f64 {
    let h = h.rem_euclid(360.0);
    if h >= 360.0 {
        0.0
    } else {
        h
    }
}

pub fn accurate_hue_mask(img: &RgbImage) -> Vec<bool> {
    img.pixels
        .iter()
        .map(|&p| rgb_to_hsv(p).has_reliable_hue())
        .collect()
}

pub fn is_grayscale(img: &RgbImage) -> bool {
    !img.pixels.iter().any(|&p| rgb_to_hsv(p).has_reliable_hue())
}

/// Pleasure, arousal and dominance as linear functions of mean brightness and saturation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affect {
    pub pleasure: f64,
    pub arousal: f64,
    pub dominance: f64,
}

pub fn affect_scores(brightness_mean: f64, saturation_mean: f64) -> Affect {
    let (v, s) = (brightness_mean, saturation_mean);
    Affect {
        pleasure: 0.69 * v + 0.22 * s,
        arousal: -0.31 * v + 0.60 * s,
        dominance: -0.76 * v + 0.32 * s,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HueCount {
    pub count: usize,
    pub log_count: f64,
}

fn reliable_hues(hsv: &[Hsv]) -> Vec<f64> {
    hsv.iter()
        .filter(|p| p.has_reliable_hue())
        .map(|p| p.hue)
        .collect()
}

pub fn hue_count(img: &RgbImage) -> Option<HueCount> {
    hue_count_from_hues(&reliable_hues(&img.hsv_pixels()))
}

/// Hue count over hues already known to be reliable. `None` for an empty slice.
pub fn hue_count_from_hues(hues: &[f64]) -> Option<HueCount> {
    if hues.is_empty() {
        return None;
    }
    let width = 360.0 / HUE_COUNT_BINS as f64;
    let mut bins = [0usize; HUE_COUNT_BINS];
    for &h in hues {
        let idx = ((h / width).floor() as usize).min(HUE_COUNT_BINS - 1);
        bins[idx] += 1;
    }
    let max = *bins.iter().max().expect("non-empty bins");
    let count = bins
        .iter()
        .filter(|&&mass| mass * HUE_COUNT_RATIO >= max)
        .count();
    Some(HueCount {
        count,
        log_count: (count as f64).ln(),
    })
}

/// Sector index for `hue` among `bins` sectors centered at multiples of `360 / bins`.
/// Sectors are half-open `[center - w/2, center + w/2)`.
pub fn hue_sector(hue: f64, bins: usize) -> usize {
    let width = 360.0 / bins as f64;
    let shifted = (hue + width / 2.0).rem_euclid(360.0);
    ((shifted / width).floor() as usize) % bins
}

pub type HueHistograms = ([f64; 6], [f64; 12]);

pub fn hue_histograms(img: &RgbImage) -> Option<HueHistograms> {
    hue_histograms_from_hues(&reliable_hues(&img.hsv_pixels()))
}

pub fn hue_histograms_from_hues(hues: &[f64]) -> Option<HueHistograms> {
    if hues.is_empty() {
        return None;
    }
    let mut six = [0.0; 6];
    let mut twelve = [0.0; 12];
    for &h in hues {
        six[hue_sector(h, 6)] += 1.0;
        twelve[hue_sector(h, 12)] += 1.0;
    }
    let n = hues.len() as f64;
    six.iter_mut().for_each(|c| *c /= n);
    twelve.iter_mut().for_each(|c| *c /= n);
    Some((six, twelve))
}

pub fn is_warm(hue: f64) -> bool {
    hue >= 285.0 || hue <= 75.0
}

pub fn is_cold(hue: f64) -> bool {
    (105.0..=255.0).contains(&hue)
}

pub fn warm_cold_fractions(img: &RgbImage) -> Option<(f64, f64)> {
    warm_cold_from_hues(&reliable_hues(&img.hsv_pixels()))
}

pub fn warm_cold_from_hues(hues: &[f64]) -> Option<(f64, f64)> {
    if hues.is_empty() {
        return None;
    }
    let n = hues.len() as f64;
    let warm = hues.iter().filter(|&&h| is_warm(h)).count() as f64 / n;
    let cold = hues.iter().filter(|&&h| is_cold(h)).count() as f64 / n;
    Some((warm, cold))
}

/// RMS contrast of brightness (twice the population sd of V, capped at 1) and
/// the sharpness proxy `contrast * ln(1 + hue count)`.
pub fn contrast_and_sharpness(img: &RgbImage) -> (f64, f64) {
    let hsv = img.hsv_pixels();
    let values: Vec<f64> = hsv.iter().map(|p| p.value).collect();
    let contrast = contrast_of(&values);
    let count = hue_count_from_hues(&reliable_hues(&hsv)).map_or(0, |h| h.count);
    (contrast, sharpness_of(contrast, count))
}

fn contrast_of(values: &[f64]) -> f64 {
    (2.0 * population_sd(values)).min(1.0)
}

fn sharpness_of(contrast: f64, hue_count: usize) -> f64 {
    contrast * (1.0 + hue_count as f64).ln()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

// Shifted by the first value so constant input gives exactly zero.
fn population_sd(xs: &[f64]) -> f64 {
    let shift = xs[0];
    let d: Vec<f64> = xs.iter().map(|x| x - shift).collect();
    let m = mean(&d);
    (d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / d.len() as f64).sqrt()
}

/// Circular standard deviation of angles in degrees, `sqrt(-2 ln R)`.
///
/// `1 - R` is accumulated from deviations about the mean direction so tightly
/// clustered hues do not lose precision to cancellation.
pub fn circular_sd_degrees(hues: &[f64]) -> f64 {
    let n = hues.len() as f64;
    let (s, c) = hues.iter().fold((0.0, 0.0), |(s, c), h| {
        let rad = h.to_radians();
        (s + rad.sin(), c + rad.cos())
    });
    if s == 0.0 && c == 0.0 {
        return (-2.0 * f64::MIN_POSITIVE.ln()).sqrt().to_degrees();
    }
    let centre = s.atan2(c);
    let (mut dev_sin, mut one_minus_cos) = (0.0, 0.0);
    for h in hues {
        let d = h.to_radians() - centre;
        dev_sin += d.sin();
        one_minus_cos += 2.0 * (d / 2.0).sin().powi(2);
    }
    let (s_bar, one_minus_c) = (dev_sin / n, one_minus_cos / n);
    let c_bar = 1.0 - one_minus_c;
    let r = c_bar.hypot(s_bar);
    let one_minus_r = (one_minus_c - s_bar * s_bar / (r + c_bar)).clamp(0.0, 1.0);
    let ln_r = if one_minus_r < 0.5 {
        (-one_minus_r).ln_1p()
    } else {
        (1.0 - one_minus_r).max(f64::MIN_POSITIVE).ln()
    };
    (-2.0 * ln_r).sqrt().to_degrees()
}

/// Features that only exist for images with at least one reliable-hue pixel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChromaticFeatures {
    pub brightness_mean: f64,
    pub saturation_mean: f64,
    pub brightness_sd: f64,
    pub saturation_sd: f64,
    pub hue_sd: f64,
    pub pleasure: f64,
    pub arousal: f64,
    pub dominance: f64,
    pub hue_count_log: f64,
    pub hue_hist6: [f64; 6],
    pub hue_hist12: [f64; 12],
    pub warm_fraction: f64,
    pub cold_fraction: f64,
}

const SCALAR_CHROMATIC: [&str; 9] = [
    "brightness_mean",
    "saturation_mean",
    "brightness_sd",
    "saturation_sd",
    "hue_sd",
    "pleasure",
    "arousal",
    "dominance",
    "hue_count_log",
];

impl ChromaticFeatures {
    pub fn column_names() -> Vec<String> {
        let mut names: Vec<String> = SCALAR_CHROMATIC.iter().map(|s| s.to_string()).collect();
        names.extend((0..6).map(|i| format!("hue_hist6_{i}")));
        names.extend((0..12).map(|i| format!("hue_hist12_{i}")));
        names.push("warm_fraction".into());
        names.push("cold_fraction".into());
        names
    }

    pub fn values(&self) -> Vec<f64> {
        let mut v = vec![
            self.brightness_mean,
            self.saturation_mean,
            self.brightness_sd,
            self.saturation_sd,
            self.hue_sd,
            self.pleasure,
            self.arousal,
            self.dominance,
            self.hue_count_log,
        ];
        v.extend_from_slice(&self.hue_hist6);
        v.extend_from_slice(&self.hue_hist12);
        v.push(self.warm_fraction);
        v.push(self.cold_fraction);
        v
    }

    fn from_values(v: &[f64]) -> Self {
        let mut hue_hist6 = [0.0; 6];
        let mut hue_hist12 = [0.0; 12];
        hue_hist6.copy_from_slice(&v[9..15]);
        hue_hist12.copy_from_slice(&v[15..27]);
        Self {
            brightness_mean: v[0],
            saturation_mean: v[1],
            brightness_sd: v[2],
            saturation_sd: v[3],
            hue_sd: v[4],
            pleasure: v[5],
            arousal: v[6],
            dominance: v[7],
            hue_count_log: v[8],
            hue_hist6,
            hue_hist12,
            warm_fraction: v[27],
            cold_fraction: v[28],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorFeatures {
    pub is_grayscale: bool,
    pub contrast: f64,
    pub sharpness_proxy: f64,
    /// Absent for grayscale images.
    pub chromatic: Option<ChromaticFeatures>,
}

impl ColorFeatures {
    pub fn column_names() -> Vec<String> {
        let mut names = vec![
            "is_grayscale".to_string(),
            "contrast".to_string(),
            "sharpness_proxy".to_string(),
        ];
        names.extend(ChromaticFeatures::column_names());
        names
    }

    /// One value per column of [`ColorFeatures::column_names`]; `None` marks absent fields.
    pub fn values(&self) -> Vec<Option<f64>> {
        let mut row = vec![
            Some(if self.is_grayscale { 1.0 } else { 0.0 }),
            Some(self.contrast),
            Some(self.sharpness_proxy),
        ];
        match &self.chromatic {
            Some(c) => row.extend(c.values().into_iter().map(Some)),
            None => row.extend(std::iter::repeat_n(
                None,
                ChromaticFeatures::column_names().len(),
            )),
        }
        row
    }
}

pub fn extract_color_features(img: &RgbImage) -> ColorFeatures {
    let hsv = img.hsv_pixels();
    let values: Vec<f64> = hsv.iter().map(|p| p.value).collect();
    let hues = reliable_hues(&hsv);
    let contrast = contrast_of(&values);

    let Some(count) = hue_count_from_hues(&hues) else {
        return ColorFeatures {
            is_grayscale: true,
            contrast,
            sharpness_proxy: 0.0,
            chromatic: None,
        };
    };
    let saturations: Vec<f64> = hsv.iter().map(|p| p.saturation).collect();
    let brightness_mean = mean(&values);
    let saturation_mean = mean(&saturations);
    let affect = affect_scores(brightness_mean, saturation_mean);
    let (hue_hist6, hue_hist12) = hue_histograms_from_hues(&hues).expect("reliable hues exist");
    let (warm_fraction, cold_fraction) = warm_cold_from_hues(&hues).expect("reliable hues exist");

    ColorFeatures {
        is_grayscale: false,
        contrast,
        sharpness_proxy: sharpness_of(contrast, count.count),
        chromatic: Some(ChromaticFeatures {
            brightness_mean,
            saturation_mean,
            brightness_sd: population_sd(&values),
            saturation_sd: population_sd(&saturations),
            hue_sd: circular_sd_degrees(&hues),
            pleasure: affect.pleasure,
            arousal: affect.arousal,
            dominance: affect.dominance,
            hue_count_log: count.log_count,
            hue_hist6,
            hue_hist12,
            warm_fraction,
            cold_fraction,
        }),
    }
}

/// One image as seen by user-level aggregation.
#[derive(Debug, Clone, Copy)]
pub struct ImageObservation<'a> {
    pub features: &'a ColorFeatures,
    /// Content tags, when the image has been tagged.
    pub tags: Option<&'a [String]>,
}

#[derive(Debug, Clone)]
pub struct AggregateOptions {
    pub min_images: usize,
    pub person_tags: BTreeSet<String>,
    /// Total number of posts by the user, images or not.
    pub n_posts: Option<usize>,
}

impl Default for AggregateOptions {
    fn default() -> Self {
        Self {
            min_images: DEFAULT_MIN_IMAGES,
            person_tags: default_person_tags(),
            n_posts: None,
        }
    }
}

pub fn default_person_tags() -> BTreeSet<String> {
    [
        "people", "person", "man", "woman", "child", "boy", "girl", "portrait", "face", "adult",
        "male", "female", "couple", "family", "group", "kid",
    ]
    .into_iter()
    .map(String::from)
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserFeatureVector {
    pub user_id: String,
    pub n_images: usize,
    /// Set when the user has fewer images than the configured minimum.
    pub below_min_images: bool,
    pub grayscale_fraction: f64,
    pub contrast: f64,
    pub sharpness_proxy: f64,
    /// Mean over the user's non-grayscale images; absent if all were grayscale.
    pub chromatic: Option<ChromaticFeatures>,
    pub pct_image_posts: Option<f64>,
    pub pct_posts_with_people: Option<f64>,
}

impl UserFeatureVector {
    pub fn column_names() -> Vec<String> {
        let mut names = vec![
            "grayscale_fraction".to_string(),
            "contrast".to_string(),
            "sharpness_proxy".to_string(),
        ];
        names.extend(ChromaticFeatures::column_names());
        names.push("pct_image_posts".into());
        names.push("pct_posts_with_people".into());
        names
    }

    pub fn values(&self) -> Vec<Option<f64>> {
        let mut row = vec![
            Some(self.grayscale_fraction),
            Some(self.contrast),
            Some(self.sharpness_proxy),
        ];
        match &self.chromatic {
            Some(c) => row.extend(c.values().into_iter().map(Some)),
            None => row.extend(std::iter::repeat_n(
                None,
                ChromaticFeatures::column_names().len(),
            )),
        }
        row.push(self.pct_image_posts);
        row.push(self.pct_posts_with_people);
        row
    }
}

/// Mean-pools per-image features into one user vector.
pub fn aggregate_user(
    user_id: &str,
    images: &[ImageObservation<'_>],
    options: &AggregateOptions,
) -> Result<UserFeatureVector> {
    if images.is_empty() {
        return Err(Error::InvalidInput(format!("user `{user_id}` has no images")));
    }
    let n = images.len();
    let grayscale = images.iter().filter(|i| i.features.is_grayscale).count();
    let contrast = images.iter().map(|i| i.features.contrast).sum::<f64>() / n as f64;
    let sharpness_proxy = images.iter().map(|i| i.features.sharpness_proxy).sum::<f64>() / n as f64;

    let colored: Vec<Vec<f64>> = images
        .iter()
        .filter_map(|i| i.features.chromatic.as_ref().map(ChromaticFeatures::values))
        .collect();
    let chromatic = (!colored.is_empty()).then(|| {
        let width = colored[0].len();
        let sums = colored.iter().fold(vec![0.0; width], |mut acc, row| {
            acc.iter_mut().zip(row).for_each(|(a, v)| *a += v);
            acc
        });
        let means: Vec<f64> = sums.iter().map(|s| s / colored.len() as f64).collect();
        ChromaticFeatures::from_values(&means)
    });

    let tagged: Vec<&[String]> = images.iter().filter_map(|i| i.tags).collect();
    let pct_posts_with_people = (!tagged.is_empty()).then(|| {
        let with_people = tagged
            .iter()
            .filter(|tags| tags.iter().any(|t| options.person_tags.contains(t)))
            .count();
        with_people as f64 / tagged.len() as f64
    });

    let pct_image_posts = match options.n_posts {
        Some(0) => None,
        Some(posts) if posts < n => {
            return Err(Error::InvalidInput(format!(
                "user `{user_id}` has {n} images but only {posts} posts"
            )))
        }
        Some(posts) => Some(n as f64 / posts as f64),
        None => None,
    };

    Ok(UserFeatureVector {
        user_id: user_id.to_string(),
        n_images: n,
        below_min_images: n < options.min_images,
        grayscale_fraction: grayscale as f64 / n as f64,
        contrast,
        sharpness_proxy,
        chromatic,
        pct_image_posts,
        pct_posts_with_people,
    })
}
