//! Scalar color-feature reference and planted-image builder.

use rand::Rng;

/// Chroma-based HSV conversion. Returns `(hue_degrees, saturation, value)`.
pub fn hsv(rgb: [f64; 3]) -> (f64, f64, f64) {
    let [r, g, b] = rgb;
    let v = r.max(g.max(b));
    let c = v - r.min(g.min(b));
    let s = if v == 0.0 { 0.0 } else { c / v };
    let sector = if c == 0.0 {
        0.0
    } else if v == r {
        ((g - b) / c).rem_euclid(6.0)
    } else if v == g {
        (b - r) / c + 2.0
    } else {
        (r - g) / c + 4.0
    };
    let mut h = sector * 60.0;
    if h >= 360.0 {
        h -= 360.0;
    }
    (h, s, v)
}

/// Textbook HSV to RGB.
pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let c = v * s;
    let hp = (h.rem_euclid(360.0)) / 60.0;
    let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

pub fn reliable(s: f64, v: f64) -> bool {
    (0.15..=0.95).contains(&v) && s > 0.2
}

fn in_sector(h: f64, center: f64, width: f64) -> bool {
    (h - center + width / 2.0).rem_euclid(360.0) < width
}

/// Feature row in the library's column order; `None` where a field is absent.
pub fn features(pixels: &[[f64; 3]]) -> Vec<Option<f64>> {
    let n = pixels.len() as f64;
    let hsv: Vec<(f64, f64, f64)> = pixels.iter().map(|&p| hsv(p)).collect();
    let hues: Vec<f64> = hsv.iter().filter(|p| reliable(p.1, p.2)).map(|p| p.0).collect();

    // Two passes: the one-pass form loses ~1e-8 to cancellation on flat images.
    let mean_v = hsv.iter().map(|p| p.2).sum::<f64>() / n;
    let mean_s = hsv.iter().map(|p| p.1).sum::<f64>() / n;
    let sd_v = (hsv.iter().map(|p| (p.2 - mean_v).powi(2)).sum::<f64>() / n).sqrt();
    let sd_s = (hsv.iter().map(|p| (p.1 - mean_s).powi(2)).sum::<f64>() / n).sqrt();
    let contrast = (2.0 * sd_v).min(1.0);

    let mut row = vec![Some(if hues.is_empty() { 1.0 } else { 0.0 }), Some(contrast)];
    if hues.is_empty() {
        row.push(Some(0.0));
        row.extend(std::iter::repeat_n(None, 29));
        return row;
    }
    let m = hues.len() as f64;

    let mut bins = [0u32; 20];
    for &h in &hues {
        let mut idx = 0;
        while idx < 19 && h >= 18.0 * (idx + 1) as f64 {
            idx += 1;
        }
        bins[idx] += 1;
    }
    let max = *bins.iter().max().unwrap() as f64;
    let count = bins.iter().filter(|&&b| b as f64 / max >= 0.05).count() as f64;
    row.push(Some(contrast * (1.0 + count).ln()));

    // 1 - R^2 from all pairwise angle differences
    let mut pair = 0.0;
    for a in &hues {
        for b in &hues {
            pair += (((a - b) * std::f64::consts::PI / 180.0) / 2.0).sin().powi(2);
        }
    }
    let spread = 2.0 * pair / (m * m);
    let resultant = (1.0 - spread).max(0.0).sqrt().max(f64::MIN_POSITIVE);
    let hue_sd = (-2.0 * resultant.ln()).sqrt() * 180.0 / std::f64::consts::PI;

    row.extend([
        mean_v,
        mean_s,
        sd_v,
        sd_s,
        hue_sd,
        0.69 * mean_v + 0.22 * mean_s,
        -0.31 * mean_v + 0.60 * mean_s,
        -0.76 * mean_v + 0.32 * mean_s,
        count.ln(),
    ]
    .map(Some));
    for k in 0..6 {
        let c = hues.iter().filter(|&&h| in_sector(h, 60.0 * k as f64, 60.0)).count();
        row.push(Some(c as f64 / m));
    }
    for k in 0..12 {
        let c = hues.iter().filter(|&&h| in_sector(h, 30.0 * k as f64, 30.0)).count();
        row.push(Some(c as f64 / m));
    }
    let warm = hues.iter().filter(|&&h| !(75.0 < h && h < 285.0)).count();
    let cold = hues.iter().filter(|&&h| 105.0 <= h && h <= 255.0).count();
    row.push(Some(warm as f64 / m));
    row.push(Some(cold as f64 / m));
    row
}

/// Random pixels mixing chromatic, dark, bright and gray regions.
pub fn random_pixels(rng: &mut impl Rng, n: usize) -> Vec<[f64; 3]> {
    (0..n)
        .map(|_| match rng.random_range(0..4) {
            0 => {
                let g = rng.random::<f64>();
                [g, g, g]
            }
            _ => [rng.random(), rng.random(), rng.random()],
        })
        .collect()
}

/// A block of identical pixels given in HSV.
#[derive(Debug, Clone, Copy)]
pub struct Patch {
    pub hue: f64,
    pub saturation: f64,
    pub value: f64,
    pub count: usize,
}

/// Values derived from the planted patches, not from any pixel analysis.
#[derive(Debug, Clone)]
pub struct Planted {
    pub pixels: Vec<[f64; 3]>,
    pub grayscale: bool,
    pub pleasure: Option<f64>,
    pub arousal: Option<f64>,
    pub dominance: Option<f64>,
    pub warm: Option<f64>,
    pub cold: Option<f64>,
    pub hue_count: Option<usize>,
}

/// Builds an image from patches and works out the expected features from the
/// patch parameters. Planted hues must stay clear of bin edges.
pub fn planted(patches: &[Patch]) -> Planted {
    let mut pixels = Vec::new();
    for p in patches {
        pixels.extend(std::iter::repeat_n(hsv_to_rgb(p.hue, p.saturation, p.value), p.count));
    }
    let total: usize = patches.iter().map(|p| p.count).sum();
    let live: Vec<&Patch> = patches.iter().filter(|p| reliable(p.saturation, p.value)).collect();
    let grayscale = live.is_empty();
    if grayscale {
        return Planted {
            pixels,
            grayscale,
            pleasure: None,
            arousal: None,
            dominance: None,
            warm: None,
            cold: None,
            hue_count: None,
        };
    }
    let v = patches.iter().map(|p| p.value * p.count as f64).sum::<f64>() / total as f64;
    let s = patches.iter().map(|p| p.saturation * p.count as f64).sum::<f64>() / total as f64;
    let live_total: usize = live.iter().map(|p| p.count).sum();
    let frac = |pred: &dyn Fn(f64) -> bool| {
        live.iter().filter(|p| pred(p.hue)).map(|p| p.count).sum::<usize>() as f64 / live_total as f64
    };
    let mut bins = [0usize; 20];
    for p in &live {
        bins[(p.hue / 18.0) as usize] += p.count;
    }
    let max = *bins.iter().max().unwrap();
    Planted {
        pixels,
        grayscale,
        pleasure: Some(0.69 * v + 0.22 * s),
        arousal: Some(-0.31 * v + 0.60 * s),
        dominance: Some(-0.76 * v + 0.32 * s),
        warm: Some(frac(&|h| h >= 285.0 || h <= 75.0)),
        cold: Some(frac(&|h| (105.0..=255.0).contains(&h))),
        hue_count: Some(bins.iter().filter(|&&b| b * 20 >= max).count()),
    }
}

/// A fixed family of planted images covering every formula branch.
pub fn planted_suite() -> Vec<Planted> {
    let p = |hue: f64, saturation: f64, value: f64, count: usize| Patch {
        hue,
        saturation,
        value,
        count,
    };
    let specs: Vec<Vec<Patch>> = vec![
        vec![p(0.0, 0.0, 0.5, 16)],
        vec![p(10.0, 0.8, 0.05, 9), p(0.0, 0.0, 0.7, 7)],
        vec![p(200.0, 0.9, 0.97, 12)],
        vec![p(120.0, 0.2, 0.5, 10)],
        vec![p(0.0, 0.5, 0.5, 1), p(0.0, 0.0, 0.3, 15)],
        vec![p(10.0, 0.6, 0.6, 25)],
        vec![p(180.0, 0.7, 0.4, 25)],
        vec![p(0.0, 0.8, 0.8, 4), p(90.0, 0.8, 0.8, 4), p(180.0, 0.8, 0.8, 4), p(270.0, 0.8, 0.8, 4)],
        vec![p(5.0, 0.9, 0.6, 1000), p(95.0, 0.9, 0.6, 49), p(131.0, 0.9, 0.6, 51)],
        (0..20).map(|b| p(18.0 * b as f64 + 9.0, 0.7, 0.7, 5)).collect(),
        vec![p(60.0, 0.5, 0.5, 8), p(240.0, 0.5, 0.5, 8)],
        vec![p(80.0, 0.9, 0.9, 6), p(270.0, 0.9, 0.9, 6)],
        vec![p(290.0, 0.4, 0.3, 3), p(100.0, 0.4, 0.3, 9)],
        vec![p(330.0, 1.0, 0.15, 7), p(30.0, 0.21, 0.95, 7)],
        vec![p(45.0, 0.6, 0.2, 20), p(45.0, 0.1, 0.9, 20)],
        vec![p(250.0, 0.9, 0.5, 100), p(264.0, 0.9, 0.5, 5), p(280.0, 0.9, 0.5, 4)],
        vec![p(350.0, 0.3, 0.9, 11), p(15.0, 0.3, 0.9, 11), p(0.0, 0.0, 0.0, 11)],
        vec![p(140.0, 0.55, 0.45, 1), p(141.0, 0.55, 0.45, 1)],
        vec![p(225.0, 0.75, 0.65, 30), p(315.0, 0.75, 0.65, 10), p(0.0, 0.0, 1.0, 20)],
        vec![p(100.0, 0.5, 0.5, 10), p(260.0, 0.5, 0.5, 10), p(275.0, 0.5, 0.5, 10)],
        vec![p(170.0, 0.33, 0.77, 3), p(350.0, 0.66, 0.22, 6), p(62.0, 0.99, 0.5, 9)],
        vec![p(0.0, 0.0, 1.0, 8), p(0.0, 0.0, 0.0, 8)],
        vec![p(13.0, 0.85, 0.35, 40), p(193.0, 0.85, 0.35, 2)],
        vec![p(76.0, 0.6, 0.6, 1), p(104.0, 0.6, 0.6, 1), p(256.0, 0.6, 0.6, 1), p(284.0, 0.6, 0.6, 1)],
    ];
    specs.iter().map(|s| planted(s)).collect()
}
