//! Entropy grids, entropy-collapse reports and heatmaps.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::ProbabilityDistribution;
use crate::error::{Error, Result};

/// Default cutoff below which a site counts as low entropy.
pub const DEFAULT_LOW_ENTROPY_THRESHOLD: f64 = 0.25;

/// Header row of the collapse CSV.
pub const COLLAPSE_CSV_HEADER: [&str; 4] = ["frame", "avg_entropy", "low_entropy_share", "top1_mass"];

/// Normalized entropies of one frame, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyGrid {
    pub frame_index: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl EntropyGrid {
    pub fn new(frame_index: usize, height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::DimensionMismatch { expected: height * width, actual: values.len() });
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::EntropyOutOfRange(*v));
        }
        Ok(Self { frame_index, height, width, values })
    }

    pub fn sites(&self) -> usize {
        self.values.len()
    }
}

pub fn entropy_grid(
    dists: &[ProbabilityDistribution],
    frame_index: usize,
    height: usize,
    width: usize,
) -> Result<EntropyGrid> {
    if dists.len() != height * width {
        return Err(Error::DimensionMismatch { expected: height * width, actual: dists.len() });
    }
    let values = dists.iter().map(ProbabilityDistribution::normalized_entropy).collect();
    EntropyGrid::new(frame_index, height, width, values)
}

pub fn frame_avg_entropy(grid: &EntropyGrid) -> f64 {
    if grid.values.is_empty() {
        return 0.0;
    }
    let mean = grid.values.iter().sum::<f64>() / grid.values.len() as f64;
    mean.clamp(0.0, 1.0)
}

/// Fraction of sites with entropy strictly below `threshold`.
pub fn low_entropy_share(grid: &EntropyGrid, threshold: f64) -> Result<f64> {
    check_threshold(threshold)?;
    if grid.values.is_empty() {
        return Ok(0.0);
    }
    let low = grid.values.iter().filter(|&&h| h < threshold).count();
    Ok(low as f64 / grid.values.len() as f64)
}

fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidThreshold(threshold))
    }
}

/// Per-frame entropy and confidence series over a rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseReport {
    pub frame_avg_entropy: Vec<f64>,
    pub low_entropy_share: Vec<f64>,
    pub threshold: f64,
    pub top1_mass_avg: Vec<f64>,
}

impl CollapseReport {
    pub fn frames(&self) -> usize {
        self.frame_avg_entropy.len()
    }

    /// CSV with one row per frame and six fractional digits.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let row_err = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(COLLAPSE_CSV_HEADER).map_err(row_err)?;
        for t in 0..self.frames() {
            w.write_record([
                t.to_string(),
                format!("{:.6}", self.frame_avg_entropy[t]),
                format!("{:.6}", self.low_entropy_share[t]),
                format!("{:.6}", self.top1_mass_avg[t]),
            ])
            .map_err(row_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is ascii"))
    }
}

/// Build the collapse series from per-frame site distributions.
pub fn collapse_report(
    per_frame_dists: &[Vec<ProbabilityDistribution>],
    threshold: f64,
) -> Result<CollapseReport> {
    check_threshold(threshold)?;
    let sites = per_frame_dists.first().map_or(0, Vec::len);
    if let Some(bad) = per_frame_dists.iter().find(|f| f.len() != sites) {
        return Err(Error::DimensionMismatch { expected: sites, actual: bad.len() });
    }
    let rows: Vec<(f64, f64, f64)> = per_frame_dists
        .par_iter()
        .enumerate()
        .map(|(t, frame)| {
            let grid = entropy_grid(frame, t, 1, sites)?;
            let top1 = if sites == 0 {
                0.0
            } else {
                frame.iter().map(ProbabilityDistribution::top1).sum::<f64>() / sites as f64
            };
            Ok((frame_avg_entropy(&grid), low_entropy_share(&grid, threshold)?, top1))
        })
        .collect::<Result<_>>()?;
    Ok(report_from_rows(rows, threshold))
}

/// Same series computed from already-built grids and per-frame top-1 means.
pub fn collapse_report_from_grids(
    grids: &[EntropyGrid],
    top1_mass_avg: Vec<f64>,
    threshold: f64,
) -> Result<CollapseReport> {
    check_threshold(threshold)?;
    if grids.len() != top1_mass_avg.len() {
        return Err(Error::DimensionMismatch { expected: grids.len(), actual: top1_mass_avg.len() });
    }
    let mut rows = Vec::with_capacity(grids.len());
    for (g, top1) in grids.iter().zip(top1_mass_avg) {
        rows.push((frame_avg_entropy(g), low_entropy_share(g, threshold)?, top1));
    }
    Ok(report_from_rows(rows, threshold))
}

fn report_from_rows(rows: Vec<(f64, f64, f64)>, threshold: f64) -> CollapseReport {
    let mut report = CollapseReport {
        frame_avg_entropy: Vec::with_capacity(rows.len()),
        low_entropy_share: Vec::with_capacity(rows.len()),
        threshold,
        top1_mass_avg: Vec::with_capacity(rows.len()),
    };
    for (avg, share, top1) in rows {
        report.frame_avg_entropy.push(avg);
        report.low_entropy_share.push(share);
        report.top1_mass_avg.push(top1);
    }
    report
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeatmapImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

/// Blue at entropy 0, red at entropy 1, linear in between.
pub fn colormap(h_norm: f64) -> [u8; 3] {
    let h = h_norm.clamp(0.0, 1.0);
    let quantize = |x: f64| (255.0 * x + 0.5).floor() as u8;
    [quantize(h), 0, quantize(1.0 - h)]
}

pub fn render_heatmap(grid: &EntropyGrid, scale: usize) -> HeatmapImage {
    let scale = scale.max(1);
    let (width, height) = (grid.width * scale, grid.height * scale);
    let mut pixels = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            pixels.push(colormap(grid.values[(y / scale) * grid.width + x / scale]));
        }
    }
    HeatmapImage { width, height, pixels }
}

impl HeatmapImage {
    /// Binary PPM (P6), top row first.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.reserve(self.pixels.len() * 3);
        for px in &self.pixels {
            out.extend_from_slice(px);
        }
        out
    }

    pub fn write_ppm<W: Write>(&self, mut sink: W) -> Result<()> {
        sink.write_all(&self.to_ppm())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(values: &[f64]) -> EntropyGrid {
        EntropyGrid::new(0, 1, values.len(), values.to_vec()).unwrap()
    }

    #[test]
    fn grid_from_dists() {
        let u = ProbabilityDistribution::uniform(4).unwrap();
        let o = ProbabilityDistribution::one_hot(4, 2).unwrap();
        let g = entropy_grid(&vec![u.clone(); 4], 0, 2, 2).unwrap();
        assert!(g.values.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        let g = entropy_grid(&vec![o.clone(); 4], 0, 2, 2).unwrap();
        assert!(g.values.iter().all(|&v| v == 0.0));
        let g = entropy_grid(&[u.clone(), u, o.clone(), o], 3, 2, 2).unwrap();
        let rounded: Vec<f64> = g.values.iter().map(|v| v.round()).collect();
        assert_eq!(rounded, vec![1.0, 1.0, 0.0, 0.0]);
        assert_eq!(g.frame_index, 3);
        assert!((frame_avg_entropy(&g) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn grid_dimension_mismatch() {
        let u = ProbabilityDistribution::uniform(4).unwrap();
        assert_eq!(
            entropy_grid(&[u.clone(), u], 0, 2, 2),
            Err(Error::DimensionMismatch { expected: 4, actual: 2 })
        );
    }

    #[test]
    fn low_share_examples() {
        assert_eq!(low_entropy_share(&grid(&[0.0; 4]), 0.25).unwrap(), 1.0);
        assert_eq!(low_entropy_share(&grid(&[1.0; 4]), 0.25).unwrap(), 0.0);
        assert_eq!(low_entropy_share(&grid(&[0.1, 0.3, 0.2, 0.9]), 0.25).unwrap(), 0.5);
        // strict inequality
        assert_eq!(low_entropy_share(&grid(&[0.25]), 0.25).unwrap(), 0.0);
        assert!(low_entropy_share(&grid(&[0.1]), 0.0).is_err());
        assert!(low_entropy_share(&grid(&[0.1]), 1.0).is_err());
    }

    #[test]
    fn colormap_fixtures() {
        assert_eq!(colormap(0.0), [0, 0, 255]);
        assert_eq!(colormap(0.5), [128, 0, 128]);
        assert_eq!(colormap(1.0), [255, 0, 0]);
    }

    #[test]
    fn heatmap_scaling_and_ppm() {
        let g = EntropyGrid::new(0, 1, 2, vec![0.0, 1.0]).unwrap();
        let img = render_heatmap(&g, 2);
        assert_eq!((img.width, img.height), (4, 2));
        assert_eq!(img.pixels[0], [0, 0, 255]);
        assert_eq!(img.pixels[1], [0, 0, 255]);
        assert_eq!(img.pixels[2], [255, 0, 0]);
        assert_eq!(img.pixels[4], [0, 0, 255]);
        let ppm = img.to_ppm();
        assert!(ppm.starts_with(b"P6\n4 2\n255\n"));
        assert_eq!(ppm.len(), 11 + 4 * 2 * 3);
    }

    #[test]
    fn csv_layout() {
        let r = CollapseReport {
            frame_avg_entropy: vec![0.5, 0.25],
            low_entropy_share: vec![0.0, 1.0],
            threshold: 0.25,
            top1_mass_avg: vec![0.4, 0.123_456_789],
        };
        let csv = r.to_csv().unwrap();
        assert_eq!(
            csv,
            "frame,avg_entropy,low_entropy_share,top1_mass\n\
             0,0.500000,0.000000,0.400000\n\
             1,0.250000,1.000000,0.123457\n"
        );
    }

    #[test]
    fn collapse_on_trending_frames() {
        let frames: Vec<Vec<ProbabilityDistribution>> = [0.3, 0.6, 0.9, 0.99]
            .iter()
            .map(|&top| {
                let rest = (1.0 - top) / 3.0;
                vec![ProbabilityDistribution::new(vec![top, rest, rest, rest]).unwrap(); 4]
            })
            .collect();
        let r = collapse_report(&frames, 0.25).unwrap();
        assert!(r.frame_avg_entropy.windows(2).all(|w| w[1] < w[0]));
        assert!((r.top1_mass_avg[3] - 0.99).abs() < 1e-12);
        let constant = vec![frames[0].clone(); 3];
        let r = collapse_report(&constant, 0.25).unwrap();
        assert!(r.frame_avg_entropy.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn collapse_rejects_ragged_frames() {
        let u = ProbabilityDistribution::uniform(4).unwrap();
        let frames = vec![vec![u.clone(); 2], vec![u; 3]];
        assert!(matches!(collapse_report(&frames, 0.25), Err(Error::DimensionMismatch { .. })));
    }
}
