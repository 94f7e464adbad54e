use crate::error::{Error, Result};

use super::components::largest_component;
use super::CoverageGrid;

/// Floor on the per-row half-width, in patch units.
pub const H_MIN: f64 = 0.5;

/// Which centerline the angular offset is measured from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CenterlineMode {
    /// One centerline for the whole image: the mean of per-row midpoints.
    #[default]
    Mean,
    /// Each ROI row's own midpoint; other rows fall back to the mean.
    PerRow,
}

/// Landmarks of the ROI component on the patch grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarGeometry {
    pub grid_h: usize,
    pub grid_w: usize,
    pub m_apex: usize,
    pub m_bottom: usize,
    pub n_center: f64,
    /// `h(m)` for every grid row; [`H_MIN`] on rows without ROI patches.
    pub half_width: Vec<f64>,
    /// `(n_left + n_right) / 2` for ROI rows.
    pub row_midpoint: Vec<Option<f64>>,
}

impl PolarGeometry {
    pub fn is_roi_row(&self, m: usize) -> bool {
        self.row_midpoint.get(m).is_some_and(|c| c.is_some())
    }

    pub fn roi_rows(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.grid_h).filter(|&m| self.is_roi_row(m))
    }

    /// `h(m)`, or [`H_MIN`] outside the ROI rows.
    pub fn half_width_at(&self, m: usize) -> f64 {
        if self.is_roi_row(m) {
            self.half_width[m].max(H_MIN)
        } else {
            H_MIN
        }
    }

    pub fn center_at(&self, m: usize, mode: CenterlineMode) -> f64 {
        match mode {
            CenterlineMode::Mean => self.n_center,
            CenterlineMode::PerRow => self
                .row_midpoint
                .get(m)
                .copied()
                .flatten()
                .unwrap_or(self.n_center),
        }
    }

    pub fn flip_horizontal(&self) -> Self {
        let last = (self.grid_w - 1) as f64;
        Self {
            n_center: last - self.n_center,
            row_midpoint: self.row_midpoint.iter().map(|c| c.map(|c| last - c)).collect(),
            ..self.clone()
        }
    }
}

/// Landmarks from the largest 4-connected component of patches with
/// `v_i >= tau`.
///
/// Per ROI row, `h(m) = max(0.5, (n_right - n_left) / 2)`; `n_center` is the
/// mean of the per-row midpoints.
pub fn polar_landmarks(coverage: &CoverageGrid, tau: f64) -> Result<PolarGeometry> {
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::InvalidInput(format!("tau must lie in [0, 1), got {tau}")));
    }
    let (gh, gw) = (coverage.grid_h(), coverage.grid_w());
    let roi: Vec<bool> = coverage.v.iter().map(|&v| v >= tau).collect();
    let component = largest_component(&roi, gh, gw).ok_or(Error::EmptyRoi)?;

    let mut extent: Vec<Option<(usize, usize)>> = vec![None; gh];
    for (i, _) in component.iter().enumerate().filter(|(_, &b)| b) {
        let (m, n) = (i / gw, i % gw);
        extent[m] = Some(match extent[m] {
            None => (n, n),
            Some((l, r)) => (l.min(n), r.max(n)),
        });
    }
    let rows: Vec<usize> = (0..gh).filter(|&m| extent[m].is_some()).collect();
    let (m_apex, m_bottom) = (rows[0], *rows.last().unwrap());

    let mut half_width = vec![H_MIN; gh];
    let mut row_midpoint = vec![None; gh];
    for &m in &rows {
        let (l, r) = extent[m].unwrap();
        half_width[m] = ((r - l) as f64 / 2.0).max(H_MIN);
        row_midpoint[m] = Some((l + r) as f64 / 2.0);
    }
    let n_center = rows.iter().map(|&m| row_midpoint[m].unwrap()).sum::<f64>() / rows.len() as f64;

    Ok(PolarGeometry {
        grid_h: gh,
        grid_w: gw,
        m_apex,
        m_bottom,
        n_center,
        half_width,
        row_midpoint,
    })
}
