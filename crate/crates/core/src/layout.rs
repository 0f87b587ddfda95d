//! Window placement.
//!
//! Metric poses put windows on an arc around a standing user (origin at
//! floor level below the eyes, forward is +z). Desktop rects stack stages
//! vertically and push branch alternatives into side columns.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::notebook::Notebook;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutConfig {
    pub radius: f64,
    pub window_width: f64,
    pub window_height: f64,
    /// Arc length between neighbouring windows.
    pub gap: f64,
    /// Largest angle the row may cover, in radians.
    pub max_span: f64,
    pub eye_height: f64,
    /// Keep placing past `max_span` instead of failing.
    pub allow_overflow: bool,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig {
            radius: 1.0,
            window_width: 0.35,
            window_height: 0.30,
            gap: 0.0,
            max_span: PI,
            eye_height: 1.2,
            allow_overflow: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LayoutError {
    #[error("windows need a span of {required:.2} rad, more than the {max:.2} rad allowed")]
    OverflowSpan { required: f64, max: f64 },
    #[error("unknown branch strategy `{0}` (expected orthogonal, grid or column)")]
    UnknownStrategy(String),
    #[error("invalid layout config: {0}")]
    InvalidConfig(&'static str),
}

/// Window center and heading. `yaw` is the rotation about the vertical axis
/// that turns a window facing the user from straight ahead into this one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
}

impl LayoutConfig {
    fn validate(&self) -> Result<(), LayoutError> {
        if !(self.radius > 0.0) {
            return Err(LayoutError::InvalidConfig("radius must be positive"));
        }
        if !(self.window_width > 0.0) {
            return Err(LayoutError::InvalidConfig("window width must be positive"));
        }
        if !(self.gap >= 0.0) {
            return Err(LayoutError::InvalidConfig("gap must be non-negative"));
        }
        if !(self.max_span > 0.0 && self.max_span <= 2.0 * PI) {
            return Err(LayoutError::InvalidConfig("max span must be in (0, 2π]"));
        }
        Ok(())
    }

    /// Angle between neighbouring window centers (arc-length spacing).
    pub fn angular_step(&self) -> f64 {
        (self.window_width + self.gap) / self.radius
    }
}

/// `n` windows centered on the forward axis, spaced by equal arc length.
pub fn semicircle(cfg: &LayoutConfig, n: usize) -> Result<Vec<Pose>, LayoutError> {
    cfg.validate()?;
    let step = cfg.angular_step();
    let required = n as f64 * step;
    if required > cfg.max_span && !cfg.allow_overflow {
        return Err(LayoutError::OverflowSpan {
            required,
            max: cfg.max_span,
        });
    }
    let mid = (n as f64 - 1.0) / 2.0;
    Ok((0..n)
        .map(|i| {
            let theta = (i as f64 - mid) * step;
            Pose {
                x: cfg.radius * theta.sin(),
                y: cfg.eye_height,
                z: cfg.radius * theta.cos(),
                yaw: theta,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchStrategy {
    /// Siblings recede along the line from the user through the base window.
    Orthogonal,
    /// Row-major grid beside and below the base window.
    Grid,
    /// Siblings stacked below the base window.
    Column,
}

impl FromStr for BranchStrategy {
    type Err = LayoutError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "orthogonal" => Ok(BranchStrategy::Orthogonal),
            "grid" => Ok(BranchStrategy::Grid),
            "column" => Ok(BranchStrategy::Column),
            other => Err(LayoutError::UnknownStrategy(other.to_string())),
        }
    }
}

/// Poses for the `k` alternatives of a branch group whose first member sits at `base`.
pub fn branch_poses(
    strategy: BranchStrategy,
    base: Pose,
    k: usize,
    spacing: f64,
    cfg: &LayoutConfig,
) -> Vec<Pose> {
    let radial = {
        let len = base.x.hypot(base.z);
        if len > 0.0 {
            (base.x / len, base.z / len)
        } else {
            (base.yaw.sin(), base.yaw.cos())
        }
    };
    // horizontal tangent, pointing to the user's right at yaw 0
    let tangent = (base.yaw.cos(), -base.yaw.sin());
    (0..k)
        .map(|j| match strategy {
            BranchStrategy::Orthogonal => {
                let d = j as f64 * spacing;
                Pose {
                    x: base.x + radial.0 * d,
                    z: base.z + radial.1 * d,
                    ..base
                }
            }
            BranchStrategy::Grid => {
                let width = (k as f64).sqrt().ceil() as usize;
                let (row, col) = (j / width, j % width);
                let across = col as f64 * (cfg.window_width + spacing);
                Pose {
                    x: base.x + tangent.0 * across,
                    y: base.y - row as f64 * (cfg.window_height + spacing),
                    z: base.z + tangent.1 * across,
                    yaw: base.yaw,
                }
            }
            BranchStrategy::Column => Pose {
                y: base.y - j as f64 * (cfg.window_height + spacing),
                ..base
            },
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelConfig {
    pub window_w: u32,
    pub window_h: u32,
    pub vgap: u32,
    pub hgap: u32,
}

impl Default for PixelConfig {
    fn default() -> Self {
        PixelConfig {
            window_w: 2000,
            window_h: 600,
            vgap: 40,
            hgap: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesktopRect {
    pub x: i64,
    pub y: i64,
    pub width: u32,
    pub height: u32,
    /// 0 is the main chain; alternatives go to +1, -1, +2, -2, ...
    pub column: i64,
}

impl DesktopRect {
    pub fn overlaps(&self, other: &DesktopRect) -> bool {
        self.x < other.x + other.width as i64
            && other.x < self.x + self.width as i64
            && self.y < other.y + other.height as i64
            && other.y < self.y + self.height as i64
    }
}

/// Column for the `j`-th alternative of a stage: 0, +1, -1, +2, -2, ...
pub fn alternative_column(j: usize) -> i64 {
    let j = j as i64;
    if j == 0 {
        0
    } else if j % 2 == 1 {
        (j + 1) / 2
    } else {
        -(j / 2)
    }
}

pub fn desktop_layout(nb: &Notebook, px: &PixelConfig) -> BTreeMap<String, DesktopRect> {
    let row = (px.window_h + px.vgap) as i64;
    let col = (px.window_w + px.hgap) as i64;
    nb.windows()
        .map(|(pos, w)| {
            let column = alternative_column(pos.alt);
            (
                w.id.clone(),
                DesktopRect {
                    x: column * col,
                    y: pos.stage as i64 * row,
                    width: px.window_w,
                    height: px.window_h,
                    column,
                },
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> LayoutConfig {
        LayoutConfig::default()
    }

    #[test]
    fn single_window_faces_forward() {
        let p = semicircle(&cfg(), 1).unwrap();
        assert_eq!(
            p,
            vec![Pose {
                x: 0.0,
                y: 1.2,
                z: 1.0,
                yaw: 0.0
            }]
        );
    }

    #[test]
    fn two_windows_straddle_forward_axis() {
        let p = semicircle(&cfg(), 2).unwrap();
        // theta = ±0.35/2 rad
        assert!((p[0].x + 0.175_f64.sin()).abs() < 1e-12);
        assert!((p[1].x - 0.175_f64.sin()).abs() < 1e-12);
        assert!((p[1].x - 0.17411).abs() < 1e-5);
        assert_eq!(p[0].z, p[1].z);
    }

    #[test]
    fn ten_study_windows_overflow_half_circle() {
        let err = semicircle(&cfg(), 10).unwrap_err();
        let LayoutError::OverflowSpan { required, .. } = err else { panic!() };
        assert!((required - 3.5).abs() < 1e-12);
        let mut over = cfg();
        over.allow_overflow = true;
        assert_eq!(semicircle(&over, 10).unwrap().len(), 10);
        assert!(semicircle(&cfg(), 0).unwrap().is_empty());
    }

    #[test]
    fn invalid_configs() {
        let mut c = cfg();
        c.radius = 0.0;
        assert!(matches!(semicircle(&c, 1), Err(LayoutError::InvalidConfig(_))));
        let mut c = cfg();
        c.max_span = 7.0;
        assert!(matches!(semicircle(&c, 1), Err(LayoutError::InvalidConfig(_))));
    }

    #[test]
    fn branch_strategies() {
        let base = semicircle(&cfg(), 3).unwrap()[2];
        for s in [BranchStrategy::Orthogonal, BranchStrategy::Grid, BranchStrategy::Column] {
            assert_eq!(branch_poses(s, base, 1, 0.4, &cfg()), vec![base]);
        }
        let o = branch_poses(BranchStrategy::Orthogonal, base, 3, 0.4, &cfg());
        for (j, p) in o.iter().enumerate() {
            let r = p.x.hypot(p.z);
            assert!((r - (1.0 + 0.4 * j as f64)).abs() < 1e-12);
            assert!((p.x * base.z - p.z * base.x).abs() < 1e-12, "on the ray");
            assert_eq!(p.yaw, base.yaw);
        }
        let front = semicircle(&cfg(), 1).unwrap()[0];
        let g = branch_poses(BranchStrategy::Grid, front, 4, 0.1, &cfg());
        let offsets: Vec<(f64, f64)> = g
            .iter()
            .map(|p| (((p.x - front.x) * 100.0).round() / 100.0, ((p.y - front.y) * 100.0).round() / 100.0))
            .collect();
        assert_eq!(offsets, vec![(0.0, 0.0), (0.45, 0.0), (0.0, -0.4), (0.45, -0.4)]);
        let c = branch_poses(BranchStrategy::Column, front, 3, 0.1, &cfg());
        assert!((c[2].y - (1.2 - 0.8)).abs() < 1e-12);
        assert_eq!("diagonal".parse::<BranchStrategy>().unwrap_err(),
            LayoutError::UnknownStrategy("diagonal".into()));
    }

    #[test]
    fn desktop_columns_alternate() {
        assert_eq!((0..5).map(alternative_column).collect::<Vec<_>>(), [0, 1, -1, 2, -2]);
        let mut nb = Notebook::new_linear(&[vec!["a"], vec!["b"], vec!["c"]]);
        let rects = desktop_layout(&nb, &PixelConfig::default());
        assert_eq!(rects["w1"].y, 0);
        assert_eq!(rects["w2"].y, 640);
        assert_eq!(rects["w3"].y, 1280);
        assert!(rects.values().all(|r| r.column == 0));
        for _ in 0..3 {
            nb = nb.branch("w2").unwrap().0;
        }
        let rects = desktop_layout(&nb, &PixelConfig::default());
        let cols: Vec<i64> = nb.stages[1].alternatives.iter().map(|w| rects[&w.id].column).collect();
        assert_eq!(cols, [0, 1, -1, 2]);
        assert_eq!(rects[&nb.stages[1].alternatives[1].id].x, 2040);
        assert_eq!(rects[&nb.stages[1].alternatives[2].id].x, -2040);
    }
}
