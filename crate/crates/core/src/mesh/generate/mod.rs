//! Built-in planar mesh generators for the packaged and analytic cases.

pub mod cdt;
pub mod structured;

use serde::{Deserialize, Serialize};

/// A material inclusion in a planar domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Rect {
        region: String,
        center: [f64; 2],
        size: [f64; 2],
    },
    Disc {
        region: String,
        center: [f64; 2],
        radius: f64,
    },
}

impl Shape {
    pub fn region(&self) -> &str {
        match self {
            Shape::Rect { region, .. } | Shape::Disc { region, .. } => region,
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        match self {
            Shape::Rect { center, size, .. } => {
                (p[0] - center[0]).abs() < 0.5 * size[0] && (p[1] - center[1]).abs() < 0.5 * size[1]
            }
            Shape::Disc { center, radius, .. } => {
                (p[0] - center[0]).hypot(p[1] - center[1]) < *radius
            }
        }
    }

    /// Unsigned distance from `p` to the outline.
    pub fn distance(&self, p: [f64; 2]) -> f64 {
        match self {
            Shape::Rect { center, size, .. } => {
                let dx = (p[0] - center[0]).abs() - 0.5 * size[0];
                let dy = (p[1] - center[1]).abs() - 0.5 * size[1];
                if dx > 0.0 || dy > 0.0 {
                    dx.max(0.0).hypot(dy.max(0.0))
                } else {
                    -dx.max(dy)
                }
            }
            Shape::Disc { center, radius, .. } => {
                ((p[0] - center[0]).hypot(p[1] - center[1]) - radius).abs()
            }
        }
    }

    pub fn area(&self) -> f64 {
        match self {
            Shape::Rect { size, .. } => size[0] * size[1],
            Shape::Disc { radius, .. } => std::f64::consts::PI * radius * radius,
        }
    }
}

/// Region index of a point: the last shape containing it, else the background.
pub fn classify(shapes: &[Shape], names: &[String], p: [f64; 2]) -> usize {
    shapes
        .iter()
        .rev()
        .find(|s| s.contains(p))
        .and_then(|s| names.iter().position(|n| n == s.region()))
        .unwrap_or(0)
}

/// Region names: the background first, then each distinct shape region.
pub fn region_names(background: &str, shapes: &[Shape]) -> Vec<String> {
    let mut names = vec![background.to_string()];
    for s in shapes {
        if !names.iter().any(|n| n == s.region()) {
            names.push(s.region().to_string());
        }
    }
    names
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rect_distance_inside_and_outside() {
        let r = Shape::Rect {
            region: "m".into(),
            center: [0.0, 0.0],
            size: [2.0, 1.0],
        };
        assert!((r.distance([0.0, 0.0]) - 0.5).abs() < 1e-15);
        assert!((r.distance([2.0, 0.0]) - 1.0).abs() < 1e-15);
        assert!((r.distance([4.0, 4.5]) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn later_shapes_win() {
        let shapes = vec![
            Shape::Disc {
                region: "a".into(),
                center: [0.0, 0.0],
                radius: 1.0,
            },
            Shape::Disc {
                region: "b".into(),
                center: [0.0, 0.0],
                radius: 0.5,
            },
        ];
        let names = region_names("air", &shapes);
        assert_eq!(classify(&shapes, &names, [0.0, 0.0]), 2);
        assert_eq!(classify(&shapes, &names, [0.7, 0.0]), 1);
        assert_eq!(classify(&shapes, &names, [3.0, 0.0]), 0);
    }
}
