use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Simple polygon in pixel coordinates, implicitly closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct RoiPolygon {
    vertices: Vec<[f64; 2]>,
}

impl TryFrom<Vec<[f64; 2]>> for RoiPolygon {
    type Error = crate::Error;

    fn try_from(v: Vec<[f64; 2]>) -> Result<Self> {
        RoiPolygon::new(v)
    }
}

impl From<RoiPolygon> for Vec<[f64; 2]> {
    fn from(p: RoiPolygon) -> Self {
        p.vertices
    }
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

fn segments_intersect(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let (d1, d2) = (orient(c, d, a), orient(c, d, b));
    let (d3, d4) = (orient(a, b, c), orient(a, b, d));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

impl RoiPolygon {
    pub fn new(vertices: Vec<[f64; 2]>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(invalid(format!(
                "an ROI polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("ROI vertices must be finite"));
        }
        let n = vertices.len();
        for i in 0..n {
            let (a, b) = (vertices[i], vertices[(i + 1) % n]);
            for j in i + 1..n {
                // Skip edges sharing a vertex with edge i.
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                let (c, d) = (vertices[j], vertices[(j + 1) % n]);
                if segments_intersect(a, b, c, d) {
                    return Err(invalid(format!("ROI edges {i} and {j} intersect")));
                }
            }
        }
        Ok(Self { vertices })
    }

    /// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        Self::new(vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn within_bounds(&self, width: usize, height: usize) -> bool {
        self.vertices
            .iter()
            .all(|v| v[0] >= 0.0 && v[1] >= 0.0 && v[0] <= width as f64 && v[1] <= height as f64)
    }

    /// `(min_x, min_y, max_x, max_y)`.
    pub fn bounding_box(&self) -> (f64, f64, f64, f64) {
        self.vertices.iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(a, b, c, d), v| (a.min(v[0]), b.min(v[1]), c.max(v[0]), d.max(v[1])),
        )
    }

    /// Even-odd rule: count edge crossings of a ray towards +x.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let n = self.vertices.len();
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let [xi, yi] = self.vertices[i];
            let [xj, yj] = self.vertices[j];
            if (yi > y) != (yj > y) {
                let x_cross = xi + (y - yi) * (xj - xi) / (yj - yi);
                if x < x_cross {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_short_and_self_intersecting() {
        assert!(RoiPolygon::new(vec![[0.0, 0.0], [1.0, 1.0]]).is_err());
        // Bow tie.
        let bow = vec![[0.0, 0.0], [10.0, 10.0], [10.0, 0.0], [0.0, 10.0]];
        assert!(RoiPolygon::new(bow).is_err());
    }

    #[test]
    fn square_membership() {
        let sq = RoiPolygon::rectangle(0.0, 0.0, 10.0, 10.0).unwrap();
        assert!(sq.contains(5.0, 5.0));
        assert!(!sq.contains(15.0, 5.0));
        assert!(!sq.contains(5.0, -1.0));
    }

    #[test]
    fn concave_notch_is_outside() {
        // U shape: notch between x in (3, 7) above y = 5.
        let u = RoiPolygon::new(vec![
            [0.0, 0.0],
            [10.0, 0.0],
            [10.0, 10.0],
            [7.0, 10.0],
            [7.0, 5.0],
            [3.0, 5.0],
            [3.0, 10.0],
            [0.0, 10.0],
        ])
        .unwrap();
        assert!(u.contains(1.5, 8.0));
        assert!(!u.contains(5.0, 8.0));
        assert!(u.contains(5.0, 2.0));
    }

    #[test]
    fn serde_validates() {
        let bad: std::result::Result<RoiPolygon, _> = serde_json::from_str("[[0,0],[1,1]]");
        assert!(bad.is_err());
        let ok: RoiPolygon = serde_json::from_str("[[0,0],[4,0],[0,4]]").unwrap();
        assert_eq!(ok.vertices().len(), 3);
    }
}
