//! Geometry kernel for ego/anchor matching: polyline buffering, region IoU
//! and the convex matching score.
//!
//! Buffered polylines are built as unions of per-segment capsules whose
//! semicircular caps are approximated with 8 segments each; all boolean
//! operations run on piecewise-linear polygons.

use geo::{BooleanOps, LineString, MultiLineString, MultiPolygon, Polygon};

use crate::error::{Error, Result};

use super::graph::{AnchorPath, LaneGraph};

/// Segments per semicircular cap of a buffered segment.
const CAP_SEGMENTS: usize = 8;

/// Sum of segment lengths of a polyline.
pub fn polyline_length(points: &[[f64; 2]]) -> f64 {
    points
        .windows(2)
        .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
        .sum()
}

fn multi_line_length(lines: &MultiLineString<f64>) -> f64 {
    lines
        .iter()
        .map(|line| {
            let pts: Vec<[f64; 2]> = line.coords().map(|c| [c.x, c.y]).collect();
            polyline_length(&pts)
        })
        .sum()
}

fn shoelace(ring: &[[f64; 2]]) -> f64 {
    let n = ring.len();
    let mut acc = 0.0;
    for i in 0..n {
        let [x0, y0] = ring[i];
        let [x1, y1] = ring[(i + 1) % n];
        acc += x0 * y1 - x1 * y0;
    }
    0.5 * acc
}

fn ring_polygon(mut ring: Vec<[f64; 2]>) -> Polygon<f64> {
    if shoelace(&ring) < 0.0 {
        ring.reverse();
    }
    Polygon::new(
        LineString::from(ring.into_iter().map(|p| (p[0], p[1])).collect::<Vec<_>>()),
        vec![],
    )
}

/// Capsule (stadium) polygon around the segment `a -> b`.
fn capsule(a: [f64; 2], b: [f64; 2], radius: f64) -> Polygon<f64> {
    let dx = b[0] - a[0];
    let dy = b[1] - a[1];
    let len = (dx * dx + dy * dy).sqrt();
    if len < 1e-12 {
        return circle(a, radius);
    }
    let (ux, uy) = (dx / len, dy / len);
    let (nx, ny) = (-uy, ux);
    let mut ring = Vec::with_capacity(2 * CAP_SEGMENTS + 4);
    ring.push([a[0] + nx * radius, a[1] + ny * radius]);
    ring.push([b[0] + nx * radius, b[1] + ny * radius]);
    // Cap around b, sweeping from +n to -n through +u.
    let base = ny.atan2(nx);
    for i in 1..CAP_SEGMENTS {
        let angle = base - std::f64::consts::PI * i as f64 / CAP_SEGMENTS as f64;
        ring.push([b[0] + radius * angle.cos(), b[1] + radius * angle.sin()]);
    }
    ring.push([b[0] - nx * radius, b[1] - ny * radius]);
    ring.push([a[0] - nx * radius, a[1] - ny * radius]);
    // Cap around a, sweeping from -n back to +n through -u.
    let base = (-ny).atan2(-nx);
    for i in 1..CAP_SEGMENTS {
        let angle = base - std::f64::consts::PI * i as f64 / CAP_SEGMENTS as f64;
        ring.push([a[0] + radius * angle.cos(), a[1] + radius * angle.sin()]);
    }
    ring_polygon(ring)
}

fn circle(center: [f64; 2], radius: f64) -> Polygon<f64> {
    let n = 2 * CAP_SEGMENTS;
    let ring = (0..n)
        .map(|i| {
            let angle = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            [
                center[0] + radius * angle.cos(),
                center[1] + radius * angle.sin(),
            ]
        })
        .collect();
    ring_polygon(ring)
}

/// Buffers a polyline by `radius` meters: the union of per-segment capsules.
pub fn buffer_polyline(points: &[[f64; 2]], radius: f64) -> Result<MultiPolygon<f64>> {
    if points.is_empty() {
        return Err(Error::DegenerateInput("cannot buffer an empty polyline".into()));
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidInput(format!(
            "buffer radius must be finite and > 0, got {radius}"
        )));
    }
    let mut region: Option<MultiPolygon<f64>> = None;
    for w in points.windows(2) {
        let cap = MultiPolygon::new(vec![capsule(w[0], w[1], radius)]);
        region = Some(match region {
            Some(acc) => acc.union(&cap),
            None => cap,
        });
    }
    Ok(region.unwrap_or_else(|| MultiPolygon::new(vec![circle(points[0], radius)])))
}

/// Area intersection-over-union of two regions, clamped to [0, 1].
pub fn region_iou(a: &MultiPolygon<f64>, b: &MultiPolygon<f64>) -> f64 {
    use geo::Area;
    let union = a.union(b).unsigned_area();
    if union <= 0.0 {
        return 0.0;
    }
    let inter = a.intersection(b).unsigned_area();
    (inter / union).clamp(0.0, 1.0)
}

fn lanelet_region(graph: &LaneGraph, anchor: &AnchorPath) -> Result<MultiPolygon<f64>> {
    let mut region: Option<MultiPolygon<f64>> = None;
    for id in &anchor.lanelets {
        let lanelet = graph
            .lanelet(id)
            .ok_or_else(|| Error::UnknownLanelet(id.clone()))?;
        if lanelet.polygon.is_empty() {
            return Err(Error::InvalidInput(format!(
                "lanelet {id} has no polygon; containment term undefined"
            )));
        }
        let poly = MultiPolygon::new(vec![ring_polygon(lanelet.polygon.clone())]);
        region = Some(match region {
            Some(acc) => acc.union(&poly),
            None => poly,
        });
    }
    region.ok_or_else(|| Error::DegenerateInput("anchor path has no lanelets".into()))
}

/// Fraction of the ego path's arc length inside the anchor's lanelet
/// polygons.
fn lanelet_containment(graph: &LaneGraph, ego: &[[f64; 2]], anchor: &AnchorPath) -> Result<f64> {
    let total = polyline_length(ego);
    if total <= 0.0 {
        return Err(Error::DegenerateInput(
            "ego path has zero arc length".into(),
        ));
    }
    let region = lanelet_region(graph, anchor)?;
    let ego_lines = MultiLineString::new(vec![LineString::from(
        ego.iter().map(|p| (p[0], p[1])).collect::<Vec<_>>(),
    )]);
    let inside = multi_line_length(&region.clip(&ego_lines, false));
    Ok((inside / total).clamp(0.0, 1.0))
}

/// Matching score between an ego path and an anchor path:
/// `alpha * s_iou + (1 - alpha) * s_li`, where `s_iou` is the area IoU of
/// the two polylines buffered by `buffer_m` and `s_li` is the fraction of
/// ego arc length inside the anchor's lanelets.
pub fn match_score(
    graph: &LaneGraph,
    ego: &[[f64; 2]],
    anchor: &AnchorPath,
    alpha: f64,
    buffer_m: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidInput(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    if ego.len() < 2 || polyline_length(ego) <= 0.0 {
        return Err(Error::DegenerateInput(
            "ego path must contain at least two distinct points".into(),
        ));
    }
    // Skip whichever term alpha zeroes out; both are costly.
    let s_iou = if alpha > 0.0 {
        let ego_region = buffer_polyline(ego, buffer_m)?;
        let anchor_region = buffer_polyline(&anchor.centerline, buffer_m)?;
        region_iou(&ego_region, &anchor_region)
    } else {
        0.0
    };
    let s_li = if alpha < 1.0 {
        lanelet_containment(graph, ego, anchor)?
    } else {
        0.0
    };
    Ok(alpha * s_iou + (1.0 - alpha) * s_li)
}

#[cfg(test)]
mod tests {
    use super::super::graph::testutil::{edge, straight};
    use super::super::graph::{enumerate_anchor_paths, EdgeType, LaneGraph};
    use super::*;

    fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> MultiPolygon<f64> {
        MultiPolygon::new(vec![ring_polygon(vec![
            [x0, y0],
            [x1, y0],
            [x1, y1],
            [x0, y1],
        ])])
    }

    #[test]
    fn rectangle_iou_matches_hand_computation() {
        // [0,2]x[0,1] vs [1,3]x[0,1]: intersection 1, union 3.
        let a = rect(0.0, 0.0, 2.0, 1.0);
        let b = rect(1.0, 0.0, 3.0, 1.0);
        assert!((region_iou(&a, &b) - 1.0 / 3.0).abs() < 1e-9);
        // Disjoint rectangles.
        let c = rect(10.0, 10.0, 11.0, 11.0);
        assert_eq!(region_iou(&a, &c), 0.0);
        // Identical rectangles.
        assert!((region_iou(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn buffered_straight_line_area_is_near_exact() {
        use geo::Area;
        // 10 m segment buffered by 1 m: rectangle 20 m^2 plus a unit circle
        // approximated by a 16-gon (area 16 * sin(pi/8) * cos(pi/8) ... via
        // the regular-polygon formula n/2 sin(2pi/n) r^2).
        let region = buffer_polyline(&[[0.0, 0.0], [10.0, 0.0]], 1.0).unwrap();
        let n = 2.0 * CAP_SEGMENTS as f64;
        let circle_area = 0.5 * n * (2.0 * std::f64::consts::PI / n).sin();
        let expected = 20.0 + circle_area;
        assert!(
            (region.unsigned_area() - expected).abs() < 1e-6,
            "area={}",
            region.unsigned_area()
        );
    }

    fn two_lane_graph() -> LaneGraph {
        LaneGraph::new(
            vec![straight("a", 0.0, 40.0, 0.0), straight("b", 40.0, 80.0, 0.0)],
            vec![edge("a", "b", EdgeType::Longitudinal)],
        )
        .unwrap()
    }

    #[test]
    fn identical_path_scores_one() {
        let graph = two_lane_graph();
        let set = enumerate_anchor_paths(&graph, "a", 100.0, 8).unwrap();
        let anchor = &set.paths[0];
        let ego = anchor.centerline.clone();
        let score = match_score(&graph, &ego, anchor, 0.5, 1.0).unwrap();
        assert!(score > 0.98, "score={score}");
    }

    #[test]
    fn alpha_endpoints_equal_their_components() {
        let graph = two_lane_graph();
        let set = enumerate_anchor_paths(&graph, "a", 100.0, 8).unwrap();
        let anchor = &set.paths[0];
        // Ego is laterally offset so both terms are strictly inside (0, 1).
        let ego: Vec<[f64; 2]> = (0..=20)
            .map(|i| [4.0 * i as f64, 1.2 + 0.7 * (i as f64 / 20.0)])
            .collect();

        let s_iou = {
            let a = buffer_polyline(&ego, 1.0).unwrap();
            let b = buffer_polyline(&anchor.centerline, 1.0).unwrap();
            region_iou(&a, &b)
        };
        let s_li = lanelet_containment(&graph, &ego, anchor).unwrap();
        assert!(s_iou > 0.0 && s_iou < 1.0, "s_iou={s_iou}");
        assert!(s_li > 0.0 && s_li < 1.0, "s_li={s_li}");

        let at_one = match_score(&graph, &ego, anchor, 1.0, 1.0).unwrap();
        let at_zero = match_score(&graph, &ego, anchor, 0.0, 1.0).unwrap();
        assert_eq!(at_one, s_iou);
        assert_eq!(at_zero, s_li);

        let mixed = match_score(&graph, &ego, anchor, 0.5, 1.0).unwrap();
        assert!((mixed - (0.5 * s_iou + 0.5 * s_li)).abs() < 1e-12);
    }

    #[test]
    fn containment_fraction_matches_construction() {
        // Lanelet region spans x in [0, 40]; ego runs from 0 to 80: half in.
        let graph = two_lane_graph();
        let anchor = AnchorPath {
            lanelets: vec!["a".to_string()],
            centerline: graph.lanelet("a").unwrap().centerline.clone(),
            length_m: 40.0,
        };
        let ego = vec![[0.0, 0.0], [80.0, 0.0]];
        let s_li = lanelet_containment(&graph, &ego, &anchor).unwrap();
        assert!((s_li - 0.5).abs() < 1e-9, "s_li={s_li}");
    }

    #[test]
    fn zero_length_ego_is_degenerate() {
        let graph = two_lane_graph();
        let set = enumerate_anchor_paths(&graph, "a", 100.0, 8).unwrap();
        let err = match_score(&graph, &[[1.0, 1.0], [1.0, 1.0]], &set.paths[0], 0.5, 1.0)
            .unwrap_err();
        assert!(matches!(err, Error::DegenerateInput(_)));
    }

    #[test]
    fn score_stays_in_unit_interval() {
        let graph = two_lane_graph();
        let set = enumerate_anchor_paths(&graph, "a", 100.0, 8).unwrap();
        let anchor = &set.paths[0];
        for offset in [0.0, 1.0, 3.0, 10.0, 50.0] {
            for alpha in [0.0, 0.25, 0.5, 0.75, 1.0] {
                let ego: Vec<[f64; 2]> = (0..=16).map(|i| [5.0 * i as f64, offset]).collect();
                let score = match_score(&graph, &ego, anchor, alpha, 1.0).unwrap();
                assert!((0.0..=1.0).contains(&score), "score={score}");
            }
        }
    }
}
