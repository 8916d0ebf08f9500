//! Pose metrics: oriented box IoU, rotation error with symmetry handling and
//! detection mAP.

use std::io::Write;

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::geometry::Pose9D;
use crate::scalar::{to_f64, Real, Vec3};

type V3 = Vec3<f64>;

/// Convex polyhedron as a list of outward-wound faces.
struct Polytope {
    faces: Vec<Vec<V3>>,
}

fn box_corners(pose: &Pose9D<f64>) -> [V3; 8] {
    std::array::from_fn(|i| {
        let s = |bit: usize| if i & bit != 0 { 0.5 } else { -0.5 };
        pose.object_to_world(&V3::new(s(1), s(2), s(4)))
    })
}

fn box_polytope(pose: &Pose9D<f64>) -> Polytope {
    let c = box_corners(pose);
    // outward winding for a right-handed frame
    let quads = [
        [0, 4, 6, 2],
        [1, 3, 7, 5],
        [0, 1, 5, 4],
        [2, 6, 7, 3],
        [0, 2, 3, 1],
        [4, 5, 7, 6],
    ];
    Polytope {
        faces: quads.iter().map(|q| q.iter().map(|&i| c[i]).collect()).collect(),
    }
}

/// The six half-spaces `n·x <= d` bounding a box.
fn box_planes(pose: &Pose9D<f64>) -> [(V3, f64); 6] {
    let r = pose.rotation();
    std::array::from_fn(|k| {
        let axis: V3 = r.column(k / 2).into_owned();
        let n = if k % 2 == 0 { axis } else { -axis };
        (n, n.dot(&pose.t) + pose.s[k / 2] / 2.0)
    })
}

impl Polytope {
    fn vertices(&self) -> impl Iterator<Item = &V3> {
        self.faces.iter().flatten()
    }

    /// Keeps the part with `n·x <= d`.
    fn clip(self, n: &V3, d: f64, tol: f64) -> Polytope {
        let dist = |p: &V3| n.dot(p) - d;
        if self.vertices().all(|p| dist(p) <= tol) {
            return self;
        }
        if self.vertices().all(|p| dist(p) >= -tol) {
            return Polytope { faces: Vec::new() };
        }
        let mut cap: Vec<V3> = Vec::new();
        let mut faces = Vec::with_capacity(self.faces.len() + 1);
        for face in self.faces {
            let mut out: Vec<V3> = Vec::with_capacity(face.len() + 1);
            for k in 0..face.len() {
                let (p, q) = (face[k], face[(k + 1) % face.len()]);
                let (dp, dq) = (dist(&p), dist(&q));
                let (pin, qin) = (dp <= tol, dq <= tol);
                if pin != qin {
                    let x = p + (q - p) * (dp / (dp - dq));
                    out.push(x);
                    cap.push(x);
                }
                if qin {
                    out.push(q);
                    if dq.abs() <= tol {
                        cap.push(q);
                    }
                }
            }
            dedup_ring(&mut out, tol);
            if out.len() >= 3 {
                faces.push(out);
            }
        }
        if let Some(cap) = order_cap(cap, n, tol) {
            faces.push(cap);
        }
        Polytope { faces }
    }

    /// Divergence-theorem volume, relative to `origin` for precision.
    fn volume(&self, origin: &V3) -> f64 {
        let mut v = 0.0;
        for f in &self.faces {
            let a = f[0] - origin;
            for w in 1..f.len() - 1 {
                v += a.dot(&(f[w] - origin).cross(&(f[w + 1] - origin)));
            }
        }
        v / 6.0
    }
}

fn dedup_ring(ring: &mut Vec<V3>, tol: f64) {
    ring.dedup_by(|a, b| (*a - *b).norm() <= tol);
    while ring.len() > 1 && (ring[0] - ring[ring.len() - 1]).norm() <= tol {
        ring.pop();
    }
}

/// Orders the points of a planar convex cap counter-clockwise about `n`.
fn order_cap(mut pts: Vec<V3>, n: &V3, tol: f64) -> Option<Vec<V3>> {
    let mut unique: Vec<V3> = Vec::new();
    for p in pts.drain(..) {
        if unique.iter().all(|q| (p - q).norm() > tol) {
            unique.push(p);
        }
    }
    if unique.len() < 3 {
        return None;
    }
    let c = unique.iter().sum::<V3>() / unique.len() as f64;
    let u = (unique[0] - c).normalize();
    let v = n.cross(&u);
    unique.sort_by(|a, b| {
        let ang = |p: &V3| (p - c).dot(&v).atan2((p - c).dot(&u));
        ang(a).total_cmp(&ang(b))
    });
    Some(unique)
}

/// Intersection over union of two oriented boxes, by clipping one box with
/// the half-spaces of the other. Zero-volume boxes give 0.
pub fn box_iou_3d<T: Real>(a: &Pose9D<T>, b: &Pose9D<T>) -> f64 {
    let a = to_f64_pose(a);
    let b = to_f64_pose(b);
    let (va, vb) = (a.volume(), b.volume());
    let scale = a.s.amax().max(b.s.amax());
    if !(va > 0.0 && vb > 0.0) || !(va / scale.powi(3) > 1e-15 && vb / scale.powi(3) > 1e-15) {
        return 0.0;
    }
    let tol = 1e-12 * (scale + a.t.amax().abs().max(b.t.amax().abs()));
    let mut poly = box_polytope(&a);
    for (n, d) in box_planes(&b) {
        poly = poly.clip(&n, d, tol);
        if poly.faces.is_empty() {
            return 0.0;
        }
    }
    let inter = poly.volume(&a.t).clamp(0.0, va.min(vb));
    (inter / (va + vb - inter)).clamp(0.0, 1.0)
}

fn to_f64_pose<T: Real>(p: &Pose9D<T>) -> Pose9D<f64> {
    let c = |v: &Vec3<T>| v.map(to_f64);
    Pose9D {
        t: c(&p.t),
        e1: c(&p.e1),
        e2: c(&p.e2),
        s: c(&p.s),
    }
}

/// How rotations that differ by an object symmetry are identified.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Symmetry {
    #[default]
    None,
    /// Continuous symmetry about this axis, given in the object frame.
    Axis(V3),
    /// Only the heading about the world `up` direction counts; the heading
    /// is the given object-frame axis projected onto the horizontal plane.
    UpHeading { up: V3, heading: V3 },
}

/// Geodesic angle of `aᵀb` in degrees, in `[0, 180]`.
pub fn geodesic_deg<T: Real>(a: &Matrix3<T>, b: &Matrix3<T>) -> f64 {
    let r: Matrix3<f64> = (a.transpose() * b).map(to_f64);
    let cos = (r.trace() - 1.0) / 2.0;
    let sin = V3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]).norm() / 2.0;
    sin.atan2(cos).to_degrees()
}

/// Rotation error in degrees between object-to-world rotations `a` and `b`.
pub fn rotation_error<T: Real>(a: &Matrix3<T>, b: &Matrix3<T>, symmetry: &Symmetry) -> f64 {
    let a64 = a.map(to_f64);
    let b64 = b.map(to_f64);
    match symmetry {
        Symmetry::None => geodesic_deg(&a64, &b64),
        Symmetry::Axis(axis) => {
            let k = axis.normalize();
            angle_deg(&(a64 * k), &(b64 * k))
        }
        Symmetry::UpHeading { up, heading } => {
            let up = up.normalize();
            let flat = |r: &Matrix3<f64>| {
                let h = r * heading;
                h - up * h.dot(&up)
            };
            let (ha, hb) = (flat(&a64), flat(&b64));
            if ha.norm() < 1e-12 || hb.norm() < 1e-12 {
                return 0.0;
            }
            angle_deg(&ha, &hb)
        }
    }
}

fn angle_deg(a: &V3, b: &V3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b)).to_degrees()
}

/// Pass/fail thresholds for one mAP column. Unset thresholds are not
/// checked; the IoU floor always gates matching.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchCriteria {
    pub iou_threshold: Option<f64>,
    pub rot_threshold_deg: Option<f64>,
    pub trans_threshold: Option<f64>,
    pub detection_iou_floor: f64,
    pub symmetry: Symmetry,
}

pub const DEFAULT_IOU_FLOOR: f64 = 0.10;

impl Default for MatchCriteria {
    fn default() -> Self {
        MatchCriteria {
            iou_threshold: None,
            rot_threshold_deg: None,
            trans_threshold: None,
            detection_iou_floor: DEFAULT_IOU_FLOOR,
            symmetry: Symmetry::None,
        }
    }
}

impl MatchCriteria {
    pub fn iou(threshold: f64) -> Self {
        MatchCriteria {
            iou_threshold: Some(threshold),
            ..Default::default()
        }
    }

    /// `deg`° and `cm` centimeters.
    pub fn pose(deg: f64, cm: f64) -> Self {
        MatchCriteria {
            rot_threshold_deg: Some(deg),
            trans_threshold: Some(cm / 100.0),
            ..Default::default()
        }
    }

    pub fn with_symmetry(mut self, symmetry: Symmetry) -> Self {
        self.symmetry = symmetry;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("iou_threshold", self.iou_threshold),
            ("rot_threshold", self.rot_threshold_deg),
            ("trans_threshold", self.trans_threshold),
        ] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return Err(Error::invalid("criteria", format!("{name} must be positive")));
                }
            }
        }
        if !(self.detection_iou_floor > 0.0 && self.detection_iou_floor < 1.0) {
            return Err(Error::invalid("criteria", "detection_iou_floor must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Short column name such as `iou25` or `10deg_5cm`.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if let Some(t) = self.iou_threshold {
            parts.push(format!("iou{}", trim(t * 100.0)));
        }
        if let Some(r) = self.rot_threshold_deg {
            parts.push(format!("{}deg", trim(r)));
        }
        if let Some(t) = self.trans_threshold {
            parts.push(format!("{}cm", trim(t * 100.0)));
        }
        if parts.is_empty() {
            parts.push(format!("floor{}", trim(self.detection_iou_floor * 100.0)));
        }
        parts.join("_")
    }

    fn passes<T: Real>(&self, det: &Pose9D<T>, gt: &Pose9D<T>, iou: f64) -> bool {
        self.iou_threshold.is_none_or(|t| iou >= t)
            && self
                .rot_threshold_deg
                .is_none_or(|t| rotation_error(&det.rotation(), &gt.rotation(), &self.symmetry) <= t)
            && self
                .trans_threshold
                .is_none_or(|t| to_f64((det.t - gt.t).norm()) <= t)
    }
}

fn trim(x: f64) -> String {
    let r = (x * 1e6).round() / 1e6;
    if r.fract() == 0.0 {
        format!("{}", r as i64)
    } else {
        format!("{r}")
    }
}

/// A detection with its confidence, typically the center vote count.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPose<T: Real> {
    pub pose: Pose9D<T>,
    pub score: f64,
}

/// Detections and ground truths of one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalScene<T: Real> {
    pub detections: Vec<ScoredPose<T>>,
    pub ground_truths: Vec<Pose9D<T>>,
}

/// Average precision per criterion; `None` when there is no ground truth.
///
/// Detections of all scenes are ranked by score (ties keep scene, then
/// input order). Each one claims the unclaimed ground truth of its scene
/// with the highest IoU at or above the floor; it is a true positive when
/// the claimed pair also passes the criterion. AP integrates the
/// precision-recall curve with all-point interpolation.
pub fn compute_map<T: Real>(scenes: &[EvalScene<T>], criteria: &[MatchCriteria]) -> Vec<Option<f64>> {
    let n_gt: usize = scenes.iter().map(|s| s.ground_truths.len()).sum();
    let mut ranked: Vec<(usize, usize)> = scenes
        .iter()
        .enumerate()
        .flat_map(|(s, sc)| (0..sc.detections.len()).map(move |d| (s, d)))
        .collect();
    ranked.sort_by(|a, b| {
        let sa = scenes[a.0].detections[a.1].score;
        let sb = scenes[b.0].detections[b.1].score;
        sb.total_cmp(&sa)
    });
    let ious: Vec<Vec<Vec<f64>>> = scenes
        .iter()
        .map(|sc| {
            sc.detections
                .iter()
                .map(|d| sc.ground_truths.iter().map(|g| box_iou_3d(&d.pose, g)).collect())
                .collect()
        })
        .collect();
    criteria
        .iter()
        .map(|c| {
            if n_gt == 0 {
                return None;
            }
            let mut claimed: Vec<Vec<bool>> =
                scenes.iter().map(|s| vec![false; s.ground_truths.len()]).collect();
            let hits: Vec<bool> = ranked
                .iter()
                .map(|&(s, d)| {
                    let best = (0..scenes[s].ground_truths.len())
                        .filter(|&g| !claimed[s][g] && ious[s][d][g] >= c.detection_iou_floor)
                        .max_by(|&x, &y| ious[s][d][x].total_cmp(&ious[s][d][y]).then(y.cmp(&x)));
                    match best {
                        Some(g) => {
                            claimed[s][g] = true;
                            c.passes(&scenes[s].detections[d].pose, &scenes[s].ground_truths[g], ious[s][d][g])
                        }
                        None => false,
                    }
                })
                .collect();
            Some(average_precision(&hits, n_gt))
        })
        .collect()
}

/// All-point interpolated AP of a ranked hit list against `n_gt` positives.
pub fn average_precision(hits: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut tp = 0usize;
    let mut recall = Vec::with_capacity(hits.len());
    let mut precision = Vec::with_capacity(hits.len());
    for (k, &h) in hits.iter().enumerate() {
        tp += usize::from(h);
        recall.push(tp as f64 / n_gt as f64);
        precision.push(tp as f64 / (k + 1) as f64);
    }
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let mut ap = 0.0;
    let mut prev = 0.0;
    for (r, p) in recall.iter().zip(&precision) {
        ap += (r - prev) * p;
        prev = *r;
    }
    ap
}

/// One results row: criterion label, category and AP (empty when absent).
#[derive(Debug, Clone, PartialEq)]
pub struct ApRow {
    pub criterion: String,
    pub category: String,
    pub ap: Option<f64>,
}

pub fn write_results_csv<W: Write>(mut out: W, rows: &[ApRow]) -> Result<()> {
    writeln!(out, "criterion,category,ap")?;
    for r in rows {
        let ap = r.ap.map(|v| format!("{v:.6}")).unwrap_or_default();
        writeln!(out, "{},{},{}", r.criterion, r.category, ap)?;
    }
    Ok(())
}
