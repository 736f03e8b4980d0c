//! Paths of the field direction on the unit sphere, parallel transport of the
//! co-moving frame, the frame rotation matrix, solid angle, and the adiabatic
//! displacement integral.
//!
//! Everything here is parametrized by the dimensionless arc parameter
//! `s ∈ [0, 1]`; physical time enters only through `t = s T`, so all geometric
//! quantities are independent of the process duration.

use nalgebra::{DVector, Matrix3, Vector2, Vector3};

use crate::ode::{self, OdeOptions};
use crate::quadrature;
use crate::{Error, Result};

/// Tolerance below which `|n(1) - n(0)|` classifies a path as closed.
pub const CLOSURE_TOL: f64 = 1e-9;

/// A smooth unit-vector path `n(s)` on the 2-sphere, `s ∈ [0, 1]`.
#[derive(Debug, Clone)]
pub enum FieldPath {
    /// Circle at fixed colatitude, traversed with uniformly increasing
    /// azimuth; `turns` full revolutions (negative reverses orientation).
    Latitude { theta0: f64, turns: i32 },
    /// Piecewise great-circle interpolation through ordered waypoints,
    /// uniform in `s` across segments.
    Slerp { waypoints: Vec<Vector3<f64>>, closed: bool },
    /// Piecewise-linear interpolation (renormalized) of tabulated samples
    /// `(s_i, v_i)` with `s_0 = 0`, `s_last = 1`.
    Table { samples: Vec<(f64, Vector3<f64>)> },
}

impl FieldPath {
    pub fn latitude(theta0: f64, turns: i32) -> Result<Self> {
        if !theta0.is_finite() || theta0 < 0.0 || theta0 > std::f64::consts::PI {
            return Err(Error::InvalidPath(format!("colatitude {theta0} outside [0, pi]")));
        }
        Ok(FieldPath::Latitude { theta0, turns })
    }

    pub fn slerp(waypoints: Vec<Vector3<f64>>, closed: bool) -> Result<Self> {
        if waypoints.is_empty() {
            return Err(Error::InvalidPath("slerp path needs at least one waypoint".into()));
        }
        let mut pts = Vec::with_capacity(waypoints.len() + 1);
        for w in &waypoints {
            let norm = w.norm();
            if !norm.is_finite() || norm < 1e-12 {
                return Err(Error::InvalidPath("waypoint is not a unit vector".into()));
            }
            pts.push(w / norm);
        }
        if closed && (pts[0] - pts[pts.len() - 1]).norm() > CLOSURE_TOL {
            let first = pts[0];
            pts.push(first);
        }
        for pair in pts.windows(2) {
            if (pair[0] + pair[1]).norm() < 1e-9 {
                return Err(Error::InvalidPath(
                    "consecutive waypoints are antipodal; great-circle segment is ambiguous".into(),
                ));
            }
        }
        Ok(FieldPath::Slerp { waypoints: pts, closed })
    }

    /// Constant path pointing along `dir` for all `s`.
    pub fn constant(dir: Vector3<f64>) -> Result<Self> {
        Self::slerp(vec![dir, dir], false)
    }

    pub fn table(samples: Vec<(f64, Vector3<f64>)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidPath("table path needs at least two samples".into()));
        }
        let mut norm_samples = Vec::with_capacity(samples.len());
        for (s, v) in &samples {
            let norm = v.norm();
            if !s.is_finite() || !norm.is_finite() || norm < 1e-12 {
                return Err(Error::InvalidPath("non-finite or zero table sample".into()));
            }
            norm_samples.push((*s, v / norm));
        }
        if norm_samples.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidPath("table s-values must be strictly increasing".into()));
        }
        if (norm_samples[0].0).abs() > 1e-12 || (norm_samples.last().unwrap().0 - 1.0).abs() > 1e-12
        {
            return Err(Error::InvalidPath("table must span s = 0 to s = 1".into()));
        }
        Ok(FieldPath::Table { samples: norm_samples })
    }

    /// Unit direction `n(s)`.
    pub fn direction(&self, s: f64) -> Vector3<f64> {
        match self {
            FieldPath::Latitude { theta0, turns } => {
                let phi = 2.0 * std::f64::consts::PI * (*turns as f64) * s;
                Vector3::new(
                    theta0.sin() * phi.cos(),
                    theta0.sin() * phi.sin(),
                    theta0.cos(),
                )
            }
            FieldPath::Slerp { waypoints, .. } => {
                let (a, b, u, _) = slerp_segment(waypoints, s);
                slerp_eval(&a, &b, u).0
            }
            FieldPath::Table { samples } => table_eval(samples, s).0,
        }
    }

    /// Derivative `dn/ds`, tangent to the sphere.
    pub fn derivative(&self, s: f64) -> Vector3<f64> {
        match self {
            FieldPath::Latitude { theta0, turns } => {
                let rate = 2.0 * std::f64::consts::PI * (*turns as f64);
                let phi = rate * s;
                Vector3::new(
                    -theta0.sin() * phi.sin() * rate,
                    theta0.sin() * phi.cos() * rate,
                    0.0,
                )
            }
            FieldPath::Slerp { waypoints, .. } => {
                let (a, b, u, du_ds) = slerp_segment(waypoints, s);
                slerp_eval(&a, &b, u).1 * du_ds
            }
            FieldPath::Table { samples } => table_eval(samples, s).1,
        }
    }

    /// Second derivative `d^2 n/ds^2`.
    ///
    /// Analytic for latitude circles and great-circle segments (where the
    /// curve is a constant-speed circle, so `n'' = -|n'|^2 n / |n|^2` along
    /// the rotation plane); centered finite differences for tabulated paths.
    pub fn second_derivative(&self, s: f64) -> Vector3<f64> {
        match self {
            FieldPath::Latitude { theta0, turns } => {
                let rate = 2.0 * std::f64::consts::PI * (*turns as f64);
                let phi = rate * s;
                Vector3::new(
                    -theta0.sin() * phi.cos() * rate * rate,
                    -theta0.sin() * phi.sin() * rate * rate,
                    0.0,
                )
            }
            FieldPath::Slerp { waypoints, .. } => {
                let (a, b, u, du_ds) = slerp_segment(waypoints, s);
                let theta = a.dot(&b).clamp(-1.0, 1.0).acos();
                let rate = theta * du_ds;
                // Constant-speed great circle: n'' = -(theta m)^2 n.
                slerp_eval(&a, &b, u).0 * (-rate * rate)
            }
            FieldPath::Table { .. } => {
                let h = 1e-4;
                let lo = (s - h).max(0.0);
                let hi = (s + h).min(1.0);
                (self.derivative(hi) - self.derivative(lo)) / (hi - lo)
            }
        }
    }

    /// Interior parameter values where `dn/ds` may jump (piecewise-smooth
    /// paths); integrators split steps there.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            FieldPath::Latitude { .. } => Vec::new(),
            FieldPath::Slerp { waypoints, .. } => {
                let m = waypoints.len() - 1;
                (1..m).map(|i| i as f64 / m as f64).collect()
            }
            FieldPath::Table { .. } => Vec::new(),
        }
    }

    /// True iff `|n(1) - n(0)| < 1e-9`.
    pub fn is_closed(&self) -> bool {
        (self.direction(1.0) - self.direction(0.0)).norm() < CLOSURE_TOL
    }
}

fn slerp_segment(pts: &[Vector3<f64>], s: f64) -> (Vector3<f64>, Vector3<f64>, f64, f64) {
    let m = pts.len() - 1;
    if m == 0 {
        return (pts[0], pts[0], 0.0, 0.0);
    }
    let scaled = (s.clamp(0.0, 1.0)) * m as f64;
    let seg = (scaled.floor() as usize).min(m - 1);
    let u = scaled - seg as f64;
    (pts[seg], pts[seg + 1], u, m as f64)
}

fn slerp_eval(a: &Vector3<f64>, b: &Vector3<f64>, u: f64) -> (Vector3<f64>, Vector3<f64>) {
    let cos_th = a.dot(b).clamp(-1.0, 1.0);
    let theta = cos_th.acos();
    if theta < 1e-6 {
        // Nearly coincident endpoints: normalized lerp with exact derivative.
        let raw = a * (1.0 - u) + b * u;
        let norm = raw.norm();
        let n = raw / norm;
        let raw_d = b - a;
        let deriv = (raw_d - n * n.dot(&raw_d)) / norm;
        return (n, deriv);
    }
    let sin_th = theta.sin();
    let n = (a * ((1.0 - u) * theta).sin() + b * (u * theta).sin()) / sin_th;
    let deriv = (a * (-theta * ((1.0 - u) * theta).cos()) + b * (theta * (u * theta).cos()))
        / sin_th;
    (n, deriv)
}

fn table_eval(samples: &[(f64, Vector3<f64>)], s: f64) -> (Vector3<f64>, Vector3<f64>) {
    let s = s.clamp(0.0, 1.0);
    let idx = match samples.binary_search_by(|probe| probe.0.partial_cmp(&s).unwrap()) {
        Ok(i) => i.min(samples.len() - 2),
        Err(i) => i.saturating_sub(1).min(samples.len() - 2),
    };
    // Quadratic Lagrange fit through three nodes around the active cell;
    // second-order accurate for both value and derivative.
    let base = idx.saturating_sub(1).min(samples.len() - 3);
    let (x0, p0) = samples[base];
    let (x1, p1) = samples[base + 1];
    let (x2, p2) = samples[base + 2];
    let l0 = (s - x1) * (s - x2) / ((x0 - x1) * (x0 - x2));
    let l1 = (s - x0) * (s - x2) / ((x1 - x0) * (x1 - x2));
    let l2 = (s - x0) * (s - x1) / ((x2 - x0) * (x2 - x1));
    let dl0 = (2.0 * s - x1 - x2) / ((x0 - x1) * (x0 - x2));
    let dl1 = (2.0 * s - x0 - x2) / ((x1 - x0) * (x1 - x2));
    let dl2 = (2.0 * s - x0 - x1) / ((x2 - x0) * (x2 - x1));
    let raw = p0 * l0 + p1 * l1 + p2 * l2;
    let raw_d = p0 * dl0 + p1 * dl1 + p2 * dl2;
    let norm = raw.norm();
    let n = raw / norm;
    let deriv = (raw_d - n * n.dot(&raw_d)) / norm;
    (n, deriv)
}

/// Parallel-transported orthonormal triad at parameter `s`, with `e3 = n(s)`.
#[derive(Debug, Clone, Copy)]
pub struct TransportedFrame {
    pub s: f64,
    pub e1: Vector3<f64>,
    pub e2: Vector3<f64>,
    pub e3: Vector3<f64>,
}

impl TransportedFrame {
    /// Frame components of a lab-frame vector: `(e1·v, e2·v, e3·v)`.
    pub fn components(&self, v: &Vector3<f64>) -> Vector3<f64> {
        Vector3::new(self.e1.dot(v), self.e2.dot(v), self.e3.dot(v))
    }

    /// Lab-frame vector from frame components.
    pub fn from_components(&self, c: &Vector3<f64>) -> Vector3<f64> {
        self.e1 * c.x + self.e2 * c.y + self.e3 * c.z
    }
}

/// The 3x3 rotation `E_ij = e_i(0) · e_j(s)`.
#[derive(Debug, Clone, Copy)]
pub struct FrameMatrix(pub Matrix3<f64>);

impl FrameMatrix {
    pub fn from_frames(initial: &TransportedFrame, at_s: &TransportedFrame) -> Self {
        let rows0 = [initial.e1, initial.e2, initial.e3];
        let rows1 = [at_s.e1, at_s.e2, at_s.e3];
        let mut e = Matrix3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                e[(i, j)] = rows0[i].dot(&rows1[j]);
            }
        }
        FrameMatrix(e)
    }

    /// In-plane rotation angle of the transported tangent pair relative to the
    /// initial frame: the angle `phi` with
    /// `e1(s) = cos(phi) e1(0) + sin(phi) e2(0)` (+ a normal component for
    /// open paths).
    pub fn holonomy_angle(&self) -> f64 {
        self.0[(1, 0)].atan2(self.0[(0, 0)])
    }
}

/// Deterministic initial tangent frame: Gram-Schmidt of the global x axis
/// against `n0` (y axis when `|n0 · x| > 0.9`), `e2 = n0 x e1`.
pub fn initial_frame(n0: &Vector3<f64>) -> TransportedFrame {
    let seed = if n0.x.abs() > 0.9 { Vector3::y() } else { Vector3::x() };
    let e1 = (seed - n0 * n0.dot(&seed)).normalize();
    let e2 = n0.cross(&e1);
    TransportedFrame { s: 0.0, e1, e2, e3: *n0 }
}

/// Parallel transport of the frame along the path, sampled at `s_grid`.
///
/// Integrates `de/ds = (n x n') x e` for the tangent pair with adaptive
/// error control and re-orthonormalizes after every accepted step.
pub fn transport_frame(
    path: &FieldPath,
    s_grid: &[f64],
    tol: f64,
) -> Result<Vec<TransportedFrame>> {
    if s_grid.is_empty() {
        return Ok(Vec::new());
    }
    if s_grid.windows(2).any(|w| w[1] < w[0]) || s_grid[0] < 0.0 {
        return Err(Error::InvalidArgument("s_grid must be non-decreasing and start >= 0".into()));
    }
    let n0 = path.direction(0.0);
    if (n0.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidPath("n(0) is not a unit vector".into()));
    }
    let f0 = initial_frame(&n0);
    let y0 = DVector::from_vec(vec![f0.e1.x, f0.e1.y, f0.e1.z, f0.e2.x, f0.e2.y, f0.e2.z]);
    let opts = OdeOptions::with_tol(tol);
    let mut rhs = |s: f64, y: &DVector<f64>| {
        let n = path.direction(s);
        let dn = path.derivative(s);
        let omega = n.cross(&dn);
        let e1 = Vector3::new(y[0], y[1], y[2]);
        let e2 = Vector3::new(y[3], y[4], y[5]);
        let d1 = omega.cross(&e1);
        let d2 = omega.cross(&e2);
        DVector::from_vec(vec![d1.x, d1.y, d1.z, d2.x, d2.y, d2.z])
    };
    let project = |s: f64, y: &mut DVector<f64>| {
        let n = path.direction(s).normalize();
        let mut e1 = Vector3::new(y[0], y[1], y[2]);
        e1 -= n * n.dot(&e1);
        e1.normalize_mut();
        let e2 = n.cross(&e1);
        y[0] = e1.x;
        y[1] = e1.y;
        y[2] = e1.z;
        y[3] = e2.x;
        y[4] = e2.y;
        y[5] = e2.z;
    };
    let (merged, idx) = ode::merge_stop_times(s_grid, &path.breakpoints());
    let states = ode::integrate_with_projection(&mut rhs, 0.0, y0, &merged, &opts, project)?;
    Ok(idx
        .iter()
        .map(|&i| (merged[i], &states[i]))
        .map(|(s, y)| {
            let n = path.direction(s).normalize();
            let mut e1 = Vector3::new(y[0], y[1], y[2]);
            e1 -= n * n.dot(&e1);
            e1.normalize_mut();
            let e2 = n.cross(&e1);
            TransportedFrame { s, e1, e2, e3: n }
        })
        .collect())
}

/// Frame rotation matrix `E(s)` by transporting over `[0, s]`.
pub fn frame_matrix(path: &FieldPath, s: f64, tol: f64) -> Result<FrameMatrix> {
    let frames = transport_frame(path, &[0.0, s], tol)?;
    Ok(FrameMatrix::from_frames(&frames[0], &frames[1]))
}

/// Rotation rates of the transported tangent pair toward the normal:
/// `sigma_mu = de_mu/ds · n`, in path-parameter units.
pub fn sigma_from_frame(path: &FieldPath, frame: &TransportedFrame) -> (f64, f64) {
    let n = frame.e3;
    let dn = path.derivative(frame.s);
    let omega = n.cross(&dn);
    (omega.cross(&frame.e1).dot(&n), omega.cross(&frame.e2).dot(&n))
}

/// Rates at a single parameter value.
pub fn sigma(path: &FieldPath, s: f64, tol: f64) -> Result<(f64, f64)> {
    let frames = transport_frame(path, &[0.0, s], tol)?;
    Ok(sigma_from_frame(path, &frames[1]))
}

/// The displacement curve `d(s)` in the `(e1(0), e2(0))` plane, with its full
/// sampled history (needed for flux phases along the curve).
#[derive(Debug, Clone)]
pub struct DisplacementCurve {
    pub s: Vec<f64>,
    pub d: Vec<Vector2<f64>>,
}

impl DisplacementCurve {
    pub fn final_displacement(&self) -> Vector2<f64> {
        *self.d.last().expect("displacement curve is never empty")
    }

    /// Linear interpolation of the curve at parameter `s`.
    pub fn at(&self, s: f64) -> Vector2<f64> {
        let s = s.clamp(self.s[0], *self.s.last().unwrap());
        let idx = match self.s.binary_search_by(|p| p.partial_cmp(&s).unwrap()) {
            Ok(i) => return self.d[i],
            Err(i) => i.saturating_sub(1).min(self.s.len() - 2),
        };
        let w = (s - self.s[idx]) / (self.s[idx + 1] - self.s[idx]);
        self.d[idx] * (1.0 - w) + self.d[idx + 1] * w
    }
}

/// Default sample count for displacement and phase quadratures.
pub const DEFAULT_CURVE_SAMPLES: usize = 2001;

/// Adiabatic displacement `d(s) = sum_mu (-(a/2) ∫ e_mu · dn) e_mu(0)`,
/// returned as components on `(e1(0), e2(0))` at `DEFAULT_CURVE_SAMPLES`
/// uniformly spaced nodes on `[0, s]`.
///
/// Depends only on the path geometry and the trap offset `a`; in particular
/// it carries no dependence on the field magnitude.
pub fn displacement(path: &FieldPath, s: f64, a: f64, tol: f64) -> Result<DisplacementCurve> {
    displacement_with_samples(path, s, a, tol, DEFAULT_CURVE_SAMPLES)
}

pub fn displacement_with_samples(
    path: &FieldPath,
    s: f64,
    a: f64,
    tol: f64,
    n_samples: usize,
) -> Result<DisplacementCurve> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::InvalidArgument(format!("s = {s} outside [0, 1]")));
    }
    let grid = quadrature::linspace(0.0, s, n_samples.max(3));
    let h = grid[1] - grid[0];
    let frames = transport_frame(path, &grid, tol)?;
    // -(a/2) e_mu · dn/ds == +(a/2) sigma_mu for a transported frame.
    let s1: Vec<f64> = frames.iter().map(|f| -f.e1.dot(&path.derivative(f.s))).collect();
    let s2: Vec<f64> = frames.iter().map(|f| -f.e2.dot(&path.derivative(f.s))).collect();
    let d1 = quadrature::cumulative_simpson(&s1, h);
    let d2 = quadrature::cumulative_simpson(&s2, h);
    let d = d1
        .iter()
        .zip(&d2)
        .map(|(&a1, &a2)| Vector2::new(0.5 * a * a1, 0.5 * a * a2))
        .collect();
    Ok(DisplacementCurve { s: grid, d })
}

/// Oriented solid angle enclosed by a closed path, by fan triangulation of
/// the spherical polygon from `n(0)`.
///
/// Positive for counterclockwise traversal seen from outside the sphere along
/// the enclosed cap's outward normal (right-hand rule along the traversal).
pub fn solid_angle(path: &FieldPath) -> Result<f64> {
    let gap = (path.direction(1.0) - path.direction(0.0)).norm();
    if gap >= CLOSURE_TOL {
        return Err(Error::OpenPath { gap });
    }
    let n_samples = 32_769;
    let grid = quadrature::linspace(0.0, 1.0, n_samples);
    let pts: Vec<Vector3<f64>> = grid.iter().map(|&s| path.direction(s).normalize()).collect();
    let apex = pts[0];
    let mut total = 0.0;
    for w in pts.windows(2) {
        total += triangle_solid_angle(&apex, &w[0], &w[1]);
    }
    Ok(total)
}

/// Signed solid angle of the spherical triangle (a, b, c) by the
/// van Oosterom–Strackee formula.
fn triangle_solid_angle(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> f64 {
    let numer = a.dot(&b.cross(c));
    let denom = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
    2.0 * numer.atan2(denom)
}
