//! Microphone arrays, loudspeaker shells and randomized capture trajectories.
//!
//! Positions are in meters. Array geometries live in an array-local frame;
//! a [`Pose`] maps them into the room frame whose origin is the center of the
//! loudspeaker shell.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Translation radius used by [`sample_trajectory`], as a fraction of the free
/// space between the array and the shell.
pub const TRANSLATION_SAFETY_FACTOR: f64 = 0.9;

/// Gaps of the default 16-element linear array, in millimeters.
///
/// They sum to 320 mm, the smallest gap is 16 mm, and the 120 pairs produce
/// 93 distinct integer-millimeter distances (one of them exactly 150 mm).
pub const DEFAULT_LINEAR_GAPS_MM: [u32; 15] =
    [18, 26, 23, 25, 17, 37, 22, 21, 16, 17, 22, 16, 17, 17, 26];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Unit vector in the same direction, or `None` for the zero vector.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self * (1.0 / n))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Polar angle from +z and azimuth from +x, in radians.
    pub fn to_spherical(self) -> (f64, f64) {
        let r = self.norm();
        let theta = (self.z / r).clamp(-1.0, 1.0).acos();
        let phi = self.y.atan2(self.x);
        (theta, phi)
    }

    pub fn from_spherical(theta: f64, phi: f64) -> Vec3 {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        Vec3::new(st * cp, st * sp, ct)
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(v: [f64; 3]) -> Self {
        Vec3::new(v[0], v[1], v[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        [v.x, v.y, v.z]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl fmt::Display for Vec3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// Proper rotation stored as a row-major 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rotation {
    pub matrix: [[f64; 3]; 3],
}

impl Rotation {
    pub const IDENTITY: Rotation = Rotation {
        matrix: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    /// Rodrigues rotation by `angle` radians about `axis` (need not be unit).
    pub fn about_axis(axis: Vec3, angle: f64) -> Result<Rotation> {
        let u = axis
            .normalized()
            .ok_or_else(|| Error::InvalidGeometry("rotation axis is zero".into()))?;
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        Ok(Rotation {
            matrix: [
                [
                    t * u.x * u.x + c,
                    t * u.x * u.y - s * u.z,
                    t * u.x * u.z + s * u.y,
                ],
                [
                    t * u.x * u.y + s * u.z,
                    t * u.y * u.y + c,
                    t * u.y * u.z - s * u.x,
                ],
                [
                    t * u.x * u.z - s * u.y,
                    t * u.y * u.z + s * u.x,
                    t * u.z * u.z + c,
                ],
            ],
        })
    }

    /// Rotation of a (not necessarily normalized) quaternion `w + xi + yj + zk`.
    pub fn from_quaternion(w: f64, x: f64, y: f64, z: f64) -> Result<Rotation> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::InvalidGeometry("degenerate quaternion".into()));
        }
        let (w, x, y, z) = (w / n, x / n, y / n, z / n);
        Ok(Rotation {
            matrix: [
                [
                    1.0 - 2.0 * (y * y + z * z),
                    2.0 * (x * y - w * z),
                    2.0 * (x * z + w * y),
                ],
                [
                    2.0 * (x * y + w * z),
                    1.0 - 2.0 * (x * x + z * z),
                    2.0 * (y * z - w * x),
                ],
                [
                    2.0 * (x * z - w * y),
                    2.0 * (y * z + w * x),
                    1.0 - 2.0 * (x * x + y * y),
                ],
            ],
        })
    }

    /// Haar-uniform random rotation (normalized Gaussian quaternion).
    pub fn random<R: rand::Rng + ?Sized>(rng: &mut R) -> Rotation {
        loop {
            let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
            if let Ok(r) = Rotation::from_quaternion(q[0], q[1], q[2], q[3]) {
                return r;
            }
        }
    }

    pub fn apply(&self, v: Vec3) -> Vec3 {
        let m = &self.matrix;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    pub fn compose(&self, other: &Rotation) -> Rotation {
        let a = &self.matrix;
        let b = &other.matrix;
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        Rotation { matrix: m }
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.matrix;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Orthonormal with determinant +1, within `tol`.
    pub fn is_proper(&self, tol: f64) -> bool {
        let m = &self.matrix;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| m[k][i] * m[k][j]).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                if (dot - expected).abs() > tol {
                    return false;
                }
            }
        }
        (self.determinant() - 1.0).abs() <= tol
    }
}

impl Default for Rotation {
    fn default() -> Self {
        Rotation::IDENTITY
    }
}

/// Rigid placement of the array: `x_room = rotation * x_local + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub translation: Vec3,
    pub rotation: Rotation,
}

impl Pose {
    pub const IDENTITY: Pose = Pose {
        translation: Vec3::ZERO,
        rotation: Rotation::IDENTITY,
    };

    pub fn new(translation: Vec3, rotation: Rotation) -> Result<Pose> {
        if !translation.is_finite() {
            return Err(Error::InvalidGeometry("non-finite translation".into()));
        }
        if !rotation.is_proper(1e-9) {
            return Err(Error::InvalidGeometry(
                "rotation is not orthonormal with determinant +1".into(),
            ));
        }
        Ok(Pose {
            translation,
            rotation,
        })
    }

    pub fn transform(&self, v: Vec3) -> Vec3 {
        self.rotation.apply(v) + self.translation
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    mic_positions: Vec<Vec3>,
    labels: Vec<String>,
}

impl ArrayGeometry {
    /// Validates: at least two mics, finite positions, no duplicates.
    pub fn new(mic_positions: Vec<Vec3>, labels: Vec<String>) -> Result<Self> {
        if mic_positions.len() < 2 {
            return Err(Error::InvalidGeometry(format!(
                "need at least 2 microphones, got {}",
                mic_positions.len()
            )));
        }
        if labels.len() != mic_positions.len() {
            return Err(Error::InvalidGeometry(format!(
                "{} labels for {} microphones",
                labels.len(),
                mic_positions.len()
            )));
        }
        if let Some(i) = mic_positions.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "mic {i} has a non-finite position"
            )));
        }
        for (i, a) in mic_positions.iter().enumerate() {
            for (j, b) in mic_positions.iter().enumerate().skip(i + 1) {
                if a == b {
                    return Err(Error::InvalidGeometry(format!(
                        "mics {i} and {j} share position {a}"
                    )));
                }
            }
        }
        Ok(Self {
            mic_positions,
            labels,
        })
    }

    /// Geometry with labels `mic0`, `mic1`, ...
    pub fn from_positions(mic_positions: Vec<Vec3>) -> Result<Self> {
        let labels = (0..mic_positions.len())
            .map(|i| format!("mic{i}"))
            .collect();
        Self::new(mic_positions, labels)
    }

    /// The documented 16-element non-uniform linear array along +x.
    pub fn default_linear() -> Self {
        let gaps: Vec<f64> = DEFAULT_LINEAR_GAPS_MM
            .iter()
            .map(|&g| g as f64 / 1000.0)
            .collect();
        make_linear_array(&gaps).expect("default gaps are valid")
    }

    /// Capsules at `radius` along the 32 rhombic-triacontahedron directions,
    /// the same face-center layout as a 32-capsule spherical array.
    pub fn spherical_32(radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "radius must be positive, got {radius}"
            )));
        }
        let positions = Polyhedron::RhombicTriacontahedron
            .unit_vertices()
            .into_iter()
            .map(|v| v * radius)
            .collect();
        Self::from_positions(positions)
    }

    pub fn mic_positions(&self) -> &[Vec3] {
        &self.mic_positions
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.mic_positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mic_positions.is_empty()
    }

    /// Largest distance of any mic from the array-local origin, the radius
    /// swept by the array under rotation about that origin.
    pub fn extent(&self) -> f64 {
        self.mic_positions
            .iter()
            .map(|p| p.norm())
            .fold(0.0, f64::max)
    }
}

/// Mics on the +x axis, mic 0 at the origin, mic k at the k-th cumulative gap.
pub fn make_linear_array(gaps: &[f64]) -> Result<ArrayGeometry> {
    if let Some(g) = gaps.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
        return Err(Error::InvalidGeometry(format!("gap {g} is not positive")));
    }
    let mut positions = Vec::with_capacity(gaps.len() + 1);
    let mut x = 0.0;
    positions.push(Vec3::ZERO);
    for g in gaps {
        x += g;
        positions.push(Vec3::new(x, 0.0, 0.0));
    }
    ArrayGeometry::from_positions(positions)
}

/// Maps each mic to `rotation * x + translation`.
pub fn apply_pose(geom: &ArrayGeometry, pose: &Pose) -> ArrayGeometry {
    ArrayGeometry {
        mic_positions: geom
            .mic_positions
            .iter()
            .map(|&p| pose.transform(p))
            .collect(),
        labels: geom.labels.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairDistance {
    pub p: usize,
    pub q: usize,
    pub distance: f64,
}

/// All unordered pairs `p < q`, in lexicographic order.
pub fn pair_distances(geom: &ArrayGeometry) -> Vec<PairDistance> {
    let pos = &geom.mic_positions;
    let mut out = Vec::with_capacity(pos.len() * (pos.len() - 1) / 2);
    for p in 0..pos.len() {
        for q in p + 1..pos.len() {
            out.push(PairDistance {
                p,
                q,
                distance: (pos[q] - pos[p]).norm(),
            });
        }
    }
    out
}

/// Regular and semi-regular solids used as loudspeaker shells.
///
/// Vertex order is fixed: sign loops run `-` before `+`, outer sign first,
/// and cyclic permutations `(a,b,c)`, `(b,c,a)`, `(c,a,b)` are emitted
/// together for each sign combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Polyhedron {
    Tetrahedron,
    Octahedron,
    Cube,
    Icosahedron,
    Dodecahedron,
    /// The 30 edge midpoints of a dodecahedron (an icosidodecahedron).
    DodecahedronEdges,
    /// 12 icosahedron vertices followed by 20 dodecahedron vertices.
    RhombicTriacontahedron,
}

impl Polyhedron {
    pub const ALL: [Polyhedron; 7] = [
        Polyhedron::Tetrahedron,
        Polyhedron::Octahedron,
        Polyhedron::Cube,
        Polyhedron::Icosahedron,
        Polyhedron::Dodecahedron,
        Polyhedron::DodecahedronEdges,
        Polyhedron::RhombicTriacontahedron,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Polyhedron::Tetrahedron => "tetrahedron",
            Polyhedron::Octahedron => "octahedron",
            Polyhedron::Cube => "cube",
            Polyhedron::Icosahedron => "icosahedron",
            Polyhedron::Dodecahedron => "dodecahedron",
            Polyhedron::DodecahedronEdges => "dodecahedron-edges",
            Polyhedron::RhombicTriacontahedron => "rhombic-triacontahedron",
        }
    }

    pub fn vertex_count(self) -> usize {
        match self {
            Polyhedron::Tetrahedron => 4,
            Polyhedron::Octahedron => 6,
            Polyhedron::Cube => 8,
            Polyhedron::Icosahedron => 12,
            Polyhedron::Dodecahedron => 20,
            Polyhedron::DodecahedronEdges => 30,
            Polyhedron::RhombicTriacontahedron => 32,
        }
    }

    pub fn unit_vertices(self) -> Vec<Vec3> {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let signs = [-1.0, 1.0];
        let cyclic = |out: &mut Vec<Vec3>, a: f64, b: f64, c: f64| {
            out.push(Vec3::new(a, b, c));
            out.push(Vec3::new(b, c, a));
            out.push(Vec3::new(c, a, b));
        };
        let mut v = Vec::new();
        match self {
            Polyhedron::Tetrahedron => {
                v.extend([
                    Vec3::new(1.0, 1.0, 1.0),
                    Vec3::new(1.0, -1.0, -1.0),
                    Vec3::new(-1.0, 1.0, -1.0),
                    Vec3::new(-1.0, -1.0, 1.0),
                ]);
            }
            Polyhedron::Octahedron => {
                for s in signs {
                    v.extend([Vec3::X * s, Vec3::Y * s, Vec3::Z * s]);
                }
            }
            Polyhedron::Cube => push_cube(&mut v),
            Polyhedron::Icosahedron => {
                for a in signs {
                    for b in signs {
                        cyclic(&mut v, 0.0, a, b * phi);
                    }
                }
            }
            Polyhedron::Dodecahedron => {
                push_cube(&mut v);
                for a in signs {
                    for b in signs {
                        cyclic(&mut v, 0.0, a * phi, b / phi);
                    }
                }
            }
            Polyhedron::DodecahedronEdges => {
                for s in signs {
                    v.extend([
                        Vec3::X * (s * phi),
                        Vec3::Y * (s * phi),
                        Vec3::Z * (s * phi),
                    ]);
                }
                for a in signs {
                    for b in signs {
                        for c in signs {
                            cyclic(&mut v, a * 0.5, b * phi / 2.0, c * phi * phi / 2.0);
                        }
                    }
                }
            }
            Polyhedron::RhombicTriacontahedron => {
                v.extend(Polyhedron::Icosahedron.unit_vertices());
                v.extend(Polyhedron::Dodecahedron.unit_vertices());
            }
        }
        v.into_iter()
            .map(|p| p.normalized().expect("polyhedron vertex is nonzero"))
            .collect()
    }
}

fn push_cube(v: &mut Vec<Vec3>) {
    for a in [-1.0, 1.0] {
        for b in [-1.0, 1.0] {
            for c in [-1.0, 1.0] {
                v.push(Vec3::new(a, b, c));
            }
        }
    }
}

impl FromStr for Polyhedron {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['_', ' '], "-");
        let kind = match key.as_str() {
            "tetrahedron" => Polyhedron::Tetrahedron,
            "octahedron" => Polyhedron::Octahedron,
            "cube" | "hexahedron" => Polyhedron::Cube,
            "icosahedron" => Polyhedron::Icosahedron,
            "dodecahedron" => Polyhedron::Dodecahedron,
            "dodecahedron-edges" | "icosidodecahedron" => Polyhedron::DodecahedronEdges,
            "rhombic-triacontahedron" | "triacontahedron" => Polyhedron::RhombicTriacontahedron,
            _ => return Err(Error::UnknownLayoutKind(s.to_string())),
        };
        Ok(kind)
    }
}

impl fmt::Display for Polyhedron {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayoutKind {
    PolyhedralShell(Polyhedron),
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoudspeakerLayout {
    speaker_positions: Vec<Vec3>,
    radius: f64,
    kind: LayoutKind,
}

impl LoudspeakerLayout {
    /// Arbitrary speaker positions; `radius` is the largest speaker distance.
    pub fn explicit(speaker_positions: Vec<Vec3>) -> Result<Self> {
        if speaker_positions.is_empty() {
            return Err(Error::InvalidLayout("no speakers".into()));
        }
        for (i, p) in speaker_positions.iter().enumerate() {
            if !p.is_finite() || p.norm() <= 0.0 {
                return Err(Error::InvalidLayout(format!(
                    "speaker {i} at {p} is not at positive distance from the origin"
                )));
            }
        }
        let radius = speaker_positions
            .iter()
            .map(|p| p.norm())
            .fold(0.0, f64::max);
        Ok(Self {
            speaker_positions,
            radius,
            kind: LayoutKind::Explicit,
        })
    }

    pub fn speaker_positions(&self) -> &[Vec3] {
        &self.speaker_positions
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn kind(&self) -> LayoutKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.speaker_positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speaker_positions.is_empty()
    }

    /// Plane-wave propagation directions: from each speaker toward the origin.
    pub fn propagation_directions(&self) -> Vec<Vec3> {
        self.speaker_positions
            .iter()
            .map(|p| -p.normalized().expect("validated nonzero"))
            .collect()
    }

    /// Keeps the given speakers, in the given order.
    pub fn with_indices(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidLayout("empty speaker selection".into()));
        }
        let mut seen = vec![false; self.len()];
        let mut positions = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::InvalidLayout(format!(
                    "speaker index {i} out of range for {} speakers",
                    self.len()
                )));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidLayout(format!("speaker index {i} repeated")));
            }
            positions.push(self.speaker_positions[i]);
        }
        Ok(Self {
            speaker_positions: positions,
            radius: self.radius,
            kind: self.kind,
        })
    }

    /// The `count` speakers chosen by [`spread_subset`].
    pub fn subset(&self, count: usize) -> Result<Self> {
        if count == 0 || count > self.len() {
            return Err(Error::InvalidLayout(format!(
                "cannot select {count} of {} speakers",
                self.len()
            )));
        }
        if count == self.len() {
            return Ok(self.clone());
        }
        self.with_indices(&spread_subset(&self.speaker_positions, count))
    }
}

/// `count` speakers on a sphere of `radius`, drawn from the vertices of `kind`.
///
/// When `count` is below the vertex count the subset comes from
/// [`spread_subset`], so it is deterministic and as spread out as the greedy
/// rule allows.
pub fn make_polyhedral_layout(
    kind: Polyhedron,
    radius: f64,
    count: usize,
) -> Result<LoudspeakerLayout> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidLayout(format!(
            "radius must be positive, got {radius}"
        )));
    }
    let budget = kind.vertex_count();
    if count == 0 || count > budget {
        return Err(Error::InvalidLayout(format!(
            "{kind} has {budget} vertices, cannot place {count} speakers"
        )));
    }
    let vertices: Vec<Vec3> = kind
        .unit_vertices()
        .into_iter()
        .map(|v| v * radius)
        .collect();
    let selected: Vec<Vec3> = if count == budget {
        vertices
    } else {
        spread_subset(&vertices, count)
            .into_iter()
            .map(|i| vertices[i])
            .collect()
    };
    Ok(LoudspeakerLayout {
        speaker_positions: selected,
        radius,
        kind: LayoutKind::PolyhedralShell(kind),
    })
}

/// Greedy max-min angular subset selection.
///
/// Starts from point 0 and repeatedly adds the point whose smallest angle to
/// the already chosen points is largest. Ties (within 1e-9 rad) go to the
/// point with the lowest Coulomb energy `sum 1/|u_i - u_j|` against the chosen
/// set, then to the lowest index.
pub fn spread_subset(points: &[Vec3], count: usize) -> Vec<usize> {
    let units: Vec<Vec3> = points
        .iter()
        .map(|p| p.normalized().unwrap_or(Vec3::Z))
        .collect();
    let count = count.min(units.len());
    if count == 0 {
        return Vec::new();
    }
    let mut chosen = vec![0usize];
    let mut taken = vec![false; units.len()];
    taken[0] = true;
    while chosen.len() < count {
        let mut best: Option<(usize, f64, f64)> = None;
        for (i, u) in units.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let mut min_angle = f64::INFINITY;
            let mut energy = 0.0;
            for &j in &chosen {
                let c = u.dot(units[j]).clamp(-1.0, 1.0);
                min_angle = min_angle.min(c.acos());
                energy += 1.0 / (*u - units[j]).norm().max(1e-12);
            }
            let better = match best {
                None => true,
                Some((_, a, e)) => {
                    min_angle > a + 1e-9 || ((min_angle - a).abs() <= 1e-9 && energy < e - 1e-12)
                }
            };
            if better {
                best = Some((i, min_angle, energy));
            }
        }
        let (i, _, _) = best.expect("unselected point exists");
        taken[i] = true;
        chosen.push(i);
    }
    chosen
}

/// Smallest pairwise angle (radians) between the directions of `points`.
pub fn min_angular_separation(points: &[Vec3]) -> f64 {
    let mut min = f64::INFINITY;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            let c = (a.dot(*b) / (a.norm() * b.norm())).clamp(-1.0, 1.0);
            min = min.min(c.acos());
        }
    }
    min
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySegment {
    pub duration: f64,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    segments: Vec<TrajectorySegment>,
}

impl Trajectory {
    pub fn new(segments: Vec<TrajectorySegment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidGeometry("trajectory has no segments".into()));
        }
        for (i, s) in segments.iter().enumerate() {
            if !(s.duration > 0.0 && s.duration.is_finite()) {
                return Err(Error::InvalidGeometry(format!(
                    "segment {i} has non-positive duration {}",
                    s.duration
                )));
            }
            if !s.pose.rotation.is_proper(1e-9) || !s.pose.translation.is_finite() {
                return Err(Error::InvalidGeometry(format!(
                    "segment {i} has an invalid pose"
                )));
            }
        }
        Ok(Self { segments })
    }

    /// One segment holding `pose` for `duration` seconds.
    pub fn fixed(pose: Pose, duration: f64) -> Result<Self> {
        Self::new(vec![TrajectorySegment { duration, pose }])
    }

    pub fn segments(&self) -> &[TrajectorySegment] {
        &self.segments
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Checks that every mic stays strictly inside the shell in every segment.
    pub fn check_containment(&self, geom: &ArrayGeometry, shell_radius: f64) -> Result<()> {
        for (i, s) in self.segments.iter().enumerate() {
            let radius = geom
                .mic_positions()
                .iter()
                .map(|&p| s.pose.transform(p).norm())
                .fold(0.0, f64::max);
            if radius >= shell_radius {
                return Err(Error::TrajectoryEscapes {
                    segment: i,
                    radius,
                    shell_radius,
                });
            }
        }
        Ok(())
    }
}

/// Random perturbed-and-rotated capture trajectory.
///
/// Segments share the duration equally. Translations are uniform in a ball of
/// radius `(shell_radius - array_extent) * TRANSLATION_SAFETY_FACTOR`, rotations
/// are Haar-uniform. The result is a pure function of the arguments.
pub fn sample_trajectory(
    shell_radius: f64,
    array_extent: f64,
    num_segments: usize,
    total_duration: f64,
    seed: u64,
) -> Result<Trajectory> {
    if !(array_extent >= 0.0 && array_extent < shell_radius) {
        return Err(Error::ArrayTooLarge {
            extent: array_extent,
            shell_radius,
        });
    }
    if num_segments == 0 {
        return Err(Error::InvalidConfig(
            "trajectory needs at least one segment".into(),
        ));
    }
    if !(total_duration > 0.0 && total_duration.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "trajectory duration must be positive, got {total_duration}"
        )));
    }
    let ball = (shell_radius - array_extent) * TRANSLATION_SAFETY_FACTOR;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let duration = total_duration / num_segments as f64;
    let segments = (0..num_segments)
        .map(|_| {
            let dir: [f64; 3] = UnitSphere.sample(&mut rng);
            let u: f64 = rand::Rng::random(&mut rng);
            let translation = Vec3::from(dir) * (ball * u.cbrt());
            let rotation = Rotation::random(&mut rng);
            TrajectorySegment {
                duration,
                pose: Pose {
                    translation,
                    rotation,
                },
            }
        })
        .collect();
    Trajectory::new(segments)
}

/// Key-value scene description: mic positions, loudspeaker layout and
/// trajectory parameters.
///
/// ```toml
/// mics = [[0.0, 0.0, 0.0], [0.016, 0.0, 0.0]]
///
/// [layout]
/// kind = "rhombic-triacontahedron"
/// radius_m = 1.8
/// count = 26
///
/// [trajectory]
/// seed = 7
/// segments = 240
/// ```
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mics: Option<Vec<Vec3>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<LayoutConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<TrajectoryConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutConfig {
    pub kind: String,
    pub radius_m: f64,
    pub count: usize,
    /// Explicit vertex indices, overriding the automatic subset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub indices: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryConfig {
    pub seed: u64,
    pub segments: usize,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self {
            kind: Polyhedron::RhombicTriacontahedron.name().to_string(),
            radius_m: 1.8,
            count: 26,
            indices: None,
        }
    }
}

impl SceneConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scene config serializes")
    }

    /// Configured mics, or the default linear array.
    pub fn geometry(&self) -> Result<ArrayGeometry> {
        match &self.mics {
            Some(m) => ArrayGeometry::from_positions(m.clone()),
            None => Ok(ArrayGeometry::default_linear()),
        }
    }

    /// Configured layout, or the 26-speaker 1.8 m triacontahedron shell.
    pub fn layout(&self) -> Result<LoudspeakerLayout> {
        self.layout.clone().unwrap_or_default().build()
    }
}

impl LayoutConfig {
    pub fn build(&self) -> Result<LoudspeakerLayout> {
        let kind: Polyhedron = self.kind.parse()?;
        match &self.indices {
            None => make_polyhedral_layout(kind, self.radius_m, self.count),
            Some(idx) => {
                if idx.len() != self.count {
                    return Err(Error::InvalidLayout(format!(
                        "{} indices given for count {}",
                        idx.len(),
                        self.count
                    )));
                }
                make_polyhedral_layout(kind, self.radius_m, kind.vertex_count())?.with_indices(idx)
            }
        }
    }
}

/// Speaker indices (into the 32 vertices) of the default 26-speaker shell.
pub fn default_shell_indices() -> Vec<usize> {
    spread_subset(&Polyhedron::RhombicTriacontahedron.unit_vertices(), 26)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn sorted_distances(g: &ArrayGeometry) -> Vec<f64> {
        let mut d: Vec<f64> = pair_distances(g).iter().map(|p| p.distance).collect();
        d.sort_by(f64::total_cmp);
        d
    }

    #[test]
    fn linear_array_from_gaps() {
        let g = make_linear_array(&[0.016]).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g.mic_positions()[1], Vec3::new(0.016, 0.0, 0.0));
        let pd = pair_distances(&g);
        assert_eq!(pd.len(), 1);
        assert_abs_diff_eq!(pd[0].distance, 0.016, epsilon = 1e-15);

        let g = make_linear_array(&[0.1, 0.1]).unwrap();
        let d = sorted_distances(&g);
        assert_abs_diff_eq!(d[0], 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(d[1], 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(d[2], 0.2, epsilon = 1e-15);
    }

    #[test]
    fn linear_array_rejects_bad_gaps() {
        assert!(matches!(
            make_linear_array(&[0.1, 0.0]),
            Err(Error::InvalidGeometry(_))
        ));
        assert!(matches!(
            make_linear_array(&[-0.01]),
            Err(Error::InvalidGeometry(_))
        ));
        assert!(matches!(
            make_linear_array(&[]),
            Err(Error::InvalidGeometry(_))
        ));
    }

    #[test]
    fn default_array_spans_16_to_320_mm() {
        let g = ArrayGeometry::default_linear();
        assert_eq!(g.len(), 16);
        let d = sorted_distances(&g);
        assert_eq!(d.len(), 120);
        assert_abs_diff_eq!(d[0], 0.016, epsilon = 1e-12);
        assert_abs_diff_eq!(d[119], 0.32, epsilon = 1e-12);
        let mut distinct: Vec<i64> = d.iter().map(|x| (x * 1000.0).round() as i64).collect();
        distinct.dedup();
        assert!(
            distinct.len() >= 40,
            "{} distinct distances",
            distinct.len()
        );
        assert!(distinct.contains(&150));
    }

    #[test]
    fn duplicate_mics_rejected() {
        let r = ArrayGeometry::from_positions(vec![Vec3::X, Vec3::X]);
        assert!(matches!(r, Err(Error::InvalidGeometry(_))));
        let r = ArrayGeometry::from_positions(vec![Vec3::X]);
        assert!(matches!(r, Err(Error::InvalidGeometry(_))));
    }

    #[test]
    fn triacontahedron_shell() {
        let l = make_polyhedral_layout(Polyhedron::RhombicTriacontahedron, 1.8, 26).unwrap();
        assert_eq!(l.len(), 26);
        for p in l.speaker_positions() {
            assert_abs_diff_eq!(p.norm(), 1.8, epsilon = 1e-9);
        }
        let full = Polyhedron::RhombicTriacontahedron.unit_vertices();
        assert_eq!(full.len(), 32);
        // Nearest icosahedron/dodecahedron vertex pair: 37.38 degrees.
        assert_abs_diff_eq!(
            min_angular_separation(&full).to_degrees(),
            37.377,
            epsilon = 1e-3
        );
        assert_eq!(default_shell_indices().len(), 26);
    }

    #[test]
    fn tetrahedron_angles() {
        let l = make_polyhedral_layout(Polyhedron::Tetrahedron, 1.0, 4).unwrap();
        let expected = (-1.0f64 / 3.0).acos();
        let p = l.speaker_positions();
        for i in 0..4 {
            for j in i + 1..4 {
                let c = p[i].dot(p[j]) / (p[i].norm() * p[j].norm());
                assert_abs_diff_eq!(c.acos(), expected, epsilon = 1e-12);
            }
        }
        assert_abs_diff_eq!(expected.to_degrees(), 109.4712, epsilon = 1e-4);
    }

    #[test]
    fn dodecahedron_edge_variant_has_30_speakers() {
        let l = make_polyhedral_layout(Polyhedron::DodecahedronEdges, 2.0, 30).unwrap();
        assert_eq!(l.len(), 30);
        for p in l.speaker_positions() {
            assert_abs_diff_eq!(p.norm(), 2.0, epsilon = 1e-12);
        }
        // Icosidodecahedron: every vertex has 4 nearest neighbours at 36 degrees.
        assert_abs_diff_eq!(
            min_angular_separation(l.speaker_positions()).to_degrees(),
            36.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn all_polyhedra_have_unit_vertices_and_documented_counts() {
        for kind in Polyhedron::ALL {
            let v = kind.unit_vertices();
            assert_eq!(v.len(), kind.vertex_count(), "{kind}");
            for p in &v {
                assert_abs_diff_eq!(p.norm(), 1.0, epsilon = 1e-12);
            }
            assert!(
                min_angular_separation(&v) > 0.1,
                "{kind} has coincident vertices"
            );
            assert_eq!(kind.name().parse::<Polyhedron>().unwrap(), kind);
        }
    }

    #[test]
    fn layout_errors() {
        assert!(matches!(
            "hexagon".parse::<Polyhedron>(),
            Err(Error::UnknownLayoutKind(_))
        ));
        assert!(matches!(
            make_polyhedral_layout(Polyhedron::Cube, 1.0, 9),
            Err(Error::InvalidLayout(_))
        ));
        assert!(matches!(
            make_polyhedral_layout(Polyhedron::Cube, 0.0, 4),
            Err(Error::InvalidLayout(_))
        ));
    }

    #[test]
    fn spread_subset_prefers_antipodes_and_spread() {
        let v = Polyhedron::Octahedron.unit_vertices();
        let two = spread_subset(&v, 2);
        assert_abs_diff_eq!(v[two[0]].dot(v[two[1]]), -1.0, epsilon = 1e-12);
        let l = make_polyhedral_layout(Polyhedron::RhombicTriacontahedron, 1.8, 26).unwrap();
        let four = l.subset(4).unwrap();
        assert!(min_angular_separation(four.speaker_positions()).to_degrees() > 60.0);
    }

    #[test]
    fn pose_examples() {
        let g = ArrayGeometry::from_positions(vec![Vec3::X, Vec3::new(0.0, 0.0, 0.3)]).unwrap();
        assert_eq!(apply_pose(&g, &Pose::IDENTITY), g);

        let rot = Rotation::about_axis(Vec3::Z, std::f64::consts::FRAC_PI_2).unwrap();
        let moved = apply_pose(&g, &Pose::new(Vec3::ZERO, rot).unwrap());
        let p = moved.mic_positions()[0];
        assert_abs_diff_eq!(p.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.z, 0.0, epsilon = 1e-12);

        let shifted = apply_pose(
            &g,
            &Pose::new(Vec3::new(0.2, -0.4, 1.0), Rotation::IDENTITY).unwrap(),
        );
        assert_abs_diff_eq!(
            pair_distances(&shifted)[0].distance,
            pair_distances(&g)[0].distance,
            epsilon = 1e-12
        );
    }

    #[test]
    fn pose_rejects_improper_rotation() {
        let mut m = Rotation::IDENTITY;
        m.matrix[2][2] = -1.0;
        assert!(Pose::new(Vec3::ZERO, m).is_err());
    }

    #[test]
    fn trajectory_single_segment_and_determinism() {
        let t = sample_trajectory(1.8, 0.32, 1, 30.0, 11).unwrap();
        assert_eq!(t.segments().len(), 1);
        assert_abs_diff_eq!(t.segments()[0].duration, 30.0);
        let a = sample_trajectory(1.8, 0.32, 50, 30.0, 5).unwrap();
        let b = sample_trajectory(1.8, 0.32, 50, 30.0, 5).unwrap();
        assert_eq!(a, b);
        let c = sample_trajectory(1.8, 0.32, 50, 30.0, 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn trajectory_errors() {
        assert!(matches!(
            sample_trajectory(0.3, 0.32, 4, 1.0, 0),
            Err(Error::ArrayTooLarge { .. })
        ));
        assert!(sample_trajectory(1.8, 0.32, 0, 1.0, 0).is_err());
    }

    #[test]
    fn trajectory_translations_are_centered() {
        // Uniform ball of radius a: each coordinate has variance a^2 / 5.
        let n = 1000;
        let t = sample_trajectory(1.8, 0.32, n, 30.0, 2024).unwrap();
        let a = (1.8 - 0.32) * TRANSLATION_SAFETY_FACTOR;
        let sigma = (a * a / 5.0 / n as f64).sqrt();
        let mean = t
            .segments()
            .iter()
            .fold(Vec3::ZERO, |acc, s| acc + s.pose.translation)
            * (1.0 / n as f64);
        for c in [mean.x, mean.y, mean.z] {
            assert!(
                c.abs() < 3.0 * sigma,
                "mean coordinate {c} vs 3 sigma {}",
                3.0 * sigma
            );
        }
        for s in t.segments() {
            assert!(s.pose.translation.norm() <= a);
            assert!(s.pose.rotation.is_proper(1e-12));
        }
    }

    #[test]
    fn trajectory_stays_inside_shell() {
        let g = ArrayGeometry::default_linear();
        let t = sample_trajectory(1.8, g.extent(), 500, 30.0, 9).unwrap();
        t.check_containment(&g, 1.8).unwrap();
        let escaped = Trajectory::fixed(
            Pose::new(Vec3::new(1.7, 0.0, 0.0), Rotation::IDENTITY).unwrap(),
            1.0,
        )
        .unwrap();
        assert!(matches!(
            escaped.check_containment(&g, 1.8),
            Err(Error::TrajectoryEscapes { .. })
        ));
    }

    #[test]
    fn random_rotations_average_to_zero() {
        // Haar measure: every entry has mean 0 and variance 1/3.
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 10_000;
        let mut sum = [[0.0; 3]; 3];
        for _ in 0..n {
            let r = Rotation::random(&mut rng);
            for (acc, row) in sum.iter_mut().zip(r.matrix) {
                for (a, v) in acc.iter_mut().zip(row) {
                    *a += v;
                }
            }
        }
        let tol = 4.0 * (1.0 / 3.0 / n as f64).sqrt();
        for row in sum {
            for v in row {
                assert!((v / n as f64).abs() < tol);
            }
        }
    }

    #[test]
    fn scene_config_round_trip() {
        let text = r#"
mics = [[0.0, 0.0, 0.0], [0.016, 0.0, 0.0], [0.05, 0.0, 0.0]]

[layout]
kind = "rhombic-triacontahedron"
radius_m = 1.8
count = 26

[trajectory]
seed = 7
segments = 240
"#;
        let cfg = SceneConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.geometry().unwrap().len(), 3);
        assert_eq!(cfg.layout().unwrap().len(), 26);
        assert_eq!(
            cfg.trajectory,
            Some(TrajectoryConfig {
                seed: 7,
                segments: 240
            })
        );
        let again = SceneConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(again, cfg);
        assert!(SceneConfig::from_toml_str("bogus = 1").is_err());
    }

    #[test]
    fn layout_index_override() {
        let cfg = LayoutConfig {
            kind: "cube".into(),
            radius_m: 1.0,
            count: 2,
            indices: Some(vec![0, 7]),
        };
        let l = cfg.build().unwrap();
        assert_abs_diff_eq!(
            l.speaker_positions()[0].dot(l.speaker_positions()[1]),
            -1.0,
            epsilon = 1e-12
        );
    }

    fn arb_vec(r: f64) -> impl Strategy<Value = Vec3> {
        (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn rigid_motion_preserves_pair_distances(
            mics in prop::collection::vec(arb_vec(0.5), 2..8),
            t in arb_vec(2.0),
            q in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0),
        ) {
            prop_assume!(q.0.abs() + q.1.abs() + q.2.abs() + q.3.abs() > 1e-3);
            let g = match ArrayGeometry::from_positions(mics) {
                Ok(g) => g,
                Err(_) => return Ok(()),
            };
            let rot = Rotation::from_quaternion(q.0, q.1, q.2, q.3).unwrap();
            let moved = apply_pose(&g, &Pose::new(t, rot).unwrap());
            for (a, b) in pair_distances(&g).iter().zip(pair_distances(&moved).iter()) {
                prop_assert!((a.distance - b.distance).abs() <= 1e-12);
            }
        }
    }
}
