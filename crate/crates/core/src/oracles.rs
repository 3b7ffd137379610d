//! Brute-force references that do not share code with the closed-form
//! projections: grid search over membership tests, finite differences for
//! subgradients, nullspace assembly for subspace limits, and a dense
//! angular sweep for the regularity constant of two lines.
//!
//! [`generate_fixtures`] records their answers as line-oriented text so the
//! test suite can compare the analytic code against frozen oracle output.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::engine::Objective;
use crate::error::{Error, Result};
use crate::intersection::subspace_intersection_projection;
use crate::par::{argmin_indices, Workers};
use crate::point::Point;
use crate::problem::Problem;
use crate::report::CheckReport;
use crate::sets::{SetDescriptor, Shape};

/// Grid oracles are desk-scale only.
pub const MAX_GRID_DIM: usize = 3;
pub const MAX_GRID_CELLS: f64 = 1e8;

/// Axis-aligned lattice `lower + j * (upper - lower) / (resolution - 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    lower: Vec<f64>,
    upper: Vec<f64>,
    resolution: Vec<usize>,
}

impl GridSpec {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, resolution: Vec<usize>) -> Result<Self> {
        let n = lower.len();
        if n == 0 || n > MAX_GRID_DIM {
            return Err(Error::Grid(format!(
                "grid dimension must be between 1 and {MAX_GRID_DIM}, got {n}"
            )));
        }
        if upper.len() != n || resolution.len() != n {
            return Err(Error::Grid("bounds and resolution must have equal length".into()));
        }
        for j in 0..n {
            if !(lower[j].is_finite() && upper[j].is_finite() && lower[j] < upper[j]) {
                return Err(Error::Grid(format!("axis {j} has an empty or invalid range")));
            }
            if resolution[j] < 2 {
                return Err(Error::Grid(format!("axis {j} needs at least 2 points")));
            }
        }
        let cells: f64 = resolution.iter().map(|&r| (r - 1) as f64).product();
        if cells > MAX_GRID_CELLS {
            return Err(Error::Grid(format!("{cells} cells exceed the cap of {MAX_GRID_CELLS}")));
        }
        Ok(Self {
            lower,
            upper,
            resolution,
        })
    }

    /// The same resolution `r` on every axis of the cube `[lo, hi]^n`.
    pub fn cube(n: usize, lo: f64, hi: f64, r: usize) -> Result<Self> {
        Self::new(vec![lo; n], vec![hi; n], vec![r; n])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn widths(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|j| (self.upper[j] - self.lower[j]) / (self.resolution[j] - 1) as f64)
            .collect()
    }

    pub fn cell_diagonal(&self) -> f64 {
        self.widths().iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    /// Lexicographic unflattening: axis 0 varies slowest.
    fn point(&self, mut flat: usize, widths: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut z = vec![0.0; n];
        for j in (0..n).rev() {
            let r = self.resolution[j];
            z[j] = self.lower[j] + (flat % r) as f64 * widths[j];
            flat /= r;
        }
        z
    }
}

/// Something grid search can test membership of, without projecting.
pub trait GridRegion: Sync {
    fn dim(&self) -> usize;
    /// `true` when `z` lies in the region relaxed by (roughly) distance `slack`.
    fn admits(&self, z: &[f64], slack: f64) -> bool;
}

impl GridRegion for SetDescriptor {
    fn dim(&self) -> usize {
        SetDescriptor::dim(self)
    }
    fn admits(&self, z: &[f64], slack: f64) -> bool {
        self.satisfies(z, slack)
    }
}

impl GridRegion for Problem {
    fn dim(&self) -> usize {
        Problem::dim(self)
    }
    fn admits(&self, z: &[f64], slack: f64) -> bool {
        self.satisfies(z, slack)
    }
}

/// The enlargement `C_eps = {z : d(z, C) <= eps}` of a single set.
#[derive(Clone, Copy, Debug)]
pub struct EnlargedSet<'a> {
    pub set: &'a SetDescriptor,
    pub eps: f64,
}

impl GridRegion for EnlargedSet<'_> {
    fn dim(&self) -> usize {
        self.set.dim()
    }
    fn admits(&self, z: &[f64], slack: f64) -> bool {
        match self.set.shape() {
            // per-coordinate relaxation is not a Euclidean enlargement
            Shape::Box { lower, upper } => {
                let d2: f64 = z
                    .iter()
                    .zip(lower.iter().zip(upper.iter()))
                    .map(|(&v, (&lo, &hi))| {
                        let e = (lo - v).max(v - hi).max(0.0);
                        e * e
                    })
                    .sum();
                d2.sqrt() <= self.eps + slack
            }
            // for the other shapes the relaxed inequality is exactly a distance
            _ => self.set.satisfies(z, self.eps + slack),
        }
    }
}

const WINDOW_CELLS: [usize; 3] = [400, 50, 12];
const MAX_LEVELS: usize = 64;
const MAX_RECENTERS: usize = 10_000;

/// Nearest admitted grid point to `x`.
///
/// A single scan is only within `O(sqrt(d * h))` of the projection when the
/// boundary is not aligned with the grid, so after the scan over `grid` the
/// search zooms: each level halves the spacing in a window around the
/// incumbent (recentering when the incumbent hits the window edge) until the
/// spacing is small enough that the answer is within one cell diagonal of
/// `grid` from the true projection.
pub fn grid_project<R: GridRegion + ?Sized>(
    region: &R,
    x: &Point,
    grid: &GridSpec,
    workers: Workers,
) -> Result<Point> {
    let n = grid.dim();
    if region.dim() != n || x.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: if region.dim() != n { region.dim() } else { x.dim() },
        });
    }
    let widths = grid.widths();
    let diag0 = grid.cell_diagonal();
    let found = argmin_indices(grid.len(), workers, |flat| {
        let z = grid.point(flat, &widths);
        region.admits(&z, diag0).then(|| dist_sq(x, &z))
    });
    let Some((flat, _)) = found else {
        return Err(Error::Grid(
            "no admitted grid point; use a finer grid or a larger box".into(),
        ));
    };
    let mut best = grid.point(flat, &widths);

    let half = WINDOW_CELLS[n - 1] as i64;
    let side = (2 * half + 1) as usize;
    let count = side.pow(n as u32);
    let mut h = widths;
    for _ in 0..MAX_LEVELS {
        let d = dist_sq(x, &best).sqrt();
        let diag = diag_of(&h);
        if diag <= diag0 * 1e-3 && diag <= diag0 * diag0 / (16.0 * (d + diag0)) {
            break;
        }
        h.iter_mut().for_each(|w| *w *= 0.5);
        let diag = diag_of(&h);
        for _ in 0..MAX_RECENTERS {
            let center = best.clone();
            let offset = |flat: usize| -> Vec<i64> {
                let mut f = flat;
                let mut o = vec![0i64; n];
                for j in (0..n).rev() {
                    o[j] = (f % side) as i64 - half;
                    f /= side;
                }
                o
            };
            let at = |o: &[i64]| -> Vec<f64> {
                (0..n).map(|j| center[j] + o[j] as f64 * h[j]).collect()
            };
            let found = argmin_indices(count, workers, |flat| {
                let z = at(&offset(flat));
                region.admits(&z, diag).then(|| dist_sq(x, &z))
            });
            let Some((flat, _)) = found else {
                // nothing admitted at this spacing; keep the incumbent
                break;
            };
            let o = offset(flat);
            best = at(&o);
            if o.iter().all(|v| v.abs() < half - 1) {
                break;
            }
        }
    }
    Ok(Point::from_vec(best))
}

fn diag_of(h: &[f64]) -> f64 {
    h.iter().map(|w| w * w).sum::<f64>().sqrt()
}

fn dist_sq(x: &Point, z: &[f64]) -> f64 {
    x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Outcome of [`finite_difference_subgradient_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct SubgradientReport {
    /// `phi(y) >= phi(x) + <v, y - x>` on sampled `y`.
    pub inequality: CheckReport,
    /// `max_i |v_i - central difference_i|` where the objective is smooth.
    pub gradient_error: Option<f64>,
    pub h: f64,
}

impl SubgradientReport {
    pub fn passed(&self) -> bool {
        self.inequality.passed() && self.gradient_error.is_none_or(|e| e <= 10.0 * self.h)
    }
}

/// Verifies the subgradient inequality for `v = objective.subgradient(x)`
/// on `samples` random `y` within distance `10 h` of `x`, and compares `v`
/// with central differences of step `h` where the objective is smooth.
pub fn finite_difference_subgradient_check(
    objective: &Objective,
    x: &Point,
    h: f64,
    samples: usize,
    seed: u64,
) -> Result<SubgradientReport> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("step h must be positive, got {h}")));
    }
    x.check_dim(objective.dim())?;
    let v = objective.subgradient(x);
    let fx = objective.value(x);
    let mut inequality = CheckReport::new("phi(y) >= phi(x) + <v, y - x>");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for j in 0..samples {
        let dir = Point::from_vec((0..x.dim()).map(|_| rng.random_range(-1.0..1.0)).collect());
        let len = dir.norm();
        if len == 0.0 || len > 1.0 {
            continue;
        }
        let y = x.axpy(10.0 * h, &dir);
        let slack = objective.value(&y) - fx - v.dot(&y.sub(x));
        inequality.record(j, None, slack, 1e-9 * (1.0 + fx.abs()));
    }
    let gradient_error = objective.smooth_near(x, h).then(|| {
        (0..x.dim())
            .map(|i| {
                let e = Point::unit(x.dim(), i);
                let fd = (objective.value(&x.axpy(h, &e)) - objective.value(&x.axpy(-h, &e)))
                    / (2.0 * h);
                (fd - v[i]).abs()
            })
            .fold(0.0, f64::max)
    });
    Ok(SubgradientReport {
        inequality,
        gradient_error,
        h,
    })
}

/// `P_C x0` for an intersection of linear subspaces, assembled from a
/// nullspace basis of the stacked complements. This is the limit of every
/// projection method started at `x0`.
pub fn two_subspace_exact_limit(sets: &[SetDescriptor], x0: &Point) -> Result<Point> {
    subspace_intersection_projection(sets, x0)
}

/// `1 / min_phi max(|sin phi|, |sin(phi - theta)|)` over `steps` equally
/// spaced directions: the regularity constant of two lines through the
/// origin at angle `theta`, brute force.
pub fn angular_sweep_kappa(theta: f64, steps: usize) -> f64 {
    (0..steps)
        .map(|j| {
            let phi = std::f64::consts::PI * j as f64 / steps as f64;
            phi.sin().abs().max((phi - theta).sin().abs())
        })
        .fold(f64::INFINITY, f64::min)
        .recip()
}

/// One line of the fixtures file:
/// `kind \t problem-hash \t input \t output \t tolerance`.
#[derive(Clone, Debug, PartialEq)]
pub struct FixtureRecord {
    pub kind: String,
    pub problem_hash: String,
    pub input: Vec<f64>,
    pub output: Vec<f64>,
    pub tolerance: f64,
}

impl FixtureRecord {
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{:.17e}",
            self.kind,
            self.problem_hash,
            floats(&self.input),
            floats(&self.output),
            self.tolerance
        )
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(Error::Mismatch(format!("fixture line needs 5 fields, got {}", f.len())));
        }
        let list = |s: &str| -> Result<Vec<f64>> {
            if s.is_empty() {
                return Ok(Vec::new());
            }
            s.split(',')
                .map(|v| v.parse::<f64>().map_err(|e| Error::Mismatch(format!("bad float {v:?}: {e}"))))
                .collect()
        };
        Ok(Self {
            kind: f[0].to_string(),
            problem_hash: f[1].to_string(),
            input: list(f[2])?,
            output: list(f[3])?,
            tolerance: f[4]
                .parse()
                .map_err(|e| Error::Mismatch(format!("bad tolerance: {e}")))?,
        })
    }
}

fn floats(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.17e}")).collect::<Vec<_>>().join(",")
}

/// First 16 hex digits of the SHA-256 of the canonical set descriptions.
pub fn problem_hash(sets: &[SetDescriptor]) -> String {
    let mut h = Sha256::new();
    for s in sets {
        h.update(s.canonical().as_bytes());
        h.update(b"\n");
    }
    let digest = h.finalize();
    digest.iter().take(8).fold(String::new(), |mut acc, b| {
        let _ = write!(acc, "{b:02x}");
        acc
    })
}

/// The 2-D grid used for fixtures: `[-4, 4]^2` at 401 points per axis.
pub fn fixture_grid() -> GridSpec {
    GridSpec::cube(2, -4.0, 4.0, 401).expect("valid grid")
}

/// One representative of every set variant in the plane.
pub fn fixture_sets() -> Vec<(&'static str, SetDescriptor)> {
    let p = |v: &[f64]| Point::new(v.to_vec()).expect("finite");
    vec![
        ("halfspace", SetDescriptor::half_space(p(&[1.0, 2.0]), 0.5).expect("valid")),
        ("hyperplane", SetDescriptor::hyperplane(p(&[-0.6, 0.8]), 0.3).expect("valid")),
        ("box", SetDescriptor::boxed(p(&[-1.0, -0.5]), p(&[0.5, 1.5])).expect("valid")),
        ("singleton_box", SetDescriptor::boxed(p(&[0.25, -0.75]), p(&[0.25, -0.75])).expect("valid")),
        ("ball", SetDescriptor::ball(p(&[0.3, -0.2]), 1.2).expect("valid")),
        ("affine", SetDescriptor::affine_subspace(vec![p(&[1.0, 3.0])], p(&[0.5, 0.5])).expect("valid")),
        ("linear", SetDescriptor::linear_subspace(vec![p(&[2.0, -1.0])], 2).expect("valid")),
    ]
}

/// The quadrant `{x_1 <= 0, x_2 <= 0}`.
pub fn fixture_quadrant() -> Problem {
    let p = |v: &[f64]| Point::new(v.to_vec()).expect("finite");
    Problem::new(vec![
        SetDescriptor::half_space(p(&[1.0, 0.0]), 0.0).expect("valid"),
        SetDescriptor::half_space(p(&[0.0, 1.0]), 0.0).expect("valid"),
    ])
    .expect("valid")
}

/// Two planes in `R^3` meeting in the line `span{(1, 1, 0)}`.
pub fn fixture_planes() -> Vec<SetDescriptor> {
    let p = |v: &[f64]| Point::new(v.to_vec()).expect("finite");
    vec![
        SetDescriptor::linear_subspace(vec![p(&[1.0, 0.0, 0.0]), p(&[0.0, 1.0, 0.0])], 3).expect("valid"),
        SetDescriptor::linear_subspace(vec![p(&[1.0, 1.0, 0.0]), p(&[0.0, 0.0, 1.0])], 3).expect("valid"),
    ]
}

/// Angles used for two-line fixtures.
pub const FIXTURE_ANGLES: [f64; 3] = [
    std::f64::consts::PI / 6.0,
    std::f64::consts::PI / 3.0,
    4.0 * std::f64::consts::PI / 9.0,
];

const FIXTURE_POINTS_PER_SET: usize = 8;
const ANGULAR_SWEEP_STEPS: usize = 2_000_000;

/// Regenerates every fixture record from `seed`.
pub fn generate_fixtures(seed: u64, workers: Workers) -> Result<Vec<FixtureRecord>> {
    let grid = fixture_grid();
    let diag = grid.cell_diagonal();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let draw = |rng: &mut ChaCha8Rng| {
        Point::from_vec(vec![rng.random_range(-3.5..3.5), rng.random_range(-3.5..3.5)])
    };

    for (name, set) in fixture_sets() {
        let hash = problem_hash(std::slice::from_ref(&set));
        for _ in 0..FIXTURE_POINTS_PER_SET {
            let x = draw(&mut rng);
            let z = grid_project(&set, &x, &grid, workers)?;
            out.push(FixtureRecord {
                kind: format!("grid_project/{name}"),
                problem_hash: hash.clone(),
                input: x.into_vec(),
                output: z.into_vec(),
                tolerance: diag,
            });
        }
        // enlarged sets: input is (x, eps), output the grid distance to C_eps
        for _ in 0..2 {
            let x = draw(&mut rng);
            let eps = rng.random_range(0.05..0.5);
            let region = EnlargedSet { set: &set, eps };
            let z = grid_project(&region, &x, &grid, workers)?;
            let mut input = x.clone().into_vec();
            input.push(eps);
            out.push(FixtureRecord {
                kind: format!("grid_enlarged_distance/{name}"),
                problem_hash: hash.clone(),
                input,
                output: vec![x.distance(&z)],
                tolerance: diag,
            });
        }
    }

    let quadrant = fixture_quadrant();
    let qhash = problem_hash(quadrant.sets());
    for x in [[1.0, 2.0], [-1.0, 2.0], [2.5, -0.7], [-1.5, -2.0]] {
        let x = Point::from_vec(x.to_vec());
        let z = grid_project(&quadrant, &x, &grid, workers)?;
        out.push(FixtureRecord {
            kind: "grid_project/quadrant".into(),
            problem_hash: qhash.clone(),
            input: x.into_vec(),
            output: z.into_vec(),
            tolerance: diag,
        });
    }

    for theta in FIXTURE_ANGLES {
        let sets = vec![SetDescriptor::line_at_angle(0.0), SetDescriptor::line_at_angle(theta)];
        out.push(FixtureRecord {
            kind: "angular_sweep_kappa/two_lines".into(),
            problem_hash: problem_hash(&sets),
            input: vec![theta],
            output: vec![angular_sweep_kappa(theta, ANGULAR_SWEEP_STEPS)],
            tolerance: 1e-5,
        });
    }

    let planes = fixture_planes();
    let phash = problem_hash(&planes);
    for x in [[3.0, 1.0, 5.0], [-2.0, 0.5, 1.0]] {
        let x = Point::from_vec(x.to_vec());
        let z = two_subspace_exact_limit(&planes, &x)?;
        out.push(FixtureRecord {
            kind: "subspace_limit/planes".into(),
            problem_hash: phash.clone(),
            input: x.into_vec(),
            output: z.into_vec(),
            tolerance: 1e-9,
        });
    }
    Ok(out)
}

/// Fixtures file contents, one record per line after a comment header.
pub fn render_fixtures(records: &[FixtureRecord], seed: u64) -> String {
    let mut s = format!("# oracle fixtures, seed {seed}\n# kind\tproblem_hash\tinput\toutput\ttolerance\n");
    for r in records {
        s.push_str(&r.to_line());
        s.push('\n');
    }
    s
}

pub fn parse_fixtures(text: &str) -> Result<Vec<FixtureRecord>> {
    text.lines()
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(FixtureRecord::parse_line)
        .collect()
}

/// Seed the checked-in fixtures were generated with.
pub const FIXTURE_SEED: u64 = 20;
