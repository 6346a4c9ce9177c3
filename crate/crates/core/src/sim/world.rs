//! Synthetic parking-lot geometry and its rasterization around a vehicle.

use super::{mix_seed, unit_from_hash, SimError};
use crate::camera_ipm::IpmIntrinsics;
use crate::geometry::Pose6;
use crate::semantics::{NoiseSpec, SemanticClass};
use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

/// Painted strip between two endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stripe {
    pub a: Vector2<f64>,
    pub b: Vector2<f64>,
    pub width: f64,
}

impl Stripe {
    pub fn polygon(&self) -> Vec<Vector2<f64>> {
        let d = self.b - self.a;
        let n = Vector2::new(-d.y, d.x).normalize() * (self.width / 2.0);
        vec![self.a + n, self.b + n, self.b - n, self.a - n]
    }
}

/// Ground-truth parking spot, corners counter-clockwise from the entry side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotTruth {
    pub corners: [Vector2<f64>; 4],
}

impl SpotTruth {
    pub fn center(&self) -> Vector2<f64> {
        self.corners.iter().sum::<Vector2<f64>>() / 4.0
    }
}

/// Parameters of the generated lot: `2 * corridors` rows of spots facing
/// horizontal corridors, joined at both ends by vertical aisles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldSpec {
    pub extent: [f64; 2],
    pub corridors: usize,
    pub spots_per_row: usize,
    pub spot_width: f64,
    pub spot_depth: f64,
    pub line_width: f64,
    pub corridor_width: f64,
    /// Distance of each vertical aisle's centerline from the lot edge.
    pub aisle_offset: f64,
    pub speed_bump_interval: f64,
    pub speed_bump_width: f64,
    pub guide_sign_interval: f64,
    pub corner_radius: f64,
    pub seed: u64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            extent: [100.0, 60.0],
            corridors: 2,
            spots_per_row: 30,
            spot_width: 2.5,
            spot_depth: 5.3,
            line_width: 0.15,
            corridor_width: 7.0,
            aisle_offset: 6.0,
            speed_bump_interval: 24.0,
            speed_bump_width: 0.5,
            guide_sign_interval: 14.0,
            corner_radius: 0.15,
            seed: 1,
        }
    }
}

impl WorldSpec {
    pub fn rows(&self) -> usize {
        2 * self.corridors
    }

    /// Lot whose corridor/aisle loop is a square with the given side.
    pub fn square(side: f64, seed: u64) -> Self {
        let base = WorldSpec::default();
        let width = side + 2.0 * base.aisle_offset;
        let usable = width - 2.0 * (base.aisle_offset + base.corridor_width / 2.0 + 1.0);
        Self {
            extent: [width, 2.0 * side],
            spots_per_row: (usable / base.spot_width).floor() as usize,
            seed,
            ..base
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldModel {
    pub extent: Vector2<f64>,
    pub parking_lines: Vec<Stripe>,
    pub guide_signs: Vec<Vec<Vector2<f64>>>,
    pub speed_bumps: Vec<Stripe>,
    pub corners: Vec<Vector2<f64>>,
    pub corner_radius: f64,
    pub walls: Vec<Vec<Vector2<f64>>>,
    pub obstacles: Vec<Vec<Vector2<f64>>>,
    pub spots: Vec<SpotTruth>,
    pub entrance: Pose6,
    /// Corridor centerlines (y) and aisle centerlines (x) of the drivable loop.
    pub corridor_y: Vec<f64>,
    pub aisle_x: Vec<f64>,
    #[serde(skip)]
    shapes: OnceLock<Arc<ShapeIndex>>,
}

impl PartialEq for WorldModel {
    fn eq(&self, o: &Self) -> bool {
        self.extent == o.extent
            && self.parking_lines == o.parking_lines
            && self.guide_signs == o.guide_signs
            && self.speed_bumps == o.speed_bumps
            && self.corners == o.corners
            && self.corner_radius == o.corner_radius
            && self.walls == o.walls
            && self.obstacles == o.obstacles
            && self.spots == o.spots
            && self.entrance == o.entrance
            && self.corridor_y == o.corridor_y
            && self.aisle_x == o.aisle_x
    }
}

#[derive(Debug, Clone)]
pub struct Shape {
    pub id: u32,
    pub class: SemanticClass,
    pub polygon: Vec<Vector2<f64>>,
    lo: Vector2<f64>,
    hi: Vector2<f64>,
}

#[derive(Debug)]
struct ShapeIndex {
    shapes: Vec<Shape>,
    cells: FxHashMap<(i32, i32), Vec<u32>>,
}

const SHAPE_CELL: f64 = 4.0;

impl ShapeIndex {
    fn build(world: &WorldModel) -> Self {
        let mut polys: Vec<(SemanticClass, Vec<Vector2<f64>>)> = Vec::new();
        polys.extend(world.parking_lines.iter().map(|s| (SemanticClass::ParkingLine, s.polygon())));
        polys.extend(world.guide_signs.iter().map(|p| (SemanticClass::GuideSign, p.clone())));
        polys.extend(world.speed_bumps.iter().map(|s| (SemanticClass::SpeedBump, s.polygon())));
        polys.extend(world.corners.iter().map(|c| {
            let ring = (0..8)
                .map(|k| {
                    let a = f64::from(k) * PI / 4.0 + PI / 8.0;
                    c + Vector2::new(a.cos(), a.sin()) * world.corner_radius
                })
                .collect();
            (SemanticClass::ParkingCorner, ring)
        }));
        polys.extend(world.walls.iter().map(|p| (SemanticClass::Wall, p.clone())));
        polys.extend(world.obstacles.iter().map(|p| (SemanticClass::Obstacle, p.clone())));

        let mut shapes = Vec::with_capacity(polys.len());
        let mut cells: FxHashMap<(i32, i32), Vec<u32>> = FxHashMap::default();
        for (id, (class, polygon)) in polys.into_iter().enumerate() {
            let (lo, hi) = bounds(&polygon);
            for cx in cell(lo.x)..=cell(hi.x) {
                for cy in cell(lo.y)..=cell(hi.y) {
                    cells.entry((cx, cy)).or_default().push(id as u32);
                }
            }
            shapes.push(Shape {
                id: id as u32,
                class,
                polygon,
                lo,
                hi,
            });
        }
        Self { shapes, cells }
    }

    /// Shape ids whose bounding box meets the query box, ascending.
    fn query(&self, lo: Vector2<f64>, hi: Vector2<f64>) -> Vec<u32> {
        let mut ids = Vec::new();
        for cx in cell(lo.x)..=cell(hi.x) {
            for cy in cell(lo.y)..=cell(hi.y) {
                if let Some(v) = self.cells.get(&(cx, cy)) {
                    ids.extend(v.iter().copied());
                }
            }
        }
        ids.sort_unstable();
        ids.dedup();
        ids.retain(|&i| {
            let s = &self.shapes[i as usize];
            s.lo.x <= hi.x && s.hi.x >= lo.x && s.lo.y <= hi.y && s.hi.y >= lo.y
        });
        ids
    }
}

fn cell(v: f64) -> i32 {
    (v / SHAPE_CELL).floor() as i32
}

fn bounds(poly: &[Vector2<f64>]) -> (Vector2<f64>, Vector2<f64>) {
    let mut lo = Vector2::repeat(f64::INFINITY);
    let mut hi = Vector2::repeat(f64::NEG_INFINITY);
    for p in poly {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Vector2<f64>> {
    vec![
        Vector2::new(x0, y0),
        Vector2::new(x1, y0),
        Vector2::new(x1, y1),
        Vector2::new(x0, y1),
    ]
}

/// Arrow of length `len` pointing along `heading`, centered at `c`.
fn arrow(c: Vector2<f64>, heading: f64, len: f64, width: f64) -> Vec<Vector2<f64>> {
    let shaft = width * 0.35;
    let head = len * 0.4;
    let local = [
        (-len / 2.0, -shaft / 2.0),
        (len / 2.0 - head, -shaft / 2.0),
        (len / 2.0 - head, -width / 2.0),
        (len / 2.0, 0.0),
        (len / 2.0 - head, width / 2.0),
        (len / 2.0 - head, shaft / 2.0),
        (-len / 2.0, shaft / 2.0),
    ];
    let (s, co) = heading.sin_cos();
    local
        .iter()
        .map(|&(x, y)| c + Vector2::new(co * x - s * y, s * x + co * y))
        .collect()
}

impl WorldModel {
    pub fn empty(extent: Vector2<f64>) -> Self {
        Self {
            extent,
            parking_lines: Vec::new(),
            guide_signs: Vec::new(),
            speed_bumps: Vec::new(),
            corners: Vec::new(),
            corner_radius: 0.15,
            walls: Vec::new(),
            obstacles: Vec::new(),
            spots: Vec::new(),
            entrance: Pose6::planar(extent.x / 2.0, extent.y / 2.0, 0.0),
            corridor_y: Vec::new(),
            aisle_x: Vec::new(),
            shapes: OnceLock::new(),
        }
    }

    fn index(&self) -> &ShapeIndex {
        self.shapes.get_or_init(|| Arc::new(ShapeIndex::build(self)))
    }

    /// All painted and structural geometry as labeled polygons, in id order.
    pub fn shapes(&self) -> &[Shape] {
        &self.index().shapes
    }

    /// Every vertex of every shape lies within `[0, extent]`.
    pub fn within_extent(&self) -> bool {
        self.shapes().iter().all(|s| {
            s.lo.x >= 0.0 && s.lo.y >= 0.0 && s.hi.x <= self.extent.x && s.hi.y <= self.extent.y
        })
    }

    /// Closed loop along the first and last corridors and both aisles,
    /// starting and ending mid-way along the first corridor.
    pub fn loop_waypoints(&self) -> Vec<Vector2<f64>> {
        let (Some(&y0), Some(&y1)) = (self.corridor_y.first(), self.corridor_y.last()) else {
            return Vec::new();
        };
        let (Some(&x0), Some(&x1)) = (self.aisle_x.first(), self.aisle_x.last()) else {
            return Vec::new();
        };
        let start = Vector2::new((x0 + x1) / 2.0, y0);
        vec![
            start,
            Vector2::new(x1, y0),
            Vector2::new(x1, y1),
            Vector2::new(x0, y1),
            Vector2::new(x0, y0),
            start,
        ]
    }

    /// Label lattice around `pose`. Lattice node `(u, v)` sits at vehicle
    /// coordinates `((u - c_u) / s, (v - c_v) / s)` on the ground plane.
    ///
    /// Noise: features listed as dropped for `noise.seed` are skipped, each
    /// remaining feature is shifted by up to `jitter_m` per axis, and each
    /// node flips to another class with probability `p_flip`.
    pub fn rasterize(&self, pose: &Pose6, k: &IpmIntrinsics, noise: &NoiseSpec, jitter_m: f64) -> Vec<SemanticClass> {
        let (w, h) = (k.size.0 as usize, k.size.1 as usize);
        let rot = pose.rotation();
        let mut lo = Vector2::repeat(f64::INFINITY);
        let mut hi = Vector2::repeat(f64::NEG_INFINITY);
        for (u, v) in [(0.0, 0.0), (w as f64 - 1.0, 0.0), (0.0, h as f64 - 1.0), (w as f64 - 1.0, h as f64 - 1.0)] {
            let xv = Vector3::new((u - k.center.x) / k.scale, (v - k.center.y) / k.scale, 0.0);
            let xw = (rot * xv + pose.t).xy();
            lo = lo.inf(&xw);
            hi = hi.sup(&xw);
        }
        let margin = jitter_m.abs() + 1.0 / k.scale;
        let inv = pose.inverse();
        let to_lattice = |p: &Vector2<f64>| {
            let xv = inv.transform_point(&Vector3::new(p.x, p.y, 0.0));
            Vector2::new(xv.x * k.scale + k.center.x, xv.y * k.scale + k.center.y)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(frame_seed(noise.seed, pose));
        self.paint(
            (w, h),
            lo.add_scalar(-margin),
            hi.add_scalar(margin),
            to_lattice,
            noise,
            jitter_m * k.scale,
            &mut rng,
        )
    }

    /// Labeled nodes of the world-fixed lattice `((i + 1/2) s, (j + 1/2) s)`
    /// that fall inside the footprint `|x| <= half.0, |y| <= half.1` around
    /// `pose`, in the vehicle frame, feature classes only. Nodes are fixed in
    /// the world, so two frames that see the same ground see the same points.
    /// Noise as in [`WorldModel::rasterize`].
    pub fn sample_ground(
        &self,
        pose: &Pose6,
        half: (f64, f64),
        spacing: f64,
        noise: &NoiseSpec,
        jitter_m: f64,
    ) -> Vec<(Vector3<f64>, SemanticClass)> {
        let rot = pose.rotation();
        let mut lo = Vector2::repeat(f64::INFINITY);
        let mut hi = Vector2::repeat(f64::NEG_INFINITY);
        for (x, y) in [(-half.0, -half.1), (half.0, -half.1), (-half.0, half.1), (half.0, half.1)] {
            let xw = (rot * Vector3::new(x, y, 0.0) + pose.t).xy();
            lo = lo.inf(&xw);
            hi = hi.sup(&xw);
        }
        let i0 = (lo.x / spacing - 0.5).floor();
        let j0 = (lo.y / spacing - 0.5).floor();
        let w = ((hi.x / spacing - 0.5).ceil() - i0) as usize + 1;
        let h = ((hi.y / spacing - 0.5).ceil() - j0) as usize + 1;
        let to_lattice = |p: &Vector2<f64>| Vector2::new(p.x / spacing - 0.5 - i0, p.y / spacing - 0.5 - j0);
        let margin = jitter_m.abs() + spacing;
        let mut rng = ChaCha8Rng::seed_from_u64(frame_seed(noise.seed, pose));
        let grid = self.paint(
            (w, h),
            lo.add_scalar(-margin),
            hi.add_scalar(margin),
            to_lattice,
            noise,
            jitter_m / spacing,
            &mut rng,
        );

        let inv = pose.inverse();
        let mut out = Vec::new();
        for (n, class) in grid.into_iter().enumerate() {
            if !class.is_feature() {
                continue;
            }
            let (u, v) = ((n % w) as f64, (n / w) as f64);
            let xw = Vector3::new((i0 + u + 0.5) * spacing, (j0 + v + 0.5) * spacing, 0.0);
            let mut xv = inv.transform_point(&xw);
            xv.z = 0.0;
            if xv.x.abs() <= half.0 && xv.y.abs() <= half.1 {
                out.push((xv, class));
            }
        }
        out
    }

    /// Paint every shape meeting the world box `[lo, hi]` onto a `w x h`
    /// lattice through `to_lattice`, then apply label flips.
    #[allow(clippy::too_many_arguments)]
    fn paint(
        &self,
        (w, h): (usize, usize),
        lo: Vector2<f64>,
        hi: Vector2<f64>,
        to_lattice: impl Fn(&Vector2<f64>) -> Vector2<f64>,
        noise: &NoiseSpec,
        jitter_nodes: f64,
        rng: &mut ChaCha8Rng,
    ) -> Vec<SemanticClass> {
        let mut grid = vec![SemanticClass::FreeSpace; w * h];
        let index = self.index();
        let mut lattice_poly = Vec::new();
        for id in index.query(lo, hi) {
            if noise.p_drop > 0.0 && unit_from_hash(mix_seed(noise.seed ^ 0xD0D0, u64::from(id))) < noise.p_drop {
                continue;
            }
            let shape = &index.shapes[id as usize];
            let (jx, jy) = if jitter_nodes > 0.0 {
                (rng.gen_range(-jitter_nodes..=jitter_nodes), rng.gen_range(-jitter_nodes..=jitter_nodes))
            } else {
                (0.0, 0.0)
            };
            lattice_poly.clear();
            lattice_poly.extend(shape.polygon.iter().map(|p| to_lattice(p) + Vector2::new(jx, jy)));
            let prio = shape.class.priority();
            fill_polygon(&lattice_poly, w, h, |u, v| {
                let cell = &mut grid[v * w + u];
                if prio > cell.priority() {
                    *cell = shape.class;
                }
            });
        }

        if noise.p_flip > 0.0 {
            for cell in grid.iter_mut() {
                if rng.gen::<f64>() < noise.p_flip {
                    // one of the other seven labeled classes
                    let mut pick = rng.gen_range(0..7);
                    if pick >= cell.code() as usize {
                        pick += 1;
                    }
                    *cell = SemanticClass::ALL[pick];
                }
            }
        }
        grid
    }
}

/// Per-frame seed derived from the noise seed and the exact pose.
fn frame_seed(seed: u64, pose: &Pose6) -> u64 {
    pose.to_vec6()
        .iter()
        .fold(mix_seed(seed, 0x5EED), |acc, c| mix_seed(acc, c.to_bits()))
}

/// Even-odd scanline fill over integer lattice nodes in `[0, w) x [0, h)`.
pub(crate) fn fill_polygon(poly: &[Vector2<f64>], w: usize, h: usize, mut visit: impl FnMut(usize, usize)) {
    if poly.len() < 3 || w == 0 || h == 0 {
        return;
    }
    let (lo, hi) = bounds(poly);
    let v0 = lo.y.ceil().max(0.0);
    let v1 = hi.y.floor().min(h as f64 - 1.0);
    if v0 > v1 {
        return;
    }
    let mut xs: Vec<f64> = Vec::with_capacity(8);
    for v in v0 as usize..=v1 as usize {
        let y = v as f64;
        xs.clear();
        for i in 0..poly.len() {
            let a = poly[i];
            let b = poly[(i + 1) % poly.len()];
            if (a.y <= y && y < b.y) || (b.y <= y && y < a.y) {
                xs.push(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            let u0 = pair[0].ceil().max(0.0);
            let u1 = pair[1].floor().min(w as f64 - 1.0);
            if u0 > u1 {
                continue;
            }
            for u in u0 as usize..=u1 as usize {
                visit(u, v);
            }
        }
    }
}

/// Build a lot from its spec. The seed moves signs, bumps and pillars.
pub fn generate_world(spec: &WorldSpec) -> Result<WorldModel, SimError> {
    let [width, height] = spec.extent;
    let bad = |msg: &str| Err(SimError::MalformedSpec(msg.to_string()));
    if !(width > 0.0 && height > 0.0) {
        return bad("extent must be positive");
    }
    if spec.corridors == 0 {
        return bad("at least one corridor is required");
    }
    if !(spec.spot_width > 0.0 && spec.spot_depth > 0.0 && spec.line_width > 0.0) {
        return bad("spot dimensions and line width must be positive");
    }
    if !(spec.speed_bump_interval > 0.0 && spec.guide_sign_interval > 0.0) {
        return bad("feature intervals must be positive");
    }
    let row_len = spec.spots_per_row as f64 * spec.spot_width;
    let x_start = (width - row_len) / 2.0;
    let clearance = spec.aisle_offset + spec.corridor_width / 2.0;
    if x_start < clearance {
        return bad("rows of spots do not fit between the aisles");
    }
    let band = height / spec.corridors as f64;
    let half_band = spec.corridor_width / 2.0 + spec.spot_depth + 0.5;
    if band / 2.0 < half_band {
        return bad("corridors and rows do not fit in the lot height");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, 0x3071D));
    let mut world = WorldModel::empty(Vector2::new(width, height));
    world.corner_radius = spec.corner_radius;
    let aisles = [spec.aisle_offset, width - spec.aisle_offset];
    world.aisle_x = aisles.to_vec();

    for c in 0..spec.corridors {
        let yc = band * (c as f64 + 0.5);
        world.corridor_y.push(yc);
        for side in [-1.0, 1.0] {
            let y_front = yc + side * spec.corridor_width / 2.0;
            let y_back = y_front + side * spec.spot_depth;
            let xs: Vec<f64> = (0..=spec.spots_per_row)
                .map(|k| x_start + k as f64 * spec.spot_width)
                .collect();
            for &x in &xs {
                world.parking_lines.push(Stripe {
                    a: Vector2::new(x, y_front),
                    b: Vector2::new(x, y_back),
                    width: spec.line_width,
                });
                world.corners.push(Vector2::new(x, y_front));
            }
            world.parking_lines.push(Stripe {
                a: Vector2::new(xs[0], y_back),
                b: Vector2::new(xs[xs.len() - 1], y_back),
                width: spec.line_width,
            });
            for pair in xs.windows(2) {
                let mut corners = [
                    Vector2::new(pair[0], y_front),
                    Vector2::new(pair[1], y_front),
                    Vector2::new(pair[1], y_back),
                    Vector2::new(pair[0], y_back),
                ];
                if side > 0.0 {
                    corners.swap(0, 1);
                    corners.swap(2, 3);
                }
                world.spots.push(SpotTruth { corners });
            }
            // pillars behind every fifth spot
            for k in (0..spec.spots_per_row).step_by(5) {
                if rng.gen_bool(0.7) {
                    let x = xs[k] + spec.spot_width * rng.gen_range(0.3..0.7);
                    let y = y_back + side * 0.8;
                    world.obstacles.push(rect(x - 0.3, y - 0.3, x + 0.3, y + 0.3));
                }
            }
        }

        // corridor paint between the aisles
        let span = (aisles[0] + spec.corridor_width / 2.0 + 1.0, aisles[1] - spec.corridor_width / 2.0 - 1.0);
        let mut x = span.0 + rng.gen_range(0.0..spec.speed_bump_interval / 2.0);
        while x < span.1 {
            world.speed_bumps.push(Stripe {
                a: Vector2::new(x, yc - spec.corridor_width / 2.0 + 0.8),
                b: Vector2::new(x, yc + spec.corridor_width / 2.0 - 0.8),
                width: spec.speed_bump_width,
            });
            x += spec.speed_bump_interval * rng.gen_range(0.8..1.2);
        }
        let mut x = span.0 + 2.0 + rng.gen_range(0.0..spec.guide_sign_interval / 2.0);
        while x < span.1 - 2.0 {
            let heading = if rng.gen_bool(0.5) { 0.0 } else { PI };
            let lateral = rng.gen_range(-1.5..1.5);
            world.guide_signs.push(arrow(Vector2::new(x, yc + lateral), heading, 3.0, 1.0));
            x += spec.guide_sign_interval * rng.gen_range(0.7..1.3);
        }
    }

    // aisle paint between the first and last corridor
    let (y_first, y_last) = (world.corridor_y[0], world.corridor_y[world.corridor_y.len() - 1]);
    for &xa in &aisles {
        let mut y = y_first - spec.corridor_width / 2.0;
        let top = y_last + spec.corridor_width / 2.0;
        while y <= top {
            let kind = rng.gen_range(0..3);
            let lateral = rng.gen_range(-1.5..1.5);
            match kind {
                0 => world.speed_bumps.push(Stripe {
                    a: Vector2::new(xa - spec.corridor_width / 2.0 + 0.8, y),
                    b: Vector2::new(xa + spec.corridor_width / 2.0 - 0.8, y),
                    width: spec.speed_bump_width,
                }),
                _ => {
                    let heading = if rng.gen_bool(0.5) { PI / 2.0 } else { -PI / 2.0 };
                    world.guide_signs.push(arrow(Vector2::new(xa + lateral, y), heading, 3.0, 1.0));
                }
            }
            y += rng.gen_range(3.5..6.0);
        }
    }

    let t = 0.3;
    world.walls = vec![
        rect(0.0, 0.0, width, t),
        rect(0.0, height - t, width, height),
        rect(0.0, 0.0, t, height),
        rect(width - t, 0.0, width, height),
    ];
    world.entrance = Pose6::planar((aisles[0] + aisles[1]) / 2.0, y_first, 0.0);
    if !world.within_extent() {
        return bad("generated geometry leaves the extent");
    }
    Ok(world)
}
