use super::PointCloud;
use crate::semantics::{LabeledPoint, SemanticClass};
use nalgebra::Vector3;
use rustc_hash::FxHashMap;

type CellKey = (u8, i32, i32, i32);

/// Voxel hash grid with one bucket list per (class, cell).
///
/// Nearest-neighbor queries search rings of cells outward from the query
/// cell and stop as soon as no unvisited ring can hold a closer point.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    cell: f64,
    points: Vec<LabeledPoint>,
    cells: FxHashMap<CellKey, Vec<u32>>,
    lo: [i32; 3],
    hi: [i32; 3],
}

impl SpatialIndex {
    /// # Panics
    /// If `cell` is not positive.
    pub fn build(cloud: &PointCloud, cell: f64) -> Self {
        assert!(cell > 0.0, "cell size must be positive");
        let mut cells: FxHashMap<CellKey, Vec<u32>> = FxHashMap::default();
        let mut lo = [i32::MAX; 3];
        let mut hi = [i32::MIN; 3];
        for (i, p) in cloud.points.iter().enumerate() {
            let c = cell_of(&p.position, cell);
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
            cells
                .entry((p.class.code(), c[0], c[1], c[2]))
                .or_default()
                .push(i as u32);
        }
        Self {
            cell,
            points: cloud.points.clone(),
            cells,
            lo,
            hi,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    pub fn points(&self) -> &[LabeledPoint] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &LabeledPoint {
        &self.points[i]
    }

    /// Exact nearest stored point of `class` within `radius`, as
    /// `(index, distance)`. Ties resolve to the lower index.
    pub fn nearest(&self, class: SemanticClass, q: &Vector3<f64>, radius: f64) -> Option<(usize, f64)> {
        self.nearest_where(q, radius, |c| c == class)
    }

    /// Nearest point of any class within `radius`.
    pub fn nearest_any(&self, q: &Vector3<f64>, radius: f64) -> Option<(usize, f64)> {
        self.nearest_where(q, radius, |_| true)
    }

    fn nearest_where(
        &self,
        q: &Vector3<f64>,
        radius: f64,
        accept: impl Fn(SemanticClass) -> bool,
    ) -> Option<(usize, f64)> {
        if self.points.is_empty() || !(radius >= 0.0) {
            return None;
        }
        let classes: Vec<u8> = SemanticClass::ALL
            .iter()
            .filter(|&&c| accept(c))
            .map(|c| c.code())
            .collect();
        let c = cell_of(q, self.cell);
        let face = (0..3)
            .map(|a| {
                let lo = f64::from(c[a]) * self.cell;
                (q[a] - lo).min(lo + self.cell - q[a]).max(0.0)
            })
            .fold(f64::INFINITY, f64::min);
        let rings = (radius / self.cell).ceil() as i32 + 1;
        let r2 = radius * radius;
        let mut best: Option<(f64, u32)> = None;

        for k in 0..=rings {
            let range = |a: usize| {
                let from = (c[a] - k).max(self.lo[a]);
                let to = (c[a] + k).min(self.hi[a]);
                from..=to
            };
            for x in range(0) {
                for y in range(1) {
                    for z in range(2) {
                        let ring = (x - c[0]).abs().max((y - c[1]).abs()).max((z - c[2]).abs());
                        if ring != k {
                            continue;
                        }
                        for &cls in &classes {
                            let Some(bucket) = self.cells.get(&(cls, x, y, z)) else {
                                continue;
                            };
                            for &i in bucket {
                                let d2 = (self.points[i as usize].position - q).norm_squared();
                                if d2 > r2 {
                                    continue;
                                }
                                let better = match best {
                                    None => true,
                                    Some((bd, bi)) => d2 < bd || (d2 == bd && i < bi),
                                };
                                if better {
                                    best = Some((d2, i));
                                }
                            }
                        }
                    }
                }
            }
            // anything in ring k+1 is at least this far away
            let bound = f64::from(k) * self.cell + face;
            if let Some((bd, _)) = best {
                if bd.sqrt() < bound {
                    break;
                }
            }
            if bound > radius {
                break;
            }
        }
        best.map(|(d2, i)| (i as usize, d2.sqrt()))
    }
}

fn cell_of(p: &Vector3<f64>, cell: f64) -> [i32; 3] {
    [
        (p.x / cell).floor() as i32,
        (p.y / cell).floor() as i32,
        (p.z / cell).floor() as i32,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registration::Frame;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(cloud: &PointCloud, class: SemanticClass, q: &Vector3<f64>, radius: f64) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in cloud.points.iter().enumerate() {
            if p.class != class {
                continue;
            }
            let d = (p.position - q).norm();
            if d <= radius && best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best
    }

    #[test]
    fn empty_index() {
        let idx = SpatialIndex::build(&PointCloud::new(Frame::World), 0.5);
        assert_eq!(idx.len(), 0);
        assert!(idx.nearest(SemanticClass::ParkingLine, &Vector3::zeros(), 10.0).is_none());
    }

    #[test]
    fn single_point() {
        let mut cloud = PointCloud::new(Frame::World);
        cloud.push(LabeledPoint::new(Vector3::new(1.0, 2.0, 0.0), SemanticClass::GuideSign));
        let idx = SpatialIndex::build(&cloud, 0.5);
        let (i, d) = idx
            .nearest(SemanticClass::GuideSign, &Vector3::new(1.3, 2.4, 0.0), 1.0)
            .unwrap();
        assert_eq!(i, 0);
        assert!((d - 0.5).abs() < 1e-12);
        assert!(idx.nearest(SemanticClass::ParkingLine, &Vector3::new(1.0, 2.0, 0.0), 1.0).is_none());
        assert!(idx.nearest(SemanticClass::GuideSign, &Vector3::new(3.0, 2.0, 0.0), 1.0).is_none());
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let classes = [SemanticClass::ParkingLine, SemanticClass::GuideSign, SemanticClass::SpeedBump];
        let mut cloud = PointCloud::new(Frame::World);
        for _ in 0..10_000 {
            cloud.push(LabeledPoint::new(
                Vector3::new(
                    rng.gen_range(-20.0..20.0),
                    rng.gen_range(-20.0..20.0),
                    rng.gen_range(-0.5..0.5),
                ),
                classes[rng.gen_range(0..3)],
            ));
        }
        let idx = SpatialIndex::build(&cloud, 0.5);
        for _ in 0..1000 {
            let q = Vector3::new(
                rng.gen_range(-22.0..22.0),
                rng.gen_range(-22.0..22.0),
                rng.gen_range(-1.0..1.0),
            );
            let class = classes[rng.gen_range(0..3)];
            let radius = rng.gen_range(0.05..1.5);
            assert_eq!(idx.nearest(class, &q, radius), brute(&cloud, class, &q, radius));
        }
    }
}
