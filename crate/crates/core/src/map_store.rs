//! Binary map files, voxel compression and size accounting.
//!
//! Layout, all little-endian:
//!
//! | offset | size | field                                   |
//! |-------:|-----:|-----------------------------------------|
//! | 0      | 4    | magic `AVPM`                            |
//! | 4      | 2    | version, u16 = 1                        |
//! | 6      | 8    | point count N, u64                      |
//! | 14     | 4    | spot count S, u32                       |
//! | 18     | 48   | entrance pose, 6 x f64 (rotvec, trans)  |
//! | 66     | 16   | configuration digest                    |
//! | 82     | 13 N | points: class u8, x y z as f32          |
//! | ...    | 34 S | spots: 4 corners as (x, y) f32, id u16  |

use crate::geometry::Pose6;
use crate::mapping::GlobalMap;
use crate::parking::{Occupancy, ParkingSpot};
use crate::registration::{Frame, PointCloud};
use crate::semantics::{LabeledPoint, SemanticClass};
use nalgebra::{Vector2, Vector3, Vector6};
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"AVPM";
pub const VERSION: u16 = 1;
pub const HEADER_BYTES: u64 = 82;
pub const POINT_BYTES: u64 = 13;
pub const SPOT_BYTES: u64 = 34;

#[derive(Debug, Error)]
pub enum MapStoreError {
    #[error("map file I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("map file format error at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },
}

/// First 16 bytes of the SHA-256 of `bytes`, used to tag a map with the
/// configuration that built it.
pub fn config_digest(bytes: &[u8]) -> [u8; 16] {
    let full = Sha256::digest(bytes);
    let mut out = [0; 16];
    out.copy_from_slice(&full[..16]);
    out
}

/// Exact file size of a map with `points` points and `spots` spots.
pub fn file_size(points: u64, spots: u64) -> u64 {
    HEADER_BYTES + POINT_BYTES * points + SPOT_BYTES * spots
}

pub fn encode(map: &GlobalMap) -> Vec<u8> {
    let n = map.cloud.len() as u64;
    let s = map.spots.len() as u64;
    let mut buf = Vec::with_capacity(file_size(n, s) as usize);
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&n.to_le_bytes());
    buf.extend_from_slice(&(s as u32).to_le_bytes());
    for v in map.entrance.to_vec6().iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&map.digest);
    for p in &map.cloud.points {
        buf.push(p.class.code());
        for c in p.position.iter() {
            buf.extend_from_slice(&(*c as f32).to_le_bytes());
        }
    }
    for spot in &map.spots {
        for c in &spot.corners {
            buf.extend_from_slice(&(c.x as f32).to_le_bytes());
            buf.extend_from_slice(&(c.y as f32).to_le_bytes());
        }
        buf.extend_from_slice(&spot.id.to_le_bytes());
    }
    buf
}

/// Write `map` to `path` through a temporary file in the same directory,
/// renamed into place once complete. Returns the bytes written.
pub fn save(map: &GlobalMap, path: &Path) -> Result<u64, MapStoreError> {
    let buf = encode(map);
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(&buf)?;
    tmp.as_file().sync_all()?;
    // temp files are created owner-only
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644))?;
    }
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(buf.len() as u64)
}

pub fn load(path: &Path) -> Result<GlobalMap, MapStoreError> {
    decode(&std::fs::read(path)?)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const K: usize>(&mut self, what: &str) -> Result<[u8; K], MapStoreError> {
        let end = self.pos + K;
        let bytes = self.buf.get(self.pos..end).ok_or_else(|| MapStoreError::Format {
            offset: self.pos as u64,
            reason: format!("truncated while reading {what}"),
        })?;
        self.pos = end;
        Ok(bytes.try_into().expect("slice has length K"))
    }

    fn f32(&mut self, what: &str) -> Result<f64, MapStoreError> {
        Ok(f64::from(f32::from_le_bytes(self.take(what)?)))
    }
}

pub fn decode(buf: &[u8]) -> Result<GlobalMap, MapStoreError> {
    let mut r = Reader { buf, pos: 0 };
    if r.take::<4>("magic")? != MAGIC {
        return Err(MapStoreError::Format {
            offset: 0,
            reason: "bad magic, not a map file".into(),
        });
    }
    let version = u16::from_le_bytes(r.take("version")?);
    if version != VERSION {
        return Err(MapStoreError::Format {
            offset: 4,
            reason: format!("unsupported version {version}"),
        });
    }
    let n = u64::from_le_bytes(r.take("point count")?);
    let s = u64::from(u32::from_le_bytes(r.take("spot count")?));
    let mut e = Vector6::zeros();
    for k in 0..6 {
        e[k] = f64::from_le_bytes(r.take("entrance pose")?);
    }
    let digest = r.take::<16>("digest")?;
    let expected = file_size(n, s);
    if (buf.len() as u64) < expected {
        return Err(MapStoreError::Format {
            offset: buf.len() as u64,
            reason: format!("truncated: header declares {expected} bytes"),
        });
    }

    let mut points = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let at = r.pos as u64;
        let [code] = r.take::<1>("point class")?;
        let class = SemanticClass::from_code(code).ok_or_else(|| MapStoreError::Format {
            offset: at,
            reason: format!("unknown class code {code}"),
        })?;
        let p = Vector3::new(r.f32("point")?, r.f32("point")?, r.f32("point")?);
        points.push(LabeledPoint::new(p, class));
    }
    let mut spots = Vec::with_capacity(s as usize);
    for _ in 0..s {
        let mut corners = [Vector2::zeros(); 4];
        for c in &mut corners {
            *c = Vector2::new(r.f32("spot")?, r.f32("spot")?);
        }
        let id = u16::from_le_bytes(r.take("spot id")?);
        spots.push(ParkingSpot {
            id,
            corners,
            occupied: Occupancy::Unknown,
        });
    }
    if r.pos != buf.len() {
        return Err(MapStoreError::Format {
            offset: r.pos as u64,
            reason: format!("{} trailing bytes", buf.len() - r.pos),
        });
    }
    let mut map = GlobalMap::new(
        PointCloud::from_points(points, Frame::World),
        spots,
        Pose6::from_vec6(&e),
    );
    map.digest = digest;
    Ok(map)
}

/// One centroid per (voxel, class) cell; `voxel == 0` returns the cloud as is.
pub fn compress(cloud: &PointCloud, voxel: f64) -> PointCloud {
    assert!(voxel >= 0.0, "voxel size must be nonnegative, got {voxel}");
    cloud.voxel_downsample(voxel)
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SizeReport {
    pub bytes: u64,
    pub human: String,
}

/// Payload size of `point_count` records of `per_point_bytes` each.
pub fn size_report(point_count: u64, per_point_bytes: u64) -> SizeReport {
    let bytes = point_count * per_point_bytes;
    SizeReport {
        bytes,
        human: human_bytes(bytes),
    }
}

/// Decimal units, one decimal place.
pub fn human_bytes(bytes: u64) -> String {
    const UNITS: [(f64, &str); 3] = [(1e9, "GB"), (1e6, "MB"), (1e3, "kB")];
    let b = bytes as f64;
    UNITS
        .iter()
        .find(|(scale, _)| b >= *scale)
        .map_or_else(|| format!("{bytes} B"), |(scale, unit)| format!("{:.1} {unit}", b / scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::GlobalMap;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_map(n: usize, s: u16, seed: u64) -> GlobalMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = (0..n)
            .map(|_| {
                let p = Vector3::new(rng.gen_range(-50.0..50.0), rng.gen_range(-30.0..30.0), 0.0);
                let class = SemanticClass::from_code(rng.gen_range(0..3) + 1).unwrap();
                LabeledPoint::new(p.map(|c: f64| f64::from(c as f32)), class)
            })
            .collect();
        let spots = (0..s)
            .map(|id| {
                let c = Vector2::new(f64::from(id) * 2.5, 0.0);
                ParkingSpot {
                    id,
                    corners: [c, c + Vector2::new(2.5, 0.0), c + Vector2::new(2.5, 5.3), c + Vector2::new(0.0, 5.3)]
                        .map(|v| v.map(|x| f64::from(x as f32))),
                    occupied: Occupancy::Unknown,
                }
            })
            .collect();
        let mut m = GlobalMap::new(PointCloud::from_points(points, Frame::World), spots, Pose6::planar(1.5, -2.0, 0.3));
        m.digest = config_digest(b"test");
        m
    }

    #[test]
    fn empty_map_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.avpm");
        let m = GlobalMap::new(PointCloud::new(Frame::World), vec![], Pose6::identity());
        assert_eq!(save(&m, &path).unwrap(), HEADER_BYTES);
        assert_eq!(std::fs::metadata(&path).unwrap().len(), HEADER_BYTES);
        assert_eq!(load(&path).unwrap(), m);
    }

    #[test]
    fn size_is_format_arithmetic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.avpm");
        let m = random_map(1234, 7, 1);
        let written = save(&m, &path).unwrap();
        assert_eq!(written, 82 + 13 * 1234 + 34 * 7);
        assert_eq!(std::fs::metadata(&path).unwrap().len(), written);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.avpm");
        let m = random_map(5000, 12, 2);
        save(&m, &path).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(back, m);
        for (a, b) in back.cloud.points.iter().zip(&m.cloud.points) {
            for k in 0..3 {
                assert_eq!(a.position[k].to_bits(), b.position[k].to_bits());
            }
        }
        assert_eq!(back.index.len(), m.cloud.len());
        // rewriting the loaded map gives the same bytes
        assert_eq!(encode(&back), encode(&m));
    }

    #[test]
    fn save_replaces_existing_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.avpm");
        save(&random_map(100, 0, 3), &path).unwrap();
        let m = random_map(10, 1, 4);
        save(&m, &path).unwrap();
        assert_eq!(load(&path).unwrap(), m);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    fn format_offset(buf: &[u8]) -> u64 {
        match decode(buf) {
            Err(MapStoreError::Format { offset, .. }) => offset,
            other => panic!("expected a format error, got {other:?}"),
        }
    }

    #[test]
    fn corrupt_files_name_the_offset() {
        let good = encode(&random_map(20, 2, 5));
        let mut bad = good.clone();
        bad[1] = b'X';
        assert_eq!(format_offset(&bad), 0);
        let mut bad = good.clone();
        bad[4] = 9;
        assert_eq!(format_offset(&bad), 4);
        assert_eq!(format_offset(&good[..40]), 18 + 16);
        assert_eq!(format_offset(&good[..good.len() - 3]), good.len() as u64 - 3);
        let mut bad = good.clone();
        bad[82 + 13 * 3] = 200;
        assert_eq!(format_offset(&bad), 82 + 13 * 3);
        let mut long = good.clone();
        long.push(0);
        assert_eq!(format_offset(&long), good.len() as u64);
    }

    #[test]
    fn compress_zero_voxel_is_identity() {
        let m = random_map(300, 0, 6);
        assert_eq!(compress(&m.cloud, 0.0), m.cloud);
    }

    #[test]
    fn compress_grid_quarters_a_2d_layout() {
        // 0.05 m lattice offset by 0.025 so no point sits on a cell boundary
        let pts = (0..100)
            .flat_map(|i| (0..100).map(move |j| (i, j)))
            .map(|(i, j)| {
                LabeledPoint::new(
                    Vector3::new(0.025 + 0.05 * f64::from(i), 0.025 + 0.05 * f64::from(j), 0.0),
                    SemanticClass::ParkingLine,
                )
            })
            .collect();
        let c = PointCloud::from_points(pts, Frame::World);
        // 5 m square, 0.1 m cells: 50 x 50 occupied cells
        assert_eq!(compress(&c, 0.1).len(), 2500);
        assert_eq!(compress(&c, 0.1).len() * 4, c.len());
    }

    #[test]
    fn compress_is_monotone_and_idempotent() {
        let m = random_map(4000, 0, 7);
        let mut last = m.cloud.len();
        for v in [0.05, 0.1, 0.2, 0.5, 1.0, 2.0] {
            let c = compress(&m.cloud, v);
            assert!(c.len() <= last, "voxel {v}");
            last = c.len();
            assert_eq!(compress(&c, v), c, "voxel {v}");
        }
    }

    #[test]
    fn size_report_reproduces_table_numbers() {
        let a = size_report(369_356, 12);
        assert_eq!(a.bytes, 4_432_272);
        assert_eq!(a.human, "4.4 MB");
        let b = size_report(647_656, 52);
        assert_eq!(b.bytes, 33_678_112);
        assert_eq!(b.human, "33.7 MB");
        assert_eq!(size_report(0, 13).bytes, 0);
        assert_eq!(size_report(0, 13).human, "0 B");
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        assert_eq!(config_digest(b"abc"), config_digest(b"abc"));
        assert_ne!(config_digest(b"abc"), config_digest(b"abd"));
        // SHA-256("abc") begins ba7816bf 8f01cfea
        assert_eq!(&config_digest(b"abc")[..8], &[0xba, 0x78, 0x16, 0xbf, 0x8f, 0x01, 0xcf, 0xea]);
    }
}
