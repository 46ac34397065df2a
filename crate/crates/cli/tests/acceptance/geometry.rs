use std::time::Instant;

use emomap_core::wheel::{GeometryError, TagMapDoc, CENTER_DEAD_ZONE};
use emomap_core::{Placement, TagMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{check, Outcome};

const EXCLUSION: f64 = 1e-12;

fn skewed_map() -> TagMap {
    let labels = (0..5)
        .map(|s| (0..4).map(|b| format!("s{s}b{b}")).collect())
        .collect();
    TagMap::new(TagMapDoc {
        id: "skewed".into(),
        sector_count: 5,
        sector_offset_deg: 17.0,
        band_boundaries: vec![0.25, 0.5, 0.9],
        labels,
        locale_labels: Default::default(),
    })
    .unwrap()
}

/// Unit vector of a clockwise-from-top bearing.
fn ray(deg: f64) -> (f64, f64) {
    let t = deg.to_radians();
    (t.sin(), t.cos())
}

/// Positive when `p` lies counterclockwise of the ray `d`.
fn cross(d: (f64, f64), p: (f64, f64)) -> f64 {
    d.0 * p.1 - d.1 * p.0
}

enum Verdict {
    Region(usize, usize),
    Center,
    TooClose,
}

/// Membership tests against every wedge and ring, with no angle arithmetic.
fn membership(map: &TagMap, p: (f64, f64)) -> Verdict {
    let r2 = p.0 * p.0 + p.1 * p.1;
    let dz = CENTER_DEAD_ZONE;
    if (r2.sqrt() - dz).abs() < EXCLUSION {
        return Verdict::TooClose;
    }
    if r2 < dz * dz {
        return Verdict::Center;
    }
    let n = map.sector_count();
    let width = 360.0 / n as f64;
    let mut sectors = Vec::new();
    for s in 0..n {
        let centre = map.sector_offset_deg() + s as f64 * width;
        let lo = ray(centre - width / 2.0);
        let hi = ray(centre + width / 2.0);
        let (a, b) = (cross(lo, p), cross(hi, p));
        if a.abs() < EXCLUSION || b.abs() < EXCLUSION {
            return Verdict::TooClose;
        }
        // clockwise of the leading edge and counterclockwise of the trailing one
        let inside = if width < 180.0 { a < 0.0 && b > 0.0 } else { a < 0.0 || b > 0.0 };
        if inside {
            sectors.push(s);
        }
    }
    assert_eq!(sectors.len(), 1, "wedges must partition the plane at {p:?}");
    let mut band = 0;
    for b in map.band_boundaries() {
        if (r2.sqrt() - b).abs() < EXCLUSION {
            return Verdict::TooClose;
        }
        if r2 > b * b {
            band += 1;
        }
    }
    Verdict::Region(sectors[0], band)
}

pub fn oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let mut compared = 0;
    let mut excluded = 0;
    for map in [TagMap::plutchik(), skewed_map()] {
        let mut drawn = 0;
        while drawn < 10_000 {
            let p: (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            if p.0 * p.0 + p.1 * p.1 >= 1.0 {
                continue;
            }
            drawn += 1;
            let got = map.classify(Placement::new(p.0, p.1), None);
            match (membership(&map, p), got) {
                (Verdict::TooClose, _) => excluded += 1,
                (Verdict::Center, Err(GeometryError::CenterAmbiguous)) => compared += 1,
                (Verdict::Region(s, b), Ok(c)) => {
                    check!(
                        (c.sector_index, c.band_index) == (s, b),
                        "{} at {p:?}: classify gave ({}, {}), oracle ({s}, {b})",
                        map.id(),
                        c.sector_index,
                        c.band_index
                    );
                    check!(c.label == map.labels(None)[s][b], "label mismatch at {p:?}");
                    compared += 1;
                }
                (_, got) => return Err(format!("{} at {p:?}: classify gave {got:?}", map.id())),
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    check!(secs < 5.0, "took {secs:.2}s");
    Ok(format!("{compared} placements agree over two maps, {excluded} near boundaries excluded"))
}

/// A point strictly inside sector `s`, band `b`.
fn interior(rng: &mut ChaCha8Rng, map: &TagMap) -> (usize, f64, f64) {
    let n = map.sector_count();
    let width = map.sector_width();
    let s = rng.gen_range(0..n);
    let angle = map.sector_offset_deg() + s as f64 * width + width * rng.gen_range(-0.49..0.49);
    let mut edges = vec![CENTER_DEAD_ZONE];
    edges.extend_from_slice(map.band_boundaries());
    edges.push(1.0);
    let b = rng.gen_range(0..edges.len() - 1);
    let r = edges[b] + (edges[b + 1] - edges[b]) * rng.gen_range(0.01..0.99);
    (s, angle, r)
}

pub fn invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
    let maps = [TagMap::plutchik(), skewed_map()];
    const CASES: usize = 1000;

    // turning a placement by whole sectors moves its sector and keeps its band
    for i in 0..CASES {
        let map = &maps[i % 2];
        let (s, angle, r) = interior(&mut rng, map);
        let base = map.classify(Placement::from_polar(angle, r), None).unwrap();
        let k = rng.gen_range(-12i32..12);
        let turned = map
            .classify(Placement::from_polar(angle + k as f64 * map.sector_width(), r), None)
            .unwrap();
        let n = map.sector_count() as i32;
        check!(base.sector_index == s, "interior point left its sector");
        check!(
            turned.sector_index as i32 == (s as i32 + k).rem_euclid(n) && turned.band_index == base.band_index,
            "rotation by {k} sectors of ({angle}, {r}) on {}",
            map.id()
        );
        // rotating the map and the point together changes nothing
        let delta = rng.gen_range(-720.0..720.0);
        let mut doc = map.doc().clone();
        doc.sector_offset_deg = (doc.sector_offset_deg + delta).rem_euclid(360.0);
        let spun = TagMap::new(doc).unwrap();
        let c = spun.classify(Placement::from_polar(angle + delta, r), None).unwrap();
        check!(
            (c.sector_index, c.band_index) == (base.sector_index, base.band_index),
            "joint rotation by {delta} of ({angle}, {r})"
        );
    }

    // the antipode of an interior point sits in the opposite sector
    let wheel = &maps[0];
    for _ in 0..CASES {
        let (s, angle, r) = interior(&mut rng, wheel);
        let p = Placement::from_polar(angle, r);
        let c = wheel.classify(Placement::new(-p.x, -p.y), None).unwrap();
        check!(
            Some(c.sector_index) == wheel.opposite_sector(s),
            "antipode of ({angle}, {r}) in sector {}",
            c.sector_index
        );
    }
    check!(maps[1].opposite_sector(0).is_none(), "odd maps have no opposite sector");

    // moving outward never moves to an inner band
    for i in 0..CASES {
        let map = &maps[i % 2];
        let angle = rng.gen_range(0.0..360.0);
        let mut radii = [rng.gen_range(0.02..1.0), rng.gen_range(0.02..1.0)];
        radii.sort_by(f64::total_cmp);
        let inner = map.classify(Placement::from_polar(angle, radii[0]), None).unwrap();
        let outer = map.classify(Placement::from_polar(angle, radii[1]), None).unwrap();
        check!(
            inner.band_index <= outer.band_index,
            "radii {radii:?} at {angle} on {}",
            map.id()
        );
    }
    Ok(format!("{CASES} cases each of rotation, opposite sector and band monotonicity"))
}
