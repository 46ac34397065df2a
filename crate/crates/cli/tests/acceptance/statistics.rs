use std::collections::BTreeMap;

use chrono::{TimeZone, Utc};
use emomap_core::aggregation::{grid_aggregate, GridAggregate};
use emomap_core::model::{GeoPoint, PictureSource, TagEvent};
use emomap_core::stats::summarize;
use emomap_core::{Placement, TagMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{check, Outcome};

fn random_placement(rng: &mut ChaCha8Rng) -> Placement {
    loop {
        let p = Placement::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if (0.03..1.0).contains(&p.radius()) {
            return p;
        }
    }
}

pub fn circular() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    let map = TagMap::plutchik();
    let mut worst: f64 = 0.0;
    for set in 0..1000 {
        let n = rng.gen_range(1..60);
        // some sets are concentrated, some spread out
        let spread = if set % 3 == 0 { 20.0 } else { 360.0 };
        let centre = rng.gen_range(0.0..360.0);
        let placements: Vec<Placement> = (0..n)
            .map(|_| {
                if spread < 360.0 {
                    Placement::from_polar(centre + rng.gen_range(-spread..spread), rng.gen_range(0.05..1.0))
                } else {
                    random_placement(&mut rng)
                }
            })
            .collect();
        let classified: Vec<_> = placements.iter().map(|p| map.classify(*p, None).unwrap()).collect();
        let s = summarize(&classified, &map).map_err(|e| e.to_string())?;

        // the direct computation: mean of the normalized coordinate vectors
        let (mut sx, mut sy) = (0.0, 0.0);
        for p in &placements {
            let r = p.x.hypot(p.y);
            sx += p.x / r;
            sy += p.y / r;
        }
        let (mx, my) = (sx / n as f64, sy / n as f64);
        let rho = mx.hypot(my);
        let err = (s.resultant_length - rho).abs();
        worst = worst.max(err);
        check!(err <= 1e-12, "set {set}: rho {} vs direct {rho}", s.resultant_length);
        check!(s.n == n && s.sector_histogram.iter().sum::<usize>() == n, "set {set}: counts");
        if let Some(m) = s.mean_angle_deg {
            let t = m.to_radians();
            let (ex, ey) = ((s.resultant_length * t.sin() - mx).abs(), (s.resultant_length * t.cos() - my).abs());
            worst = worst.max(ex).max(ey);
            check!(ex <= 1e-12 && ey <= 1e-12, "set {set}: mean vector off by ({ex:e}, {ey:e})");
        } else {
            check!(rho < 1e-9, "set {set}: direction dropped at rho {rho}");
        }
    }

    let three: Vec<_> = [(10.0, 0.2), (20.0, 0.5), (30.0, 0.8)]
        .iter()
        .map(|&(a, r)| map.classify(Placement::from_polar(a, r), None).unwrap())
        .collect();
    let s = summarize(&three, &map).map_err(|e| e.to_string())?;
    let expected = (1.0 + 2.0 * 10f64.to_radians().cos()) / 3.0;
    check!(
        (s.resultant_length - expected).abs() <= 1e-6,
        "10/20/30 rho {} vs {expected}",
        s.resultant_length
    );
    Ok(format!(
        "1000 sets within {worst:.1e}; 10/20/30 rho = {:.6}",
        s.resultant_length
    ))
}

fn event(i: usize, lat: f64, lon: f64, located: bool, map: &TagMap, rng: &mut ChaCha8Rng) -> TagEvent {
    let placement = random_placement(rng);
    TagEvent {
        event_id: format!("e{i}"),
        experiment_id: "grid".into(),
        participant_id: format!("p{}", i % 17),
        picture_id: format!("pic{i}"),
        placement,
        classification: map.classify(placement, None).unwrap(),
        tagged_at: Utc.timestamp_opt(1_800_000_000 + i as i64, 0).unwrap(),
        client_time: None,
        location: located.then_some(GeoPoint { lat, lon }),
        picture_source: PictureSource::Participant,
    }
}

fn events(rng: &mut ChaCha8Rng, map: &TagMap) -> Vec<TagEvent> {
    (0..5000)
        .map(|i| {
            let (lat, lon) = match i % 4 {
                // anywhere
                0 => (rng.gen_range(-90.0..=90.0), rng.gen_range(-180.0..=180.0)),
                // a city, so cells hold several events
                1 => (52.2297 + rng.gen_range(-0.05..0.05), 21.0122 + rng.gen_range(-0.05..0.05)),
                // exactly on grid lines
                2 => (
                    rng.gen_range(-9000..9000) as f64 * 0.005,
                    rng.gen_range(-18000..18000) as f64 * 0.005,
                ),
                _ => (-33.8688 + rng.gen_range(-0.01..0.01), 151.2093 + rng.gen_range(-0.01..0.01)),
            };
            event(i, lat, lon, i % 11 != 0, map, rng)
        })
        .collect()
}

fn covers(g: &GridAggregate, e: &TagEvent) -> bool {
    let loc = e.location.unwrap();
    let d = g.cell_size_deg;
    let (i, j) = ((loc.lat / d).floor() as i64, (loc.lon / d).floor() as i64);
    g.cells.iter().any(|c| (c.cell_lat_index, c.cell_lon_index) == (i, j))
}

pub fn grid() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0004);
    let map = TagMap::plutchik();
    let evs = events(&mut rng, &map);
    let located = evs.iter().filter(|e| e.location.is_some()).count();

    let mut total_cells = 0;
    for delta in [0.01, 0.005] {
        let coarse = grid_aggregate(&evs, delta, &map).map_err(|e| e.to_string())?;
        let fine = grid_aggregate(&evs, delta / 2.0, &map).map_err(|e| e.to_string())?;
        for g in [&coarse, &fine] {
            let sum: usize = g.cells.iter().map(|c| c.summary.n).sum();
            check!(sum == located, "cell size {}: cells hold {sum} of {located}", g.cell_size_deg);
            check!(g.located == located && g.skipped == evs.len() - located, "located/skipped counts");
            check!(g.cells.iter().all(|c| c.summary.n > 0), "empty cell reported");
            check!(evs.iter().filter(|e| e.location.is_some()).all(|e| covers(g, e)), "event outside its cell");
        }
        // every fine cell lies inside one coarse cell and the counts add up
        let mut children: BTreeMap<(i64, i64), (usize, Vec<usize>)> = BTreeMap::new();
        for c in &fine.cells {
            let parent = (c.cell_lat_index.div_euclid(2), c.cell_lon_index.div_euclid(2));
            let entry = children.entry(parent).or_insert((0, vec![0; map.sector_count()]));
            entry.0 += c.summary.n;
            for (a, b) in entry.1.iter_mut().zip(&c.summary.sector_histogram) {
                *a += b;
            }
        }
        check!(children.len() == coarse.cells.len(), "cell size {delta}: fine cells map onto {} parents, coarse grid has {}", children.len(), coarse.cells.len());
        for c in &coarse.cells {
            let (n, hist) = &children[&(c.cell_lat_index, c.cell_lon_index)];
            check!(*n == c.summary.n && *hist == c.summary.sector_histogram, "cell ({}, {}) at {delta} differs from its halves", c.cell_lat_index, c.cell_lon_index);
        }
        total_cells += coarse.cells.len() + fine.cells.len();
    }
    Ok(format!("{located} located events, {total_cells} cells checked at 0.01, 0.005 and 0.0025"))
}
