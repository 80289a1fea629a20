use proptest::prelude::*;
use ulamchain::grid::{build_grid, read_roles, Bounds, BoxId, WetMask};

fn spherical_zone_area(lat1: f64, lat2: f64, dlon: f64) -> f64 {
    // area of a lat/lon rectangle as a fraction of the full zone between lat1 and lat2
    let r = 6371.0_f64;
    let zone = 2.0 * std::f64::consts::PI * r * r * (lat2.to_radians().sin() - lat1.to_radians().sin());
    zone * dlon / 360.0
}

#[test]
fn indian_ocean_box_areas() {
    let b = Bounds {
        lon_min: 20.0,
        lon_max: 120.0,
        lat_min: -58.0,
        lat_max: -14.0,
    };
    let g = build_grid(b, 0.25, &WetMask::all_wet()).unwrap();
    assert_eq!(g.n_states(), 400 * 176);
    let mut lo = f64::INFINITY;
    let mut hi = 0.0_f64;
    for &id in g.active_boxes() {
        let a = g.box_area_km2(id);
        let (_, lat) = g.box_corner(id);
        let oracle = spherical_zone_area(lat, lat + 0.25, 0.25);
        assert!((a - oracle).abs() < 1e-9 * oracle);
        lo = lo.min(a);
        hi = hi.max(a);
    }
    assert!((390.0..430.0).contains(&lo), "smallest box {lo} km²");
    assert!((730.0..760.0).contains(&hi), "largest box {hi} km²");
}

#[test]
fn dry_boxes_are_not_states() {
    let b = Bounds {
        lon_min: 0.0,
        lon_max: 1.0,
        lat_min: 0.0,
        lat_max: 1.0,
    };
    let dry = [BoxId::new(0, 0), BoxId::new(3, 1), BoxId::new(2, 3)];
    let g = build_grid(b, 0.25, &WetMask::with_dry(dry)).unwrap();
    assert_eq!(g.n_states(), 13);
    assert_eq!(g.point_to_state(0.1, 0.1), None);
    assert_eq!(g.point_to_state(0.3, 0.1), Some(0));
}

fn grid_strategy() -> impl Strategy<Value = (Bounds, f64, Vec<bool>)> {
    (-180i32..170, -80i32..70, 1usize..12, 1usize..12, prop::sample::select(vec![0.25, 0.5, 1.0]))
        .prop_flat_map(|(lon0, lat0, nx, ny, cell)| {
            let b = Bounds {
                lon_min: lon0 as f64,
                lon_max: lon0 as f64 + nx as f64 * cell,
                lat_min: lat0 as f64,
                lat_max: lat0 as f64 + ny as f64 * cell,
            };
            (Just(b), Just(cell), prop::collection::vec(prop::bool::weighted(0.8), nx * ny))
        })
        .prop_filter("at least one wet box", |(_, _, wet)| wet.iter().any(|&w| w))
}

fn mask(b: &Bounds, cell: f64, wet: &[bool]) -> WetMask {
    let nx = ((b.lon_max - b.lon_min) / cell).round() as usize;
    let mut m = WetMask::default();
    for (k, &w) in wet.iter().enumerate() {
        m.set(BoxId::new((k % nx) as u32, (k / nx) as u32), w);
    }
    m
}

proptest! {
    #[test]
    fn centres_map_back_to_their_box((b, cell, wet) in grid_strategy()) {
        let g = build_grid(b, cell, &mask(&b, cell, &wet)).unwrap();
        prop_assert_eq!(g.n_states(), wet.iter().filter(|&&w| w).count());
        for s in 0..g.n_states() {
            let (lon, lat) = g.state_center(s);
            prop_assert_eq!(g.point_to_state(lon, lat), Some(s));
            prop_assert_eq!(g.state_of_box(g.box_of_state(s)), Some(s));
        }
    }

    #[test]
    fn points_land_in_exactly_one_box(
        (b, cell, wet) in grid_strategy(),
        fx in 0.0f64..1.0,
        fy in 0.0f64..1.0,
    ) {
        let g = build_grid(b, cell, &mask(&b, cell, &wet)).unwrap();
        let lon = b.lon_min + fx * (b.lon_max - b.lon_min);
        let lat = b.lat_min + fy * (b.lat_max - b.lat_min);
        let id = g.box_at(lon, lat).expect("in-bounds point has a box");
        let (x0, y0) = g.box_corner(id);
        prop_assert!(lon >= x0 - 1e-9 && lon < x0 + cell + 1e-9);
        prop_assert!(lat >= y0 - 1e-9 && lat < y0 + cell + 1e-9);
        let covering: Vec<usize> = (0..g.n_states())
            .filter(|&s| {
                let (cx, cy) = g.box_corner(g.box_of_state(s));
                lon >= cx && lon < cx + cell && lat >= cy && lat < cy + cell
            })
            .collect();
        prop_assert!(covering.len() <= 1);
        if let Some(s) = g.point_to_state(lon, lat) {
            prop_assert_eq!(covering, vec![s]);
        }
    }

    #[test]
    fn loaded_roles_are_contained((b, cell, wet) in grid_strategy(), picks in prop::collection::vec(any::<prop::sample::Index>(), 1..6)) {
        let g = build_grid(b, cell, &mask(&b, cell, &wet)).unwrap();
        let n = g.n_states();
        let mut text = String::new();
        let mut sticky = std::collections::BTreeSet::new();
        for p in &picks {
            sticky.insert(p.index(n));
        }
        for (k, &s) in sticky.iter().enumerate() {
            let id = g.box_of_state(s);
            text.push_str(&format!("sticky: {},{},0.3\n", id.lon, id.lat));
            if k % 2 == 0 {
                text.push_str(&format!("debris: {},{},{}\n", id.lon, id.lat, k / 2 + 1));
            }
            text.push_str(&format!("source: {},{}\n", id.lon, id.lat));
        }
        let roles = read_roles(&g, text.as_bytes()).unwrap();
        for (s, _) in roles.debris() {
            prop_assert!(roles.sticky().contains_key(&s));
        }
        prop_assert!(roles.sticky().keys().all(|&s| s < n));
        prop_assert!(roles.sources().iter().all(|&s| s < n));
        prop_assert_eq!(roles.n_targets(), (sticky.len() + 1) / 2);
    }
}
