//! Regenerates the synthetic `data/mini-fire` fixture.
//!
//! Usage: cargo run -p shelter-access --example make_mini_fire -- [OUT_DIR]

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use shelter_access::geometry::{distance_m, GeoPoint, LocalFrame};

const COLS: usize = 13;
const ROWS: usize = 11;
const SPACING_M: f64 = 1000.0;

fn main() -> std::io::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("data/mini-fire"));
    fs::create_dir_all(out.join("scenarios"))?;
    let frame = LocalFrame::new(GeoPoint { lon: -118.30, lat: 34.10 });
    let mut rng = ChaCha8Rng::seed_from_u64(20250112);
    let at = |x: f64, y: f64| frame.unproject([x, y]);
    let fmt = |p: GeoPoint| format!("{:.6} {:.6}", p.lon, p.lat);
    let mountain = |x: f64, y: f64| x <= 4500.0 && y >= 6500.0;

    // road grid with a sparse, slow mountain corner
    let node_id = |c: usize, r: usize| (r * COLS + c + 1) as i64;
    let node_xy = |c: usize, r: usize| (c as f64 * SPACING_M, r as f64 * SPACING_M);
    let mut roads = String::from("edge_id,u,v,length_m,highway,maxspeed_kph,oneway,wkt_geometry\n");
    let mut n_edges = 0;
    for r in 0..ROWS {
        for c in 0..COLS {
            for (dc, dr) in [(1, 0), (0, 1)] {
                let (c2, r2) = (c + dc, r + dr);
                if c2 >= COLS || r2 >= ROWS {
                    continue;
                }
                let (x1, y1) = node_xy(c, r);
                let (x2, y2) = node_xy(c2, r2);
                let (mx, my) = ((x1 + x2) / 2.0, (y1 + y2) / 2.0);
                if mountain(mx, my) && rng.gen_bool(0.45) {
                    continue;
                }
                let (highway, speed) = if mountain(mx, my) {
                    ("service", "15 mph")
                } else if dr == 0 && r == 5 {
                    ("motorway", "65 mph")
                } else if dc == 0 && (c == 3 || c == 9) {
                    ("secondary", "35 mph")
                } else if rng.gen_bool(0.5) {
                    ("residential", "40")
                } else {
                    ("tertiary", "50")
                };
                let speed = if highway != "motorway" && rng.gen_bool(0.3) { "" } else { speed };
                let oneway = if highway == "residential" && rng.gen_bool(0.05) { "yes" } else { "" };
                let (a, b) = (at(x1, y1), at(x2, y2));
                // a slight bend so geometry is not just the endpoints
                let bend = at(mx + if dr == 1 { 40.0 } else { 0.0 }, my + if dc == 1 { 40.0 } else { 0.0 });
                let length = distance_m(a, bend) + distance_m(bend, b);
                n_edges += 1;
                writeln!(
                    roads,
                    "e{n_edges},{},{},{length:.1},{highway},{speed},{oneway},\"LINESTRING ({}, {}, {})\"",
                    node_id(c, r),
                    node_id(c2, r2),
                    fmt(a),
                    fmt(bend),
                    fmt(b)
                )
                .unwrap();
            }
        }
    }
    fs::write(out.join("roads.csv"), roads)?;

    // population cells at 0.8 km spacing
    let mut grid = String::from("cell_id,lon,lat,population\n");
    let mut n_cells = 0;
    for j in 0..13 {
        for i in 0..15 {
            let (x, y) = (200.0 + 800.0 * i as f64, 200.0 + 800.0 * j as f64);
            let pop = if mountain(x, y) {
                if rng.gen_bool(0.5) {
                    0.0
                } else {
                    rng.gen_range(1.0..25.0f64).round()
                }
            } else {
                rng.gen_range(20.0..320.0f64).round()
            };
            let p = at(x, y);
            n_cells += 1;
            writeln!(grid, "g{:03},{:.6},{:.6},{pop}", n_cells, p.lon, p.lat).unwrap();
        }
    }
    fs::write(out.join("population.csv"), grid)?;

    // two fires: each with an order zone, a warning ring around it and a perimeter
    let ring = |pts: &[(f64, f64)]| -> Value {
        let mut v: Vec<Value> = pts
            .iter()
            .map(|&(x, y)| {
                let p = at(x, y);
                json!([(p.lon * 1e6).round() / 1e6, (p.lat * 1e6).round() / 1e6])
            })
            .collect();
        v.push(v[0].clone());
        Value::Array(v)
    };
    let rect = |x0: f64, y0: f64, x1: f64, y1: f64| vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1)];
    let polygon = |layer: &str, name: &str, rings: Vec<Value>| {
        json!({
            "type": "Feature",
            "properties": { "layer": layer, "name": name },
            "geometry": { "type": "Polygon", "coordinates": rings }
        })
    };
    let west_order = vec![(1500.0, 5200.0), (4300.0, 5000.0), (4600.0, 7400.0), (3000.0, 8200.0), (1300.0, 7300.0)];
    let east_order = vec![(8200.0, 2300.0), (10600.0, 2100.0), (10900.0, 4700.0), (8400.0, 4900.0)];
    let zones = json!({
        "type": "FeatureCollection",
        "features": [
            polygon("evac_order", "west", vec![ring(&west_order)]),
            polygon("evac_warning", "west", vec![ring(&rect(500.0, 4300.0, 5600.0, 9200.0)), ring(&west_order)]),
            polygon("evac_order", "east", vec![ring(&east_order)]),
            polygon("evac_warning", "east", vec![ring(&rect(7300.0, 1300.0, 11700.0, 5700.0)), ring(&east_order)]),
        ]
    });
    fs::write(out.join("zones.geojson"), serde_json::to_string_pretty(&zones)? + "\n")?;
    let perimeters = json!({
        "type": "FeatureCollection",
        "features": [
            polygon("fire_perimeter", "west fire", vec![ring(&[(2100.0, 6300.0), (3400.0, 6100.0), (3700.0, 7300.0), (2300.0, 7600.0)])]),
            polygon("fire_perimeter", "east fire", vec![ring(&rect(9200.0, 3200.0, 10300.0, 4300.0))]),
        ]
    });
    fs::write(out.join("perimeters.geojson"), serde_json::to_string_pretty(&perimeters)? + "\n")?;

    // eight open shelters away from the fires, two sized from floor area
    let open = [
        ("s1", "Westside Recreation Center", 6200.0, 6400.0, "180", "", "", 40),
        ("s2", "Valley High School Gym", 600.0, 2200.0, "", "15000", "sqft", 0),
        ("s3", "Harbor Community Hall", 5400.0, 1200.0, "140", "", "", 25),
        ("s4", "Foothill Church", 11800.0, 8800.0, "90", "", "", 0),
        ("s5", "Civic Auditorium", 7000.0, 9600.0, "", "1200", "sqm", 10),
        ("s6", "North Library", 3800.0, 9900.0, "60", "", "", 0),
        ("s7", "Eastgate Senior Center", 11900.0, 600.0, "120", "", "", 30),
        ("s8", "Midtown Expo Hall", 6600.0, 3600.0, "260", "", "", 60),
    ];
    let header = "id,name,lon,lat,capacity,floor_area,area_unit,status,occupied\n";
    let mut shelters = String::from(header);
    for (id, name, x, y, cap, area, unit, occ) in open {
        let p = at(x, y);
        writeln!(shelters, "{id},{name},{:.6},{:.6},{cap},{area},{unit},open,{occ}", p.lon, p.lat).unwrap();
    }
    fs::write(out.join("shelters.csv"), shelters)?;

    let mut candidates = String::from(header);
    let mut total = 0;
    for k in 1..=30 {
        let (x, y) = (rng.gen_range(0.0..12_000.0), rng.gen_range(0.0..10_000.0));
        let p = at(x, y);
        if k % 5 == 0 {
            let sqft: f64 = rng.gen_range(20_000.0..120_000.0f64).round();
            total += (sqft * 0.7 / 100.0) as u32;
            writeln!(candidates, "n{k:02},Candidate site {k},{:.6},{:.6},,{sqft},sqft,candidate,0", p.lon, p.lat)
                .unwrap();
        } else {
            let cap: u32 = rng.gen_range(150..900);
            total += cap;
            writeln!(candidates, "n{k:02},Candidate site {k},{:.6},{:.6},{cap},,,candidate,0", p.lon, p.lat).unwrap();
        }
    }
    fs::write(out.join("candidates.csv"), candidates)?;

    let common = "[inputs]\nroads = \"../roads.csv\"\ngrid = \"../population.csv\"\nshelters = \"../shelters.csv\"\nzones = \"../zones.geojson\"\nperimeters = \"../perimeters.geojson\"\ncandidates = \"../candidates.csv\"\n\n[decay]\nsigma = 30.0\nt0 = 120.0\n";
    let congestion = "\n[congestion]\nbuffer_m = 5000.0\nspeed_cap_kph = 10.0\n";
    let placement = "\n[placement]\nk = 2.0\nring_step_m = 1609.34\n";
    let scenarios = [
        ("case1", String::new()),
        ("case2", String::new()),
        ("case3", congestion.to_string()),
        ("case4_capacity", format!("{congestion}{placement}")),
        ("case4_distance", format!("{congestion}{placement}\n[classification]\nreference = \"case4_capacity.toml\"\n")),
    ];
    for (case, extra) in scenarios {
        fs::write(out.join("scenarios").join(format!("{case}.toml")), format!("case = \"{case}\"\n\n{common}{extra}"))?;
    }
    eprintln!("{n_edges} road rows, {n_cells} cells, candidate capacity {total}");
    Ok(())
}
