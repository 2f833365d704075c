//! Seeded fixture tables used by examples, benches and tests.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{Cell, ColumnKind, Schema, Table};
use crate::util::rng_from;

fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

fn num(v: f64) -> Cell {
    Cell::Num(round4(v))
}

fn cat(s: &str) -> Cell {
    Cell::Cat(s.to_string())
}

/// Two strongly correlated numeric columns: `y = x + 0.3 * noise`,
/// so `corr(x, y) = 1 / sqrt(1.09) ≈ 0.958`.
pub fn correlated_pair(n: usize, seed: u64) -> Table {
    let mut rng = rng_from(seed, &["fixture", "correlated-pair"]);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let rows = (0..n)
        .map(|_| {
            let x: f64 = std.sample(&mut rng);
            let y = x + 0.3 * std.sample(&mut rng);
            vec![num(x), num(y)]
        })
        .collect();
    let schema = Schema::from_pairs(
        "pairs",
        &[("x", ColumnKind::Numerical), ("y", ColumnKind::Numerical)],
    )
    .expect("static schema");
    Table::new(schema, rows).expect("fixture is valid")
}

/// Widest numeric and categorical blocks in [`table_family`].
pub const FAMILY_MAX_NUM: usize = 4;
pub const FAMILY_MAX_CAT: usize = 2;

/// Six tables with distinct column structures and distinct dependence
/// patterns, `n` rows each.
pub fn table_family(n: usize, seed: u64) -> Vec<(String, Table)> {
    use ColumnKind::{Categorical as C, Numerical as N};
    let g = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out = Vec::new();

    let mut build = |name: &str, cols: &[(&str, ColumnKind)], row: &mut dyn FnMut(&mut rand_chacha::ChaCha8Rng) -> Vec<Cell>| {
        let mut rng = rng_from(seed, &["fixture-family", name]);
        let rows = (0..n).map(|_| row(&mut rng)).collect();
        let schema = Schema::from_pairs(name, cols).expect("static schema");
        out.push((name.to_string(), Table::new(schema, rows).expect("fixture is valid")));
    };

    build("pairs", &[("x", N), ("y", N)], &mut |r| {
        let x: f64 = g.sample(r);
        vec![num(x), num(x + 0.3 * g.sample(r))]
    });
    build("trio", &[("a", N), ("b", N), ("c", N), ("band", C)], &mut |r| {
        let a: f64 = r.random();
        let b: f64 = g.sample(r);
        let band = if b > 0.5 { "high" } else if b < -0.5 { "low" } else { "mid" };
        vec![num(a), num(b), num(1.0 - a + 0.05 * g.sample(r)), cat(band)]
    });
    build("shop", &[("price", N), ("store", C), ("qty", N)], &mut |r| {
        let k = r.random_range(0..4usize);
        let store = ["north", "south", "east", "west"][k];
        let price = 10.0 * (k as f64 + 1.0) + g.sample(r);
        let qty = (50.0 - 2.0 * price + 3.0 * g.sample(r)).max(0.0);
        vec![num(price), cat(store), num(qty)]
    });
    build("curve", &[("t", N), ("u", N), ("w", N)], &mut |r| {
        let t: f64 = r.random_range(-2.0..2.0);
        vec![num(t), num(t * t + 0.1 * g.sample(r)), num(g.sample(r))]
    });
    build("survey", &[("region", C), ("age", N), ("lang", C)], &mut |r| {
        let k = r.random_range(0..3usize);
        let region = ["r1", "r2", "r3"][k];
        let lang = if r.random::<f64>() < 0.9 { ["en", "fr", "de"][k] } else { ["en", "fr", "de"][(k + 1) % 3] };
        let age = 20.0 + 15.0 * k as f64 + 5.0 * g.sample(r);
        vec![cat(region), num(age), cat(lang)]
    });
    build("sensor", &[("s1", N), ("s2", N), ("s3", N), ("s4", N), ("state", C)], &mut |r| {
        let s1: f64 = g.sample(r);
        let s2 = -0.8 * s1 + 0.4 * g.sample(r);
        let s3 = (2.0 * s1).sin() + 0.1 * g.sample(r);
        let s4: f64 = g.sample(r);
        let state = if s1 + s4 > 0.0 { "on" } else { "off" };
        vec![num(s1), num(s2), num(s3), num(s4), cat(state)]
    });
    out
}

/// Pearson correlation of two equal-length samples.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, sx) = crate::util::mean_std(x);
    let (my, sy) = crate::util::mean_std(y);
    let cov = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / x.len() as f64;
    cov / (sx * sy)
}
