//! Write the seeded fixture family as CSV files.
//!
//! `cargo run -p tabdetect-core --example make_fixtures -- <dir> [rows] [seed]`

use std::path::PathBuf;

use tabdetect::fixtures::table_family;
use tabdetect::ingest::save_csv;

fn main() -> tabdetect::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "fixtures".into()));
    let rows = args.next().map_or(200, |s| s.parse().expect("rows is an integer"));
    let seed = args.next().map_or(7, |s| s.parse().expect("seed is an integer"));
    std::fs::create_dir_all(&dir).map_err(|e| tabdetect::Error::Format(e.to_string()))?;
    for (id, table) in table_family(rows, seed) {
        let path = dir.join(format!("{id}.csv"));
        save_csv(&table, &path)?;
        println!("{}", path.display());
    }
    Ok(())
}
