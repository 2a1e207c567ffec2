//! Writes the built-in scenarios as `.scn` files into the given directory
//! (default `scenarios`).

use std::collections::BTreeMap;
use std::path::PathBuf;

use lifted_filter::scenario::builtin;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "scenarios".into()));
    std::fs::create_dir_all(&dir)?;
    for name in ["warehouse", "office"] {
        let sc = builtin(name, &BTreeMap::new())?;
        let path = dir.join(format!("{name}.scn"));
        std::fs::write(&path, sc.to_json())?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
