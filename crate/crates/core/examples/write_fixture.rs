//! Writes the planted demo corpus and its config into a directory.

fn main() {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "demo".into());
    let paths =
        lexpath_core::synthetic::write_fixture(std::path::Path::new(&dir)).expect("write fixture");
    println!("{}", paths.config.display());
}
