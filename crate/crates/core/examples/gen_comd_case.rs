//! Regenerates `fixtures/comd_case/{golden,faulty}.trace`.
//!
//! Usage: cargo run -p resil-core --example gen_comd_case [out_dir]

#[path = "../tests/support/comd_case.rs"]
mod comd_case;

fn main() -> std::io::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| {
            std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/comd_case")
        });
    std::fs::create_dir_all(&out)?;
    let (golden, faulty) = comd_case::generate();
    std::fs::write(out.join("golden.trace"), golden)?;
    std::fs::write(out.join("faulty.trace"), faulty)?;
    println!("wrote {}", out.display());
    Ok(())
}
