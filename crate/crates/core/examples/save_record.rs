//! Writes a complete run record for the 3x3 task and reads a mask back.

use std::path::PathBuf;

use holoshift::cli::cmd_run;
use holoshift::config::RunConfig;
use holoshift::io::load_mask;
use holoshift::transient::TransientOrder;

fn main() -> holoshift::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("holoshift_record"));
    let mut cfg = RunConfig::preset("minimal_3x3", 0)?;
    cfg.output = out.clone();
    cfg.refresh.order = TransientOrder::Exact;
    cfg.pgm = true;
    cmd_run(&cfg, &mut std::io::stdout())?;

    let mask = load_mask(&out.join("wpgs").join("masks").join("frame_00010.bin"))?;
    println!("record in {}; final mask {:?} pixels", out.display(), mask.dims());
    Ok(())
}
