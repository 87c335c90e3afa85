//! Runs the full reproduction report on the built-in configuration and
//! prints the table. Same as `sopo reproduce-paper` without file output.
//!
//! ```bash
//! cargo run --release -p selfimaging-opo --example reproduce_paper
//! ```

use selfimaging_opo::app::load;
use selfimaging_opo::reproduce::reproduce;

fn main() -> selfimaging_opo::Result<()> {
    let config = load(None)?.config;
    let report = reproduce(&config)?;
    print!("{}", report.render_table());
    Ok(())
}
