//! Serves a fixture directory over the source-API interface.
//!
//! ```text
//! cargo run --example mock_server -- --write-fixture demo
//! cargo run --example mock_server -- --fixture demo/server --port 8765
//! ```

use std::path::PathBuf;

use clap::Parser;
use clipforge_core::ingest::mock::{MockFixture, MockServer};
use clipforge_core::synth::fixture_corpus;

#[derive(Parser)]
struct Args {
    /// Directory holding `assets.jsonl` and `media/`.
    #[arg(long, conflicts_with = "write_fixture")]
    fixture: Option<PathBuf>,
    #[arg(long, default_value_t = 8765)]
    port: u16,
    /// Require this bearer token.
    #[arg(long)]
    token: Option<String>,
    #[arg(long, default_value_t = 100)]
    page_size: usize,
    /// Write the built-in 12-video corpus (server fixture, stub detector
    /// spec and hashtag list) into this directory and exit.
    #[arg(long, value_name = "DIR")]
    write_fixture: Option<PathBuf>,
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args = Args::parse();
    if let Some(dir) = args.write_fixture {
        fixture_corpus().write_to(&dir)?;
        println!("wrote {}", dir.display());
        return Ok(());
    }
    let Some(dir) = args.fixture else {
        return Err("either --fixture or --write-fixture is required".into());
    };
    let mut fixture = MockFixture::from_dir(&dir)?;
    fixture.token = args.token;
    fixture.page_size = args.page_size;
    let server = MockServer::bind(&format!("127.0.0.1:{}", args.port), fixture)?;
    println!("serving {} at {}", dir.display(), server.url());
    server.join();
    Ok(())
}
