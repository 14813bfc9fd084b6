use clap::Parser;

fn main() -> anyhow::Result<()> {
    irs_crlb::cli::run(irs_crlb::cli::Cli::parse())
}
