use clap::Parser;

fn main() -> anyhow::Result<()> {
    exceedmc::app::main(exceedmc::app::Cli::parse())
}
