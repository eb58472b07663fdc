use std::process::ExitCode;

use kbc_cli::malt::MaltCli;

fn main() -> ExitCode {
    let cli: MaltCli = kbc_cli::parse_args();
    kbc_cli::init_logging();
    kbc_cli::finish(kbc_cli::malt::run(cli))
}
