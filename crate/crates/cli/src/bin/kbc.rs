use std::process::ExitCode;

use kbc_cli::kbc::KbcCli;

fn main() -> ExitCode {
    let cli: KbcCli = kbc_cli::parse_args();
    kbc_cli::init_logging();
    kbc_cli::finish(kbc_cli::kbc::run(cli))
}
