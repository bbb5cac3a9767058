use std::io;
use std::process::ExitCode;

fn main() -> ExitCode {
    let code = mutex_sim::cli::run_cli(std::env::args_os(), &mut io::stdout().lock(), &mut io::stderr());
    ExitCode::from(u8::try_from(code).unwrap_or(1))
}
