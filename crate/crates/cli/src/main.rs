use std::process::ExitCode;

fn main() -> ExitCode {
    if let Err(e) = feas_cli::init_logging() {
        eprintln!("error: {e}");
        return ExitCode::from(feas_cli::EXIT_USAGE as u8);
    }
    ExitCode::from(feas_cli::run_cli(std::env::args_os()) as u8)
}
