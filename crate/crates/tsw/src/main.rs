use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(tsw::cli::run_from_env() as u8)
}
