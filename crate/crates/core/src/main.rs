use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(voxattack::cli::run(std::env::args_os()))
}
