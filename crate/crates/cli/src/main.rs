use std::process::ExitCode;

fn main() -> ExitCode {
    schur_elim_cli::run(std::env::args_os())
}
