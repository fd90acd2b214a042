use std::process::ExitCode;

fn main() -> ExitCode {
    hjpdhg::cli::main_with_args(std::env::args_os())
}
