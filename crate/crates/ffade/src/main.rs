use std::process::ExitCode;

fn main() -> ExitCode {
    ffade::cli::main_entry(std::env::args_os())
}
