use std::process::ExitCode;

fn main() -> ExitCode {
    nsgc_cli::cli::main_entry()
}
