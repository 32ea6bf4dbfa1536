use std::process::ExitCode;

fn main() -> ExitCode {
    nonlocal::cli::main()
}
