use std::process::ExitCode;

fn main() -> ExitCode {
    leggett_ineq::cli::main()
}
