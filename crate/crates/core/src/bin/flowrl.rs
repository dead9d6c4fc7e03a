fn main() -> std::process::ExitCode {
    flowrl::harness::cli::main(std::env::args_os())
}
