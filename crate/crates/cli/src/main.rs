fn main() -> std::process::ExitCode {
    ivsel_cli::run(std::env::args_os())
}
