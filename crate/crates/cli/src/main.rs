fn main() -> std::process::ExitCode {
    optics_tcn_cli::run_from(std::env::args_os())
}
