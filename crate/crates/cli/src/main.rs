fn main() -> std::process::ExitCode {
    spkg_cli::main_with_args(std::env::args_os())
}
