fn main() -> std::process::ExitCode {
    simdps_cli::main_entry()
}
