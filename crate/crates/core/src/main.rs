fn main() -> std::process::ExitCode {
    twist::cli::main()
}
