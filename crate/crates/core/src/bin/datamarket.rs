fn main() -> std::process::ExitCode {
    datamarket::cli::main()
}
