fn main() -> std::process::ExitCode {
    st_simdiff::cli::main()
}
