fn main() {
    std::process::exit(sosp_harness::cli::run(std::env::args_os()));
}
