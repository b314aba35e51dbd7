fn main() {
    std::process::exit(rsf_core::cli::run(std::env::args_os()));
}
