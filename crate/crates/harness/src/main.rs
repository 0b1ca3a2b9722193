fn main() {
    std::process::exit(cmdnet_harness::cli::run(std::env::args_os()));
}
