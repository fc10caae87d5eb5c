fn main() {
    std::process::exit(sweep_ocp::cli::run(std::env::args_os()));
}
