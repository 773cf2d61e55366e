fn main() {
    std::process::exit(realspace_sim::cli::run(std::env::args_os()));
}
