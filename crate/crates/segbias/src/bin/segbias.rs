fn main() {
    std::process::exit(segbias::cli::run(std::env::args_os()));
}
