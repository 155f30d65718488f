fn main() {
    std::process::exit(steercost::cli::run(std::env::args_os()));
}
