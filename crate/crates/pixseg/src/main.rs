fn main() {
    std::process::exit(pixseg::cli::run(std::env::args_os()));
}
