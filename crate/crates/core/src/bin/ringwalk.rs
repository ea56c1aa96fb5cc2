fn main() {
    std::process::exit(ringwalk::cli::run(std::env::args_os()));
}
