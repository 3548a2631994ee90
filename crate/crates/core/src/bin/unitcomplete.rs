fn main() {
    std::process::exit(unitcomplete::cli::run(std::env::args_os()));
}
