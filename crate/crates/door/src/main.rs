fn main() {
    std::process::exit(door::cli::run(std::env::args_os()));
}
