fn main() {
    std::process::exit(spd::cli::run(std::env::args_os()));
}
