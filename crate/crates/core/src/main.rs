fn main() {
    std::process::exit(hope_al::cli::run(std::env::args_os()));
}
