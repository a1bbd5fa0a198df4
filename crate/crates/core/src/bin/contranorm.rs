fn main() {
    std::process::exit(contranorm::cli::run(std::env::args_os()));
}
