fn main() {
    std::process::exit(avarchive_service::cli::run(std::env::args_os()));
}
