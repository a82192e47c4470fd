fn main() {
    std::process::exit(lsa_reid::cli::run(std::env::args_os()));
}
