fn main() {
    std::process::exit(sdrn::cli::run(std::env::args_os()));
}
