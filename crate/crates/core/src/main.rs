fn main() {
    tablecellqa::cli::init_logging();
    std::process::exit(tablecellqa::cli::run(std::env::args_os()));
}
