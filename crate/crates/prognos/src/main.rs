fn main() {
    std::process::exit(prognos::cli::run(std::env::args_os()));
}
