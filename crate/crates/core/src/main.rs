fn main() {
    std::process::exit(atomlift::cli::run(std::env::args_os()));
}
