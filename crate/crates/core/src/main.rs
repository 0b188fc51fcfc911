fn main() {
    std::process::exit(selfstab::cli::main_from(std::env::args_os()));
}
