fn main() {
    std::process::exit(sound_safeguard::cli::main_with_args(std::env::args_os()));
}
