fn main() {
    std::process::exit(emo_prompts::cli::main_with_args(std::env::args_os()));
}
