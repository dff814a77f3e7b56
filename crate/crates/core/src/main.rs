fn main() {
    env_logger::init();
    std::process::exit(entchan::cli::run(std::env::args_os()));
}
