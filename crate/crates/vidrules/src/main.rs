fn main() {
    let out = vidrules::cli::dispatch(std::env::args_os());
    if out.exit_code == 0 {
        println!("{}", out.summary);
    } else {
        eprintln!("{}", out.summary);
    }
    std::process::exit(out.exit_code);
}
