use std::io::Write;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mut out = String::new();
    let mut err = String::new();
    let code = cost_calculus_cli::run_cli(&args, &mut out, &mut err);
    print!("{out}");
    eprint!("{err}");
    let _ = std::io::stdout().flush();
    std::process::exit(code);
}
