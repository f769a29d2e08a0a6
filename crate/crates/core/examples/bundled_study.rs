//! Runs the bundled study and prints the summary table.

fn main() {
    let sc = gpebo_core::paper_example();
    let out = gpebo_core::execute(&sc).expect("bundled scenario runs");
    print!("{}", out.summary);
    println!("theta_hat(T) = {:?}", out.summary.theta_hat_final);
}
