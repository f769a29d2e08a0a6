//! Trajectory CSV: `t, u, y, x1..xn, xhat1..xhatn, thetahat1..thetahatr,
//! theta1..thetar, xerr1..xerrn, thetaerr1..thetaerrr`.

use std::io::Write;

use gpebo_core::Outcome;

/// Header names for a plant of order `n` (`r = 3n` parameters).
pub fn header(n: usize) -> Vec<String> {
    let r = 3 * n;
    let mut h: Vec<String> = vec!["t".into(), "u".into(), "y".into()];
    let family = |h: &mut Vec<String>, prefix: &str, count: usize| {
        h.extend((1..=count).map(|i| format!("{prefix}{i}")));
    };
    family(&mut h, "x", n);
    family(&mut h, "xhat", n);
    family(&mut h, "thetahat", r);
    family(&mut h, "theta", r);
    family(&mut h, "xerr", n);
    family(&mut h, "thetaerr", r);
    h
}

/// Writes every `every`-th grid sample of a completed run.
pub fn write_csv<W: Write>(out: W, outcome: &Outcome, every: usize) -> csv::Result<()> {
    let run = &outcome.run;
    let est = &outcome.estimates;
    let theta = &outcome.summary.theta_true;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(run.n))?;
    let mut row: Vec<String> = Vec::new();
    for i in (0..run.len()).step_by(every.max(1)) {
        row.clear();
        row.push(run.times[i].to_string());
        row.push(run.u[i].to_string());
        row.push(run.y[i].to_string());
        let fields = run
            .x(i)
            .iter()
            .chain(&est.x_hat[i])
            .chain(&est.theta_hat[i])
            .chain(theta)
            .chain(&est.state_err[i])
            .chain(&est.param_err[i]);
        row.extend(fields.map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
