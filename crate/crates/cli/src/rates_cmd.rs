//! `rates` and `figure1`.

use std::path::Path;

use postcon_core::rates::{
    consistency_condition, figure1_table, rate_elliptic, rate_gaussian_case, rate_general_optimize, rate_large_data,
    rate_no_tail, rate_opt_closed, rate_small_ball_closed, rate_uniform_prior, uniform_prior_rho, RateCertificate,
    SixthConstraint,
};
use serde::Serialize;

use crate::output::{to_toml, Artifacts, CliError};
use crate::plot::{Plot, Series, Style};
use crate::{Form, RatesKind, Status};

/// Rows printed as an aligned table and optionally saved as CSV.
struct Table(Vec<(String, String)>);

impl Table {
    fn push(&mut self, k: impl Into<String>, v: impl ToString) {
        self.0.push((k.into(), v.to_string()));
    }

    fn certificate(&mut self, prefix: &str, c: &RateCertificate) {
        self.push(format!("{prefix}kappa"), c.kappa);
        self.push(format!("{prefix}kappa_upper"), c.kappa_upper);
        let w = &c.witness;
        self.push(format!("{prefix}p"), w.p);
        self.push(format!("{prefix}q"), w.q);
        self.push(format!("{prefix}eta"), w.eta);
        self.push(format!("{prefix}theta"), w.theta);
        if let Some(s) = w.s {
            self.push(format!("{prefix}s"), s);
        }
        self.push(format!("{prefix}lambda"), c.problem.lambda);
        for (i, s) in c.slacks.iter().enumerate() {
            self.push(format!("{prefix}slack{}", i + 1), format!("{s:.3e}"));
        }
        self.push(format!("{prefix}replay_valid"), c.is_valid());
    }

    fn print(&self) {
        let width = self.0.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        for (k, v) in &self.0 {
            println!("{k:<width$}  {v}");
        }
    }

    fn csv(&self) -> String {
        let mut s = String::from("quantity,value\n");
        for (k, v) in &self.0 {
            s.push_str(&format!("{k},{v}\n"));
        }
        s
    }
}

fn form(f: Form) -> SixthConstraint {
    match f {
        Form::Theorem => SixthConstraint::Theorem,
        Form::Corollary => SixthConstraint::Corollary,
    }
}

pub fn run_rates(kind: &RatesKind, csv: Option<&Path>) -> Result<Status, CliError> {
    let mut t = Table(Vec::new());
    let result: postcon_core::Result<()> = (|| {
        match *kind {
            RatesKind::Gaussian { t: tt, r, form: f } => {
                let c = rate_gaussian_case(tt, r, form(f))?;
                let alt = match f {
                    Form::Theorem => SixthConstraint::Corollary,
                    Form::Corollary => SixthConstraint::Theorem,
                };
                t.push("kappa_cor", c.kappa);
                t.push("kappa_cor_alt_form", rate_gaussian_case(tt, r, alt)?.kappa);
                t.push("kappa_opt", rate_opt_closed(tt, r)?);
                t.push("kappa_smallball", rate_small_ball_closed(tt, r)?);
                t.certificate("cert_", &c);
            }
            RatesKind::General { lambda, rho, e, form: f } => {
                let c = rate_general_optimize(lambda, rho, e, form(f))?;
                t.certificate("", &c);
            }
            RatesKind::NoTail { s, sigma0, rho } => t.push("kappa", rate_no_tail(s, sigma0, rho)?),
            RatesKind::LargeData { beta, rho } => {
                let r = rate_large_data(beta, rho)?;
                t.push("kappa_theorem", r.theorem);
                t.push("kappa_proof", r.proof);
                t.push("theorem_branch1", r.theorem_branches.0);
                t.push("theorem_branch2", r.theorem_branches.1);
                t.push("proof_branch1", r.proof_branches.0);
                t.push("proof_branch2", r.proof_branches.1);
            }
            RatesKind::Elliptic { alpha, d, r, rho } => t.push("kappa", rate_elliptic(alpha, d, r, rho)?),
            RatesKind::Uniform { alpha, nu, d, r } => {
                t.push("kappa", rate_uniform_prior(alpha, nu, d, r)?);
                t.push("rho", uniform_prior_rho(nu)?);
            }
            RatesKind::ConsistencyCondition { lambda, e } => t.push("consistent", consistency_condition(lambda, e)),
        }
        Ok(())
    })();
    match result {
        Ok(()) => {}
        Err(postcon_core::Error::NoRate(m)) => {
            println!("no positive rate: {m}");
            return Ok(Status::Violation);
        }
        Err(e) => return Err(e.into()),
    }
    t.print();
    if let Some(path) = csv {
        std::fs::write(path, t.csv()).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(Status::Pass)
}

#[derive(Serialize)]
struct Figure1Settings {
    r: f64,
    t: Vec<f64>,
    form: SixthConstraint,
}

pub fn run_figure1(r: f64, ts: &[f64], f: Form, out: &Path) -> Result<Status, CliError> {
    let settings = Figure1Settings { r, t: ts.to_vec(), form: form(f) };
    let rows = figure1_table(r, ts, settings.form)?;
    let art = Artifacts::new(out, "figure1", &to_toml(&settings)?, &[])?;
    let mut csv = String::from("t,kappa_cor,kappa_opt,kappa_smallball,kappa_cor_alt_form\n");
    for row in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            row.t, row.kappa_cor, row.kappa_opt, row.kappa_smallball, row.kappa_cor_alt
        ));
    }
    art.write_csv("figure1.csv", csv.as_bytes())?;
    let curve = |g: fn(&postcon_core::rates::Figure1Row) -> f64| rows.iter().map(|row| (row.t, g(row))).collect();
    let plot = Plot {
        title: format!("Contraction rates, r = {r}"),
        x_label: "t".into(),
        y_label: "kappa".into(),
        log_x: false,
        log_y: false,
        series: vec![
            Series::new("kappa_cor", curve(|row| row.kappa_cor), Style::Line),
            Series::new("kappa_opt", curve(|row| row.kappa_opt), Style::Line),
            Series::new("kappa_smallball", curve(|row| row.kappa_smallball), Style::Dashed),
        ],
    };
    art.write_svg("figure1.svg", &plot.to_svg())?;
    println!("{:>8} {:>10} {:>10} {:>15}", "t", "kappa_cor", "kappa_opt", "kappa_smallball");
    for row in &rows {
        println!("{:>8} {:>10.6} {:>10.6} {:>15.6}", row.t, row.kappa_cor, row.kappa_opt, row.kappa_smallball);
    }
    if let Some(bad) = rows.iter().find(|row| !row.ordered()) {
        println!(
            "FAIL: ordering violated at t = {}: kappa_cor {} kappa_smallball {} kappa_opt {}",
            bad.t, bad.kappa_cor, bad.kappa_smallball, bad.kappa_opt
        );
        return Ok(Status::Violation);
    }
    println!("PASS: kappa_cor <= kappa_smallball + 1e-3 <= kappa_opt at every t (config {})", art.hash());
    Ok(Status::Pass)
}
