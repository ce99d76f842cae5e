use std::fmt::Write;

use diffcal::field_theory::{
    rho_narrowband, rho_second_order, rho_wideband_closed, rho_wideband_quadrature,
    second_order_term,
};
use diffcal::Error;

use super::Context;
use crate::config::CORRELATION_BAND_HZ;
use crate::output::write_csv;
use crate::Failure;

const QUADRATURE_TOL: f64 = 1e-10;

pub fn run(ctx: &Context) -> Result<(), Failure> {
    let t = &ctx.cfg.theory;
    if !(t.d_max > 0.0 && t.d_max.is_finite()) {
        return Err(
            Error::InvalidConfig(format!("d_max must be positive, got {}", t.d_max)).into(),
        );
    }
    if t.n_points < 2 {
        return Err(
            Error::InvalidConfig(format!("need at least 2 points, got {}", t.n_points)).into(),
        );
    }
    let band = ctx.cfg.band(CORRELATION_BAND_HZ)?;
    let k = ctx.cfg.constants()?;
    let mut csv = String::from(
        "distance_m,rho_closed,rho_quadrature,rho_narrowband,rho_second_order,second_order_term\n",
    );
    for i in 0..t.n_points {
        let d = t.d_max * i as f64 / (t.n_points - 1) as f64;
        // The second-order form is singular at d = 0, where its limit is 1.
        let (second, term) = if d == 0.0 {
            (1.0, 0.0)
        } else {
            (
                rho_second_order(d, &band, &k)?,
                second_order_term(d, &band, &k)?,
            )
        };
        writeln!(
            csv,
            "{d},{},{},{},{second},{term}",
            rho_wideband_closed(d, &band, &k),
            rho_wideband_quadrature(d, &band, &k, QUADRATURE_TOL)?,
            rho_narrowband(d, band.omega_c(), &k),
        )
        .expect("write to string");
    }
    let path = ctx.path("theory.csv");
    write_csv(&path, &ctx.prov, &csv)?;
    ctx.report("theory curves", &path);
    Ok(())
}
