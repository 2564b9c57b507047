use crate::config::Scale;
use crate::error::{Error, Result};
use crate::ingest::Biographies;

/// Historical popularity score and whether any input had to be clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HpiScore {
    pub value: f64,
    pub clamped: bool,
}

/// `log10(V) + ln(L) + log4(A)`, minus `(70 − A)/7` for `A < 70`.
///
/// Inputs below 1 are raised to 1 and the result is flagged.
pub fn hpi(pageviews: f64, language_editions: f64, age: f64) -> HpiScore {
    let clamped = pageviews < 1.0 || language_editions < 1.0 || age < 1.0;
    let v = pageviews.max(1.0);
    let l = language_editions.max(1.0);
    let a = age.max(1.0);
    let mut value = v.log10() + l.ln() + a.ln() / 4f64.ln();
    if a < 70.0 {
        value -= (70.0 - a) / 7.0;
    }
    HpiScore { value, clamped }
}

/// Per-record count weights `max(HPI, 0)` and the number of clamped records.
pub fn hpi_weights(bios: &Biographies, reference_year: i32) -> (Vec<f64>, usize) {
    let mut clamped = 0;
    let weights = bios
        .records()
        .iter()
        .map(|r| {
            let s = hpi(
                r.pageviews,
                r.language_editions as f64,
                (reference_year - r.birth_year) as f64,
            );
            if s.clamped || s.value < 0.0 {
                clamped += 1;
            }
            s.value.max(0.0)
        })
        .collect();
    (weights, clamped)
}

pub fn linearize(x: f64, scale: Scale) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::validation(format!("cannot linearize negative value {x}")));
    }
    Ok(match scale {
        Scale::Log10p1 => (1.0 + x).log10(),
        Scale::Asinh => x.asinh(),
    })
}
