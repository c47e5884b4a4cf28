//! Consistency gate for a codebook file, a weights file, or a matching pair.
//!
//! Load failures are reported as failed checks rather than errors so a single
//! run lists every problem.

use std::fmt;
use std::path::Path;

use crate::codebook::{enumerate_codebook, Codebook};
use crate::nn::WeightsFile;
use crate::receiver::{decode_probs, EncoderWeights, ReceiverWeights};

/// Largest tolerated element-wise gap between a stored codebook and the one
/// enumerated from the encoder networks.
pub const ENUMERATION_TOL: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ArtifactReport {
    pub checks: Vec<Check>,
}

impl ArtifactReport {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push(&mut self, name: &'static str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check { name, passed, detail: detail.into() });
    }
}

impl fmt::Display for ArtifactReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail)?;
        }
        Ok(())
    }
}

/// Largest element-wise distance between two codebooks of equal shape.
pub fn max_codebook_gap(a: &Codebook, b: &Codebook) -> Option<f64> {
    if (a.sections(), a.alphabet(), a.real_len()) != (b.sections(), b.alphabet(), b.real_len()) {
        return None;
    }
    let mut gap = 0.0f64;
    for v in 0..a.sections() {
        for m in 0..a.alphabet() {
            for (x, y) in a.word(v, m).iter().zip(b.word(v, m)) {
                gap = gap.max((x.re - y.re).abs()).max((x.im - y.im).abs());
            }
        }
    }
    Some(gap)
}

pub fn validate_artifacts(codebook: Option<&Path>, weights: Option<&Path>) -> ArtifactReport {
    let mut report = ArtifactReport::default();

    let cb = codebook.and_then(|p| match Codebook::load(p) {
        Ok(cb) => {
            report.push(
                "codebook",
                true,
                format!("V={} M={} D={}, energies within tolerance of {}", cb.sections(), cb.alphabet(), cb.real_len(), cb.energy()),
            );
            Some(cb)
        }
        Err(e) => {
            report.push("codebook", false, e.to_string());
            None
        }
    });

    let Some(wpath) = weights else {
        return report;
    };
    let file = match WeightsFile::load(wpath) {
        Ok(f) => f,
        Err(e) => {
            report.push("weights", false, e.to_string());
            return report;
        }
    };
    let d = file.dims;
    let names: Vec<&str> = file.networks.iter().map(|n| n.name.as_str()).collect();
    report.push("weights", true, format!("V={} M={} D={} {}x{}, networks {}", d.sections, d.alphabet, d.real_len, d.nt, d.nr, names.join(",")));

    let bad: Vec<&str> =
        file.networks.iter().filter(|n| n.layers.iter().any(|l| l.params().iter().any(|p| !p.is_finite()))).map(|n| n.name.as_str()).collect();
    report.push(
        "finite parameters",
        bad.is_empty(),
        if bad.is_empty() { "all finite".to_string() } else { format!("non-finite values in {}", bad.join(",")) },
    );

    if let Some(cb) = &cb {
        let same = (cb.sections(), cb.alphabet(), cb.real_len()) == (d.sections, d.alphabet, d.real_len);
        report.push(
            "dimensions agree",
            same,
            format!(
                "codebook V={} M={} D={}, weights V={} M={} D={}",
                cb.sections(),
                cb.alphabet(),
                cb.real_len(),
                d.sections,
                d.alphabet,
                d.real_len
            ),
        );
    }

    if file.network("enc0").is_some() {
        match EncoderWeights::from_file(&file).and_then(|enc| enumerate_codebook(&enc, d.sections, d.real_len, d.alphabet)) {
            Ok(enumerated) => {
                report.push("encoders", true, "every encoder enumerates to a valid codebook");
                if let Some(cb) = &cb {
                    match max_codebook_gap(cb, &enumerated) {
                        Some(gap) => report.push(
                            "enumeration matches codebook",
                            gap <= ENUMERATION_TOL,
                            format!("max gap {gap:.3e} (tolerance {ENUMERATION_TOL:e})"),
                        ),
                        None => report.push("enumeration matches codebook", false, "shapes differ"),
                    }
                }
            }
            Err(e) => report.push("encoders", false, e.to_string()),
        }
    }

    if file.network("res").is_some() || file.network("dec0").is_some() {
        match ReceiverWeights::from_file(&file) {
            Ok(rx) => {
                report.push("receiver", true, format!("res {} -> {}, {} decoders", rx.res.in_dim(), rx.res.out_dim(), rx.dec.len()));
                let probe: Vec<f64> = (0..d.real_len).map(|i| ((i % 7) as f64 - 3.0) / 3.0).collect();
                match decode_probs(&probe, &rx) {
                    Ok(probs) => {
                        let worst = probs.iter().map(|p| (p.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
                        let ok = worst < 1e-9 && probs.iter().flatten().all(|p| p.is_finite() && *p >= 0.0);
                        report.push("decoder outputs", ok, format!("probability sums within {worst:.1e} of 1"));
                    }
                    Err(e) => report.push("decoder outputs", false, e.to_string()),
                }
            }
            Err(e) => report.push("receiver", false, e.to_string()),
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::SeededRng;

    #[test]
    fn missing_files_fail() {
        let r = validate_artifacts(Some(Path::new("/nonexistent/cb.nosc")), Some(Path::new("/nonexistent/w.nosw")));
        assert!(!r.passed());
        assert_eq!(r.checks.len(), 2);
    }

    #[test]
    fn empty_request_does_not_pass() {
        assert!(!validate_artifacts(None, None).passed());
    }

    #[test]
    fn random_codebook_alone_passes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cb.nosc");
        Codebook::random_gaussian(2, 16, 8, &mut SeededRng::new(1)).unwrap().save(&p).unwrap();
        let r = validate_artifacts(Some(&p), None);
        assert!(r.passed(), "{r}");
    }

    #[test]
    fn gap_is_elementwise_max() {
        let a = Codebook::orthogonal(1, 8, 2).unwrap();
        let b = Codebook::from_fn(1, 8, 2, |v, m| {
            let mut w = a.word(v, m).to_vec();
            if m == 1 {
                w.swap(0, 1);
            }
            w
        })
        .unwrap();
        let amp = a.energy().sqrt();
        assert!((max_codebook_gap(&a, &b).unwrap() - amp).abs() < 1e-12);
        assert_eq!(max_codebook_gap(&a, &Codebook::orthogonal(1, 16, 2).unwrap()), None);
    }
}
