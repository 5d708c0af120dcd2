use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};

use super::{mean, require_len, variance};
use crate::error::{Error, Result};

/// Alternative hypothesis for a t-test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tails {
    #[default]
    TwoSided,
    /// Mean (difference) below zero.
    Less,
    /// Mean (difference) above zero.
    Greater,
}

impl FromStr for Tails {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two-sided" | "two" | "2" => Ok(Tails::TwoSided),
            "less" => Ok(Tails::Less),
            "greater" => Ok(Tails::Greater),
            other => Err(Error::invalid(format!(
                "unknown tails '{other}' (expected two-sided, less or greater)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub dof: f64,
    pub p: f64,
    pub tails: Tails,
}

fn t_p_value(t: f64, dof: f64, tails: Tails) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, dof).expect("dof > 0");
    match tails {
        Tails::TwoSided => (2.0 * dist.sf(t.abs())).min(1.0),
        Tails::Less => dist.cdf(t),
        Tails::Greater => dist.sf(t),
    }
}

/// One-sample t-test of paired differences against zero.
pub fn paired_t_test(diffs: &[f64], tails: Tails) -> Result<TTest> {
    require_len(diffs, 2, "paired t-test")?;
    let n = diffs.len() as f64;
    let var = variance(diffs);
    if var == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let t = mean(diffs) / (var / n).sqrt();
    let dof = n - 1.0;
    Ok(TTest {
        t,
        dof,
        p: t_p_value(t, dof, tails),
        tails,
    })
}

/// Two-sample t-test without the equal-variance assumption; `t > 0` when
/// `a` has the larger mean.
pub fn welch_t_test(a: &[f64], b: &[f64], tails: Tails) -> Result<TTest> {
    require_len(a, 2, "Welch t-test")?;
    require_len(b, 2, "Welch t-test")?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (variance(a) / na, variance(b) / nb);
    if va + vb == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let t = (mean(a) - mean(b)) / (va + vb).sqrt();
    let dof = (va + vb).powi(2) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    Ok(TTest {
        t,
        dof,
        p: t_p_value(t, dof, tails),
        tails,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anova {
    pub f: f64,
    pub dof_between: f64,
    pub dof_within: f64,
    pub p: f64,
}

/// One-way ANOVA with `(k − 1, N − k)` degrees of freedom.
pub fn one_way_anova(groups: &[Vec<f64>]) -> Result<Anova> {
    if groups.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "ANOVA needs at least 2 groups, got {}",
            groups.len()
        )));
    }
    for g in groups {
        require_len(g, 2, "ANOVA group")?;
    }
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    let grand = mean(&all);
    let ss_between: f64 = groups
        .iter()
        .map(|g| g.len() as f64 * (mean(g) - grand).powi(2))
        .sum();
    let ss_within: f64 = groups
        .iter()
        .map(|g| {
            let m = mean(g);
            g.iter().map(|x| (x - m).powi(2)).sum::<f64>()
        })
        .sum();
    let dof_between = (groups.len() - 1) as f64;
    let dof_within = (all.len() - groups.len()) as f64;
    if ss_within == 0.0 {
        // Every value equals its group mean. With equal group means there is
        // nothing to explain, which we report as F = 0.
        if ss_between <= 1e-24 * all.len() as f64 {
            return Ok(Anova {
                f: 0.0,
                dof_between,
                dof_within,
                p: 1.0,
            });
        }
        return Err(Error::ZeroVariance);
    }
    let f = (ss_between / dof_between) / (ss_within / dof_within);
    let dist = FisherSnedecor::new(dof_between, dof_within).expect("positive dof");
    Ok(Anova {
        f,
        dof_between,
        dof_within,
        p: dist.sf(f),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    /// Two-sided, from `t = r·√((n − 2) / (1 − r²))` on `n − 2` dof.
    pub p: f64,
    pub n: usize,
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<Correlation> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "correlation inputs differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    require_len(a, 3, "correlation")?;
    require_len(b, 3, "correlation")?;
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let r = (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0);
    let dof = (a.len() - 2) as f64;
    let p = if r.abs() == 1.0 {
        0.0
    } else {
        t_p_value(r * (dof / (1.0 - r * r)).sqrt(), dof, Tails::TwoSided)
    };
    Ok(Correlation { r, p, n: a.len() })
}
