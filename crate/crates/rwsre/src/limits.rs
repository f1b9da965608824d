//! Standalone draws from the limit laws.

use std::collections::BTreeMap;
use std::io::Write;

use rwsre_core::limitlaw::{
    sample_indep_limit, sample_l2_at_1, theta_moment, LevyPair, LimitError, ThetaSampler, DEFAULT_EPS,
};
use thiserror::Error;

use crate::runner::Runner;
use crate::seeding::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Law {
    /// Half the exit time of Brownian motion from `(-1, 1)`.
    Theta,
    /// First coordinate of the coupled pair at the first passage of its partner over 1.
    Chi,
    /// Trap subordinator evaluated at an independent inverse subordinator.
    Indep,
    /// Stable subordinator at time 1.
    L2,
}

impl Law {
    pub fn name(self) -> &'static str {
        match self {
            Law::Theta => "theta",
            Law::Chi => "chi",
            Law::Indep => "indep",
            Law::L2 => "l2",
        }
    }
}

#[derive(Debug, Error)]
pub enum LimitsError {
    #[error("malformed parameter `{0}`; expected key=value")]
    Malformed(String),
    #[error("missing parameter `{0}`")]
    Missing(&'static str),
    #[error("unknown parameter `{key}` for {law}")]
    Unknown { key: String, law: &'static str },
    #[error(transparent)]
    Limit(#[from] LimitError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parses `k=v,k=v`.
pub fn parse_params(text: &str) -> Result<BTreeMap<String, f64>, LimitsError> {
    let mut out = BTreeMap::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| LimitsError::Malformed(part.to_string()))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| LimitsError::Malformed(part.to_string()))?;
        out.insert(k.trim().to_string(), v);
    }
    Ok(out)
}

fn allowed(law: Law) -> &'static [&'static str] {
    match law {
        Law::Theta => &[],
        Law::Chi => &["beta", "c_mu", "eps"],
        Law::Indep => &["alpha", "beta", "c_z"],
        Law::L2 => &["index", "c"],
    }
}

/// `count` draws of `law`; draw `i` uses its own stream.
pub fn draw(
    law: Law,
    params: &BTreeMap<String, f64>,
    count: u64,
    seed: u64,
    runner: &Runner,
) -> Result<Vec<f64>, LimitsError> {
    if let Some(key) = params.keys().find(|k| !allowed(law).contains(&k.as_str())) {
        return Err(LimitsError::Unknown {
            key: key.clone(),
            law: law.name(),
        });
    }
    let get = |k: &'static str| params.get(k).copied().ok_or(LimitsError::Missing(k));
    let scope = format!("limits/{}", law.name());
    let rng = |i| stream_rng(seed, &scope, 0, i);
    let theta = ThetaSampler::new(Default::default())?;
    Ok(match law {
        Law::Theta => runner.map(count, |i| theta.sample(&mut rng(i))),
        Law::Chi => {
            let beta = get("beta")?;
            let c_mu = params
                .get("c_mu")
                .copied()
                .unwrap_or_else(|| theta_moment(beta / 2.0));
            let pair = LevyPair::new(beta, c_mu, params.get("eps").copied().unwrap_or(DEFAULT_EPS))?;
            runner.map(count, |i| pair.sample_chi(&theta, &mut rng(i)))
        }
        Law::Indep => {
            let (alpha, beta, c_z) = (get("alpha")?, get("beta")?, get("c_z")?);
            if !(alpha > 0.0 && alpha < 1.0 && beta > 0.0 && beta < 1.0 && c_z >= 0.0) {
                return Err(LimitError::InvalidParameter(format!(
                    "need alpha, beta in (0, 1) and c_z >= 0; got {alpha}, {beta}, {c_z}"
                ))
                .into());
            }
            runner.map(count, |i| sample_indep_limit(alpha, beta, c_z, &mut rng(i)))
        }
        Law::L2 => {
            let (index, c) = (get("index")?, get("c")?);
            if !(index > 0.0 && index < 1.0 && c > 0.0) {
                return Err(LimitError::InvalidParameter(format!(
                    "need index in (0, 1) and c > 0; got {index}, {c}"
                ))
                .into());
            }
            runner.map(count, |i| sample_l2_at_1(index, c, &mut rng(i)))
        }
    })
}

/// Writes `law,replica,value` rows.
pub fn write_csv<W: Write>(law: Law, values: &[f64], out: W) -> Result<(), LimitsError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| LimitsError::Io(std::io::Error::other(e));
    w.write_record(["law", "replica", "value"]).map_err(io)?;
    for (i, v) in values.iter().enumerate() {
        w.write_record([law.name().to_string(), i.to_string(), v.to_string()])
            .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_parse_and_reject() {
        let p = parse_params("index=0.5, c=1.2").unwrap();
        assert_eq!(p["index"], 0.5);
        assert!(parse_params("index").is_err());
        let runner = Runner::new(1);
        assert!(matches!(
            draw(Law::L2, &parse_params("index=0.5").unwrap(), 3, 1, &runner),
            Err(LimitsError::Missing("c"))
        ));
        assert!(matches!(
            draw(Law::Theta, &parse_params("beta=0.5").unwrap(), 3, 1, &runner),
            Err(LimitsError::Unknown { .. })
        ));
    }

    #[test]
    fn draws_are_seeded() {
        let runner = Runner::new(2);
        let p = parse_params("alpha=0.25,beta=0.75,c_z=0.2").unwrap();
        let a = draw(Law::Indep, &p, 50, 9, &runner).unwrap();
        let b = draw(Law::Indep, &p, 50, 9, &Runner::new(1)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|x| *x >= 0.0));
        let mut buf = Vec::new();
        write_csv(Law::Indep, &a[..2], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    }
}
