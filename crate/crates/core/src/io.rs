//! JSON file formats for instances, strategy profiles and reduction sidecars.
//!
//! Every number is a string holding an exact rational (`"3/4"`, `"0.25"`, `"1e-3"`);
//! writers always emit the reduced `num/den` form, so write-after-read is stable.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::auction::{AuctionInstance, StrategyProfile};
use crate::distributions::{Block, PiecewiseCdf};
use crate::error::{FpaError, Result};
use crate::reduction::{DecodeMap, ReductionOutput, Role};
use crate::scalar::{format_rational, parse_rational, Rational};

#[derive(Clone, Debug, PartialEq, Eq)]
struct Num(Rational);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format_rational(&self.0))
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        parse_rational(&text)
            .map(Num)
            .ok_or_else(|| serde::de::Error::custom(format!("`{text}` is not a rational literal")))
    }
}

fn nums(values: &[Rational]) -> Vec<Num> {
    values.iter().cloned().map(Num).collect()
}

fn unwrap_nums(values: Vec<Num>) -> Vec<Rational> {
    values.into_iter().map(|n| n.0).collect()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PieceFile {
    interval: [Num; 2],
    /// Ascending powers of the global variable.
    coeffs: Vec<Num>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockFile {
    interval: [Num; 2],
    volume: Num,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum PriorFile {
    Uniform,
    Pieces(Vec<PieceFile>),
    Blocks(Vec<BlockFile>),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    bids: Vec<Num>,
    /// `priors[i][j]` is bidder `i`'s belief about `j`; the diagonal is `null`.
    priors: Vec<Vec<Option<PriorFile>>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StrategyFile {
    /// `jumps[i][k] = α_i(b_k)`.
    jumps: Vec<Vec<Num>>,
}

fn parse_error(e: serde_json::Error) -> FpaError {
    FpaError::Parse { line: e.line(), column: e.column(), message: e.to_string() }
}

fn to_text<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("in-memory JSON serialisation");
    text.push('\n');
    text
}

impl PriorFile {
    fn into_cdf(self) -> Result<PiecewiseCdf> {
        match self {
            PriorFile::Uniform => Ok(PiecewiseCdf::uniform()),
            PriorFile::Pieces(pieces) => PiecewiseCdf::from_pieces(
                pieces
                    .into_iter()
                    .map(|p| {
                        let [lo, hi] = p.interval;
                        (lo.0, hi.0, unwrap_nums(p.coeffs))
                    })
                    .collect(),
            ),
            PriorFile::Blocks(blocks) => PiecewiseCdf::from_blocks(
                &blocks
                    .into_iter()
                    .map(|b| {
                        let [lo, hi] = b.interval;
                        Block::new(lo.0, hi.0, b.volume.0)
                    })
                    .collect::<Vec<_>>(),
            ),
        }
    }

    fn from_cdf(cdf: &PiecewiseCdf) -> Self {
        PriorFile::Pieces(
            cdf.pieces()
                .iter()
                .map(|p| PieceFile {
                    interval: [Num(p.lo.exact().clone()), Num(p.hi.exact().clone())],
                    coeffs: p.coeffs.iter().map(|c| Num(c.exact().clone())).collect(),
                })
                .collect(),
        )
    }
}

/// Parses and validates an instance; malformed priors surface as validation errors.
pub fn parse_instance(text: &str) -> Result<AuctionInstance> {
    let file: InstanceFile = serde_json::from_str(text).map_err(parse_error)?;
    let mut problems = Vec::new();
    let priors = file
        .priors
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            row.into_iter()
                .enumerate()
                .map(|(j, entry)| {
                    entry.and_then(|p| match p.into_cdf() {
                        Ok(cdf) => Some(cdf),
                        Err(e) => {
                            problems.push(format!("prior ({i},{j}): {e}"));
                            None
                        }
                    })
                })
                .collect()
        })
        .collect();
    if !problems.is_empty() {
        return Err(FpaError::Validation(problems));
    }
    AuctionInstance::new(unwrap_nums(file.bids), priors)
}

/// Canonical form: every prior written as pieces.
pub fn instance_to_json(instance: &AuctionInstance) -> String {
    let n = instance.n();
    to_text(&InstanceFile {
        bids: instance.bids().iter().map(|b| Num(b.exact().clone())).collect(),
        priors: (0..n)
            .map(|i| (0..n).map(|j| (i != j).then(|| PriorFile::from_cdf(instance.prior(i, j)))).collect())
            .collect(),
    })
}

/// Parses a profile and checks it against `instance`.
pub fn parse_strategy(text: &str, instance: &AuctionInstance) -> Result<StrategyProfile<Rational>> {
    let file: StrategyFile = serde_json::from_str(text).map_err(parse_error)?;
    let profile = StrategyProfile::new(file.jumps.into_iter().map(unwrap_nums).collect());
    profile.ensure_valid(instance)?;
    Ok(profile)
}

pub fn strategy_to_json(profile: &StrategyProfile<Rational>) -> String {
    to_text(&StrategyFile { jumps: profile.jumps().iter().map(|j| nums(j)).collect() })
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RoleFile {
    Gate(usize),
    Auxiliary { owner: usize, slot: usize },
    Inert,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DecodeFile {
    scale: Num,
    offset: Num,
    factor: Num,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SidecarFile {
    num_gates: usize,
    /// Gate value `trunc(factor·(scale·α(b_1) − offset))`.
    decode: DecodeFile,
    roles: Vec<RoleFile>,
}

/// Bidder roles and decoding constants of a reduction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sidecar {
    pub num_gates: usize,
    pub decode: DecodeMap,
    pub roles: Vec<Role>,
}

impl From<&ReductionOutput> for Sidecar {
    fn from(out: &ReductionOutput) -> Self {
        Self { num_gates: out.num_gates, decode: out.decode.clone(), roles: out.roles.clone() }
    }
}

pub fn sidecar_to_json(sidecar: &Sidecar) -> String {
    to_text(&SidecarFile {
        num_gates: sidecar.num_gates,
        decode: DecodeFile {
            scale: Num(sidecar.decode.scale.clone()),
            offset: Num(sidecar.decode.offset.clone()),
            factor: Num(sidecar.decode.factor.clone()),
        },
        roles: sidecar
            .roles
            .iter()
            .map(|r| match *r {
                Role::Gate(g) => RoleFile::Gate(g),
                Role::Auxiliary { owner, slot } => RoleFile::Auxiliary { owner, slot },
                Role::Inert => RoleFile::Inert,
            })
            .collect(),
    })
}

pub fn parse_sidecar(text: &str) -> Result<Sidecar> {
    let file: SidecarFile = serde_json::from_str(text).map_err(parse_error)?;
    Ok(Sidecar {
        num_gates: file.num_gates,
        decode: DecodeMap { scale: file.decode.scale.0, offset: file.decode.offset.0, factor: file.decode.factor.0 },
        roles: file
            .roles
            .into_iter()
            .map(|r| match r {
                RoleFile::Gate(g) => Role::Gate(g),
                RoleFile::Auxiliary { owner, slot } => Role::Auxiliary { owner, slot },
                RoleFile::Inert => Role::Inert,
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;

    #[test]
    fn instance_round_trip_is_exact() {
        let text = instance_to_json(&instances::golden_ratio());
        let parsed = parse_instance(&text).unwrap();
        assert_eq!(parsed, instances::golden_ratio());
        assert_eq!(instance_to_json(&parsed), text);
    }

    #[test]
    fn shorthand_priors_and_errors() {
        let text = r#"{"bids": ["0", "0.5"], "priors": [[null, "uniform"], [{"blocks": [{"interval": ["0", "1"], "volume": "1"}]}, null]]}"#;
        assert_eq!(parse_instance(text).unwrap(), instances::uniform(2, &[Rational::from_integer(0.into()), Rational::new(1.into(), 2.into())]));
        let short = r#"{"bids": ["0", "1/2"], "priors": [[null, {"blocks": [{"interval": ["0", "1"], "volume": "9/10"}]}], [null, null]]}"#;
        assert!(matches!(parse_instance(short), Err(FpaError::Validation(_))));
        let missing = "{\n  \"priors\": []\n}";
        assert!(matches!(parse_instance(missing), Err(FpaError::Parse { line: 3, .. })));
        let bad_number = "{\"bids\": [\"0\", \"x/2\"], \"priors\": []}";
        assert!(matches!(parse_instance(bad_number), Err(FpaError::Parse { line: 1, .. })));
    }
}
