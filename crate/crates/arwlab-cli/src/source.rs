//! Network source resolution: a JSON file, a generator spec string, or a
//! generator spec JSON file.

use std::path::PathBuf;

use clap::Args;

use arwlab_core::error::Error;
use arwlab_core::network::{
    self, generate, BaseGraph, GeneratorSpec, InsertionRule, Network,
};

#[derive(Args)]
#[group(required = true, multiple = false)]
pub struct NetSource {
    /// Network JSON file: {"sites": [...], "edges": [[i, j, w], ...], "nu": ...}.
    #[arg(long)]
    pub net: Option<PathBuf>,
    /// Generator spec string: wheel:N | trans:cycle:N | trans:complete:N |
    /// ball:D:R | tree:DEGREE:DEPTH | two-site.
    #[arg(long)]
    pub gen: Option<String>,
    /// Generator spec as a JSON file (supports host-restriction).
    #[arg(long)]
    pub gen_json: Option<PathBuf>,
}

impl NetSource {
    /// Insertion rule used by `--gen` strings.
    fn rule() -> InsertionRule {
        InsertionRule::Uniform
    }

    pub fn load(&self) -> Result<Network, Error> {
        if let Some(path) = &self.net {
            let text = std::fs::read_to_string(path)?;
            return network::from_json(&text);
        }
        if let Some(path) = &self.gen_json {
            let text = std::fs::read_to_string(path)?;
            let spec: GeneratorSpec = serde_json::from_str(&text)?;
            return generate(&spec);
        }
        let spec = parse_gen_spec(self.gen.as_deref().expect("clap enforces one source"))?;
        generate(&spec)
    }
}

pub fn parse_gen_spec(text: &str) -> Result<GeneratorSpec, Error> {
    let insertion = NetSource::rule();
    let parts: Vec<&str> = text.split(':').collect();
    let parse = |s: &str| -> Result<usize, Error> {
        s.parse()
            .map_err(|_| Error::Parameter(format!("bad number {s:?} in generator spec {text:?}")))
    };
    match parts.as_slice() {
        ["two-site"] => Ok(GeneratorSpec::HostRestriction {
            adjacency: vec![vec![1, 2], vec![0, 3], vec![0], vec![1]],
            retained: vec![0, 1],
            insertion,
        }),
        ["wheel", n] => Ok(GeneratorSpec::Wheel {
            n: parse(n)?,
            insertion,
        }),
        ["trans", "cycle", n] => Ok(GeneratorSpec::TransitiveMinusVertex {
            base: BaseGraph::Cycle,
            n: parse(n)?,
            insertion,
        }),
        ["trans", "complete", n] => Ok(GeneratorSpec::TransitiveMinusVertex {
            base: BaseGraph::Complete,
            n: parse(n)?,
            insertion,
        }),
        ["ball", d, r] => Ok(GeneratorSpec::EuclideanBall {
            d: parse(d)?,
            r: parse(r)?,
            insertion,
        }),
        ["tree", degree, depth] => Ok(GeneratorSpec::TreeBall {
            degree: parse(degree)?,
            depth: parse(depth)?,
            insertion,
        }),
        _ => Err(Error::Parameter(format!(
            "unknown generator spec {text:?} (wheel:N | trans:cycle:N | trans:complete:N | \
             ball:D:R | tree:DEGREE:DEPTH | two-site)"
        ))),
    }
}
