use std::process::ExitCode;

use anyhow::{Context, Result};
use surropt::io::write_lp;

use crate::problem::{cache_for, encode, EncodeOpts};
use crate::report::Report;
use crate::{EncodeArgs, Global, ModelArgs};

pub fn encode_opts(g: &Global, m: &ModelArgs, cache: Option<std::path::PathBuf>) -> EncodeOpts {
    EncodeOpts {
        formulation: m.formulation.into(),
        tighten: m.tighten.into(),
        threads: g.threads,
        hull: m.hull.clone(),
        bounds_cache: cache,
    }
}

pub fn run(g: &Global, a: &EncodeArgs) -> Result<ExitCode> {
    let opts = encode_opts(g, &a.model, cache_for(a.output.as_deref()));
    let enc = encode(&a.model.input, &opts)?;
    let model = enc.built.model();
    if let Some(out) = &a.output {
        write_lp(model, out, a.allow_lossy).with_context(|| format!("writing {}", out.display()))?;
    }
    let mut r = Report::new();
    r.field("kind", enc.kind)
        .field("formulation", opts.formulation)
        .field("variables", model.num_vars())
        .field("constraints", model.num_constraints())
        .field("binaries", model.num_binaries())
        .field("complementarities", model.num_complementarities())
        .field("hull_weights", enc.hull_weights)
        .field("bounds", enc.bounds.method)
        .field("bounds_cached", enc.bounds.cached)
        .field("bounds_cache", &enc.bounds.path)
        .field("model", &a.output);
    r.print(g.json);
    Ok(ExitCode::SUCCESS)
}
