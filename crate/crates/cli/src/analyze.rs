use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use surropt::io::{load_network, load_problem, ProblemKind};
use surropt::regions::{
    arrangement_in_general_position, enumerate_nonempty_patterns, general_position_check, zaslavsky_count,
    DEFAULT_RANK_TOL,
};
use surropt::stationarity::{equivalence_roundtrip, MpccMultipliers, StationarityTol};
use surropt::{NeuronId, DEFAULT_DEGENERACY_TOL};

use crate::report::Report;
use crate::{AnalyzeArgs, Global};

/// A bare coordinate list, or a `solve --output` document.
#[derive(Deserialize)]
#[serde(untagged)]
enum PointFile {
    Bare(Vec<f64>),
    Solution {
        input: Option<Vec<f64>>,
        #[serde(default)]
        multipliers: Option<MpccMultipliers>,
    },
}

fn read_point(path: &Path) -> Result<(Vec<f64>, Option<MpccMultipliers>)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    match serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))? {
        PointFile::Bare(x) => Ok((x, None)),
        PointFile::Solution { input: Some(x), multipliers } => Ok((x, multipliers)),
        PointFile::Solution { input: None, .. } => bail!("{} has no input point", path.display()),
    }
}

fn need_input(a: &AnalyzeArgs) -> Result<&PathBuf> {
    a.input.as_ref().context("this analysis needs an input file")
}

fn ids(list: impl IntoIterator<Item = NeuronId>) -> Vec<[usize; 2]> {
    list.into_iter().map(|id| [id.layer, id.index]).collect()
}

pub fn run(g: &Global, a: &AnalyzeArgs) -> Result<ExitCode> {
    let mut r = Report::new();
    if let Some(md) = &a.zaslavsky {
        let (m, d) = (md[0], md[1]);
        r.field("m", m).field("d", d).field("regions", zaslavsky_count(m, d).to_string());
    } else if a.regions {
        let net = load_network(need_input(a)?)?;
        let found = enumerate_nonempty_patterns(&net, a.slack, a.max_neurons)?;
        r.field("neurons", net.num_relu_neurons()).field("regions", found.len());
        if net.hidden_layers().len() == 1 {
            let gp = arrangement_in_general_position(&net, DEFAULT_RANK_TOL)?;
            r.field("general_position", gp);
            if gp {
                let expected = zaslavsky_count(net.num_relu_neurons() as u32, net.input_dim() as u32);
                r.field("expected", expected.to_string());
            }
        }
        let patterns: Vec<_> = found
            .iter()
            .map(|(p, w)| serde_json::json!({ "active": ids(p.active.iter().copied()), "witness": w }))
            .collect();
        r.json_only("patterns", patterns);
    } else if let Some(point) = &a.general_position {
        let net = load_network(need_input(a)?)?;
        let (x, _) = read_point(point)?;
        let part = net.sign_partition(&x, DEFAULT_DEGENERACY_TOL)?;
        r.field("general_position", general_position_check(&net, &x, DEFAULT_RANK_TOL)?)
            .field("active", part.active.len())
            .field("inactive", part.strictly_inactive.len())
            .field("degenerate", ids(part.degenerate.iter().copied()));
    } else if let Some(point) = &a.stationarity {
        let spec = need_input(a)?;
        let ProblemKind::Surrogate { net, problem } = load_problem(spec)? else {
            bail!("stationarity analysis needs a surrogate spec");
        };
        let (x, mult) = read_point(point)?;
        let full = problem.box_as_constraints();
        let rep = equivalence_roundtrip(&net, &full, &x, mult.as_ref(), &StationarityTol::default())?;
        let s = &rep.strong.residuals;
        let e = &rep.embedded.residuals;
        r.field("general_position", rep.general_position)
            .field("strong", rep.strong.accepted)
            .field("embedded", rep.embedded.accepted)
            .field("agree", rep.agree)
            .field("multipliers_estimated", rep.strong.estimated)
            .field("kappa_residual", rep.kappa.as_ref().map(|k| k.identity_residual))
            .line(format!("{:<28}{:>12}", "residual", "value"))
            .line(format!("{:<28}{:>12.3e}", "strong feasibility", s.feasibility))
            .line(format!("{:<28}{:>12.3e}", "strong complementarity", s.mu_complementarity))
            .line(format!("{:<28}{:>12.3e}", "strong input gradient", s.input_gradient))
            .line(format!("{:<28}{:>12.3e}", "strong hidden gradient", s.hidden_gradient.max(s.last_gradient)))
            .line(format!("{:<28}{:>12.3e}", "strong sign conditions", s.strict_signs.max(s.biactive_signs)))
            .line(format!("{:<28}{:>12.3e}", "embedded primal", e.primal))
            .line(format!("{:<28}{:>12.3e}", "embedded complementarity", e.complementarity))
            .line(format!("{:<28}{:>12.3e}", "embedded gradient", e.gradient))
            .json_only("report", &rep);
    }
    r.print(g.json);
    Ok(ExitCode::SUCCESS)
}
