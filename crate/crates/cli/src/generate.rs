use std::process::ExitCode;

use anyhow::{Context, Result};
use rand::Rng;
use surropt::io::save_network;
use surropt::nn::random::{random_network, seeded_rng};
use surropt::Activation;

use crate::report::Report;
use crate::{ActivationArg, GenerateArgs, Global};

pub fn run(g: &Global, a: &GenerateArgs) -> Result<ExitCode> {
    let act = match a.activation {
        ActivationArg::Relu => Activation::Relu,
        ActivationArg::Swish => Activation::Swish { beta: a.beta },
    };
    let mut rng = seeded_rng(g.seed);
    let net = random_network(&mut rng, a.inputs, &a.hidden, a.outputs, act)?;
    save_network(&net, &a.output).with_context(|| format!("writing {}", a.output.display()))?;

    let mut r = Report::new();
    r.field("network", &a.output).field("parameters", parameter_count(&net));
    if let (Some(n), Some(path)) = (a.samples, &a.data) {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
        let header: Vec<String> = (0..a.inputs)
            .map(|j| format!("x{j}"))
            .chain((0..a.outputs).map(|k| format!("y{k}")))
            .collect();
        w.write_record(&header)?;
        for _ in 0..n {
            let x: Vec<f64> = (0..a.inputs).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let y = net.forward(&x)?;
            w.write_record(x.iter().chain(&y).map(f64::to_string))?;
        }
        w.flush()?;
        r.field("data", path).field("samples", n);
    }
    r.print(g.json);
    Ok(ExitCode::SUCCESS)
}

fn parameter_count(net: &surropt::Network) -> usize {
    net.layers().iter().map(|l| l.weights().len() + l.bias().len()).sum()
}
