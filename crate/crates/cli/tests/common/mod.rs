#![allow(dead_code)]

use pliflows::config::*;
use pliflows::{Command, ExperimentConfig};

/// One small, fast config per command, all writing under `prefix`.
pub fn small_configs(prefix: &str) -> Vec<ExperimentConfig> {
    let mut out = Vec::new();

    let mut c = ExperimentConfig::new(Command::Flow);
    c.flow.k0 = Some(vec![vec![2.0]]);
    c.flow.t_max = 20.0;
    c.flow.samples = 50;
    c.flow.disturbance = Some(DisturbanceConfig {
        kind: DisturbanceKindConfig::Sinusoid { frequency: 1.0, phase: 0.0 },
        amplitude: 0.01,
        direction: None,
    });
    out.push(c);

    let mut c = ExperimentConfig::new(Command::Flow);
    c.problem = ProblemConfig::PlanarZero;
    c.flow.kind = FlowKindConfig::Natural;
    c.flow.k0 = Some(vec![vec![2.0, 0.5], vec![0.0, 1.5]]);
    c.flow.t_max = 10.0;
    c.flow.samples = 30;
    out.push(c);

    let mut c = ExperimentConfig::new(Command::Lffnn);
    c.problem = ProblemConfig::ScalarA { a: -1.0, b: 1.0, q: 1.0, r: 1.0 };
    c.flow.t_max = 10.0;
    c.flow.samples = 40;
    c.flow.hidden = vec![3];
    out.push(c);

    let mut c = ExperimentConfig::new(Command::Pli);
    c.pli.points = 60;
    out.push(c);

    let mut c = ExperimentConfig::new(Command::Pli);
    c.problem = ProblemConfig::PlanarZero;
    c.pli.sampler = Sampler::Random;
    c.pli.count = 30;
    c.pli.radius = 0.5;
    out.push(c);

    let mut c = ExperimentConfig::new(Command::Iss);
    c.iss.amplitudes = vec![0.0, 0.1];
    c.iss.phases = 2;
    c.iss.random_inits = 2;
    c.iss.horizon = Some(20.0);
    c.iss.samples = 50;
    out.push(c);

    let mut c = ExperimentConfig::new(Command::Iss);
    c.problem = ProblemConfig::ScalarA { a: -1.0, b: 1.0, q: 1.0, r: 1.0 };
    c.iss.kind = FlowKindConfig::Factored;
    c.iss.amplitudes = vec![0.0, 0.05];
    c.iss.phases = 1;
    c.iss.factored_inits = Some(vec![vec![vec![vec![1.0], vec![0.5]], vec![vec![1.0, 0.5]]]]);
    c.iss.horizon = Some(20.0);
    c.iss.samples = 50;
    out.push(c);

    let mut c = ExperimentConfig::new(Command::Riccati);
    c.problem = ProblemConfig::PlanarZero;
    out.push(c);

    let mut c = ExperimentConfig::new(Command::Portrait);
    c.problem = ProblemConfig::ScalarA { a: 1.0, b: 1.0, q: 1.0, r: 1.0 };
    c.portrait.n1 = 11;
    c.portrait.n2 = 11;
    out.push(c);

    for (i, c) in out.iter_mut().enumerate() {
        c.out = format!("{prefix}/{}_{i}", c.command.name());
    }
    out
}
