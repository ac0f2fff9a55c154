mod common;

use tdse_core::ansatz::{init_params, FastNet, SystemSpec};
use tdse_core::autodiff::{ParamGradient, WaveProgram};
use tdse_core::objective::{HamiltonianKind, LossWeights};
use tdse_core::oracles::AnalyticState;
use tdse_core::sampler::SamplerConfig;
use tdse_core::trainer::{
    adam_stage, clip_gradient, lbfgs_round, lbfgs_stage, learning_rate, partition_time, pretrain_sequence,
    AdamConfig, Evaluation, Lbfgs, LbfgsConfig, LossTerms, NetworkObjective, PiecewiseSolution, Problem,
    StageObjective, TimeSchedule, TrainConfig, TrainingLog, LOG_HEADER,
};
use tdse_core::Error;

/// `sum_i c_i (x_i - x*_i)^2` with a fixed batch.
struct Bowl {
    target: Vec<f64>,
    curv: Vec<f64>,
    evals: usize,
    refreshes: usize,
}

impl Bowl {
    fn new(n: usize, spread: f64) -> Self {
        Self {
            target: (0..n).map(|i| (i as f64 * 0.7).sin()).collect(),
            curv: (0..n).map(|i| 1.0 + spread * i as f64 / (n - 1) as f64).collect(),
            evals: 0,
            refreshes: 0,
        }
    }

    fn dist(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

impl StageObjective for Bowl {
    fn refresh(&mut self, _: &[f64], _: bool) -> tdse_core::Result<f64> {
        self.refreshes += 1;
        Ok(1.0)
    }

    fn evaluate(&mut self, x: &[f64]) -> tdse_core::Result<Evaluation> {
        self.evals += 1;
        let mut loss = 0.0;
        let mut g = Vec::with_capacity(x.len());
        for ((xi, ti), ci) in x.iter().zip(&self.target).zip(&self.curv) {
            loss += ci * (xi - ti).powi(2);
            g.push(2.0 * ci * (xi - ti));
        }
        Ok(Evaluation {
            loss,
            gradient: g,
            terms: LossTerms {
                residual: Some(loss),
                ..LossTerms::default()
            },
        })
    }
}

struct Flat;

impl StageObjective for Flat {
    fn refresh(&mut self, _: &[f64], _: bool) -> tdse_core::Result<f64> {
        Ok(1.0)
    }

    fn evaluate(&mut self, x: &[f64]) -> tdse_core::Result<Evaluation> {
        Ok(Evaluation {
            loss: 1.0,
            gradient: vec![0.0; x.len()],
            terms: LossTerms::default(),
        })
    }
}

struct Broken;

impl StageObjective for Broken {
    fn refresh(&mut self, _: &[f64], _: bool) -> tdse_core::Result<f64> {
        Ok(1.0)
    }

    fn evaluate(&mut self, x: &[f64]) -> tdse_core::Result<Evaluation> {
        Ok(Evaluation {
            loss: f64::NAN,
            gradient: vec![0.0; x.len()],
            terms: LossTerms::default(),
        })
    }
}

fn bowl_adam() -> AdamConfig {
    AdamConfig {
        steps: 5000,
        base_lr: 0.05,
        warmup_steps: 20,
        decay_rate: 0.5,
        decay_period: 500.0,
        ..AdamConfig::default()
    }
}

#[test]
fn adam_converges_on_a_bowl() {
    let mut b = Bowl::new(6, 9.0);
    let mut log = TrainingLog::default();
    let x = adam_stage(vec![0.0; 6], &bowl_adam(), 100.0, &mut b, &mut log, 0).unwrap();
    assert!(b.dist(&x) < 1e-4, "{}", b.dist(&x));
    assert_eq!(log.rows.len(), 5000);
    assert_eq!(b.refreshes, 5000);
}

#[test]
fn adam_leaves_params_alone_without_gradient() {
    let x0 = vec![0.3, -1.2, 4.0];
    let mut log = TrainingLog::default();
    let x = adam_stage(x0.clone(), &bowl_adam(), 1.0, &mut Flat, &mut log, 0).unwrap();
    for (a, b) in x.iter().zip(&x0) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn adam_aborts_on_non_finite_loss() {
    let mut log = TrainingLog::default();
    match adam_stage(vec![0.0; 2], &bowl_adam(), 1.0, &mut Broken, &mut log, 0) {
        Err(Error::NonFiniteLoss { step, .. }) => assert_eq!(step, 0),
        other => panic!("expected abort, got {other:?}"),
    }
}

#[test]
fn learning_rate_schedule() {
    let c = AdamConfig {
        base_lr: 0.01,
        warmup_steps: 50,
        decay_rate: 0.1,
        decay_period: 100.0,
        ..AdamConfig::default()
    };
    assert_eq!(learning_rate(&c, 50), 0.01);
    assert_eq!(learning_rate(&c, 25), 0.005);
    assert!((learning_rate(&c, 150) - 0.001).abs() < 1e-15);
    let (a, b) = (learning_rate(&c, 49), learning_rate(&c, 51));
    assert!((a - 0.01).abs() < 3e-4 && (b - 0.01).abs() < 3e-4);
}

#[test]
fn clipping_examples() {
    let g = ParamGradient(vec![3.0, 4.0]);
    assert_eq!(clip_gradient(g.clone(), 10.0), g);
    let c = clip_gradient(g.clone(), 2.5);
    assert!((c.norm() - 2.5).abs() < 1e-15);
    let cos = (c.0[0] * 3.0 + c.0[1] * 4.0) / (c.norm() * 5.0);
    assert!((cos - 1.0).abs() < 1e-14);
}

#[test]
fn lbfgs_solves_a_bowl_quickly() {
    let mut b = Bowl::new(8, 99.0);
    let mut opt = Lbfgs::new(10);
    let (x, s) = lbfgs_round(vec![0.0; 8], 30, &mut opt, &mut b, |_, _| {}).unwrap();
    assert!(b.dist(&x) < 1e-10, "{} after {} steps", b.dist(&x), s.steps);
    assert!(s.final_eval.loss < 1e-18);
}

#[test]
fn lbfgs_history_is_discarded_each_round() {
    let mut b = Bowl::new(5, 4.0);
    let mut opt = Lbfgs::new(3);
    let (x, _) = lbfgs_round(vec![2.0; 5], 3, &mut opt, &mut b, |_, _| {}).unwrap();
    assert!(opt.history_len() > 0 && opt.history_len() <= 3);
    let _ = lbfgs_round(x, 0, &mut opt, &mut b, |_, _| {}).unwrap();
    assert_eq!(opt.history_len(), 0);

    let mut log = TrainingLog::default();
    let cfg = LbfgsConfig {
        outer_rounds: 3,
        steps_per_round: 4,
        ..LbfgsConfig::default()
    };
    let mut b = Bowl::new(5, 4.0);
    let _ = lbfgs_stage(vec![2.0; 5], &cfg, &mut b, &mut log, 0).unwrap();
    assert_eq!(b.refreshes, 3);
}

#[test]
fn partition_examples() {
    let p = partition_time(std::f64::consts::PI, &TimeSchedule::Uniform { intervals: 1 }).unwrap();
    assert_eq!(p.intervals.len(), 1);
    assert!(p.intervals[0].first && p.intervals[0].end == std::f64::consts::PI);

    let p = partition_time(2.0, &TimeSchedule::Uniform { intervals: 2 }).unwrap();
    assert_eq!((p.intervals[0].start, p.intervals[0].end), (0.0, 1.05));
    assert_eq!((p.intervals[1].start, p.intervals[1].end), (1.0, 2.0));
    assert!(!p.intervals[1].first);

    let steps = vec![1.17, 0.4, 0.4, 1.17, 1.17, 0.4, 0.4, 1.17, 1.17, 1.17, 1.17, 2.04];
    let total: f64 = steps.iter().sum();
    let p = partition_time(total, &TimeSchedule::Adaptive { steps }).unwrap();
    assert!((p.intervals[0].end - p.intervals[0].core_end - 0.0585).abs() < 1e-12);
    assert!((p.intervals[1].end - p.intervals[1].core_end - 0.02).abs() < 1e-12);
    assert_eq!(p.intervals.last().unwrap().end, total);
    for w in p.intervals.windows(2) {
        assert_eq!(w[0].core_end, w[1].start);
    }

    assert!(partition_time(3.0, &TimeSchedule::Adaptive { steps: vec![1.0, 1.0] }).is_err());
    assert!(partition_time(3.0, &TimeSchedule::Uniform { intervals: 0 }).is_err());
}

#[test]
fn dispatch_uses_core_ranges() {
    let p = partition_time(2.0, &TimeSchedule::Uniform { intervals: 2 }).unwrap();
    assert_eq!(p.interval_for(0.0), 0);
    assert_eq!(p.interval_for(1.02), 1);
    assert_eq!(p.interval_for(0.999), 0);
    assert_eq!(p.interval_for(2.0), 1);
}

fn tiny_config() -> TrainConfig {
    TrainConfig {
        adam: AdamConfig {
            steps: 3,
            n_slices: 2,
            walkers_per_slice: 8,
            warmup_steps: 1,
            ..AdamConfig::default()
        },
        lbfgs: LbfgsConfig {
            outer_rounds: 1,
            steps_per_round: 2,
            ..LbfgsConfig::default()
        },
        sampler: SamplerConfig {
            burn_in: 20,
            thinning: 2,
            ..SamplerConfig::default()
        },
        initial_points: 8,
        boundary_points: 8,
        convergence_gate: 1e6,
        seed: 5,
        ..TrainConfig::default()
    }
}

#[test]
fn frozen_network_objective_is_bit_deterministic() {
    let h = HamiltonianKind::harmonic_oscillator();
    let spec = SystemSpec::new(1, 0, h.clone()).with_sizes(2, 6, 3, 1);
    let net = FastNet::new(&spec).unwrap();
    let p = init_params(&spec, 0).unwrap().data;
    let anchors = spec.anchors();
    let psi0 = AnalyticState::named("ho0").unwrap();
    let problem = Problem {
        program: &net,
        hamiltonian: &h,
        anchors: &anchors,
    };
    let cfg = tiny_config();
    let mut obj = NetworkObjective::new(
        problem,
        LossWeights::first_interval(),
        (0.0, 1.0),
        3,
        cfg.sampler.clone(),
        Some((&psi0, 16)),
        None,
        1,
    )
    .unwrap();
    obj.refresh(&p, true).unwrap();
    let mut q = p.clone();
    q[0] += 0.02;
    let a = obj.evaluate(&q).unwrap();
    let b = obj.evaluate(&q).unwrap();
    assert_eq!(a, b);
    assert!(a.terms.initial.is_some() && a.terms.value.is_none());
}

#[test]
fn pretraining_is_deterministic_and_logs_every_step() {
    let h = HamiltonianKind::harmonic_oscillator();
    let spec = SystemSpec::new(1, 0, h.clone()).with_sizes(2, 6, 3, 1);
    let net = FastNet::new(&spec).unwrap();
    let anchors = spec.anchors();
    let psi0 = AnalyticState::named("ho0").unwrap();
    let problem = Problem {
        program: &net,
        hamiltonian: &h,
        anchors: &anchors,
    };
    let plan = partition_time(1.0, &TimeSchedule::Uniform { intervals: 2 }).unwrap();
    let run = || {
        let mut log = TrainingLog::default();
        let mut seen = 0;
        let out = pretrain_sequence(
            problem,
            &plan,
            &psi0,
            &tiny_config(),
            init_params(&spec, 0).unwrap().data,
            vec![],
            &mut log,
            |_| {
                seen += 1;
                Ok(())
            },
        )
        .unwrap();
        assert_eq!(seen, 2);
        (out, log)
    };
    let (a, la) = run();
    let (b, _) = run();
    assert!(a.failure.is_none());
    assert_eq!(a.intervals.len(), 2);
    assert_eq!(a.intervals[1].params, b.intervals[1].params);
    assert!(a.intervals[0].penalties.is_none() && a.intervals[1].penalties.is_some());
    let csv = la.to_csv();
    assert!(csv.starts_with(LOG_HEADER));
    assert!(la.rows.iter().filter(|r| r.stage == "adam").count() == 6);

    let pw = PiecewiseSolution {
        program: &net,
        plan: plan.clone(),
        params: a.intervals.iter().map(|t| t.params.clone()).collect(),
    };
    let coords = ndarray::Array2::from_shape_vec((2, 1), vec![0.3, 0.3]).unwrap();
    let v = pw.psi(&coords, &[0.2, 0.9]).unwrap();
    let direct = tdse_core::autodiff::psi_values(&net, &a.intervals[1].params, &coords, &[0.2, 0.9]).unwrap();
    assert_eq!(v[1], direct[1]);
    assert_ne!(v[0], direct[0]);

    // resuming after the first interval reproduces the second
    let mut log = TrainingLog::default();
    let resumed = pretrain_sequence(
        problem,
        &plan,
        &psi0,
        &tiny_config(),
        init_params(&spec, 0).unwrap().data,
        vec![a.intervals[0].clone()],
        &mut log,
        |_| Ok(()),
    )
    .unwrap();
    assert_eq!(resumed.intervals[1].params, a.intervals[1].params);
}

#[test]
fn gate_failure_returns_completed_prefix() {
    let h = HamiltonianKind::harmonic_oscillator();
    let spec = SystemSpec::new(1, 0, h.clone()).with_sizes(2, 6, 3, 1);
    let net = FastNet::new(&spec).unwrap();
    let anchors = spec.anchors();
    let psi0 = AnalyticState::named("ho0").unwrap();
    let problem = Problem {
        program: &net,
        hamiltonian: &h,
        anchors: &anchors,
    };
    let plan = partition_time(1.0, &TimeSchedule::Uniform { intervals: 2 }).unwrap();
    let mut cfg = tiny_config();
    cfg.convergence_gate = 1e-30;
    let mut log = TrainingLog::default();
    let out = pretrain_sequence(problem, &plan, &psi0, &cfg, init_params(&spec, 0).unwrap().data, vec![], &mut log, |_| Ok(()))
        .unwrap();
    assert!(out.intervals.is_empty());
    assert!(out.failure.unwrap().contains("interval 0"));
}

#[test]
fn oracle_warm_start_has_no_boundary_penalty() {
    let s = AnalyticState::named("ho01").unwrap();
    let prog = s.program();
    let coords = ndarray::Array2::from_shape_vec((4, 1), vec![-1.0, 0.1, 0.5, 2.0]).unwrap();
    let bd = tdse_core::objective::BoundaryBatch::from_network(&prog, &[], coords, 0.7).unwrap();
    let p = tdse_core::objective::continuity_penalties(&prog, &[], &bd).unwrap();
    assert_eq!((p.value, p.time, p.space), (0.0, 0.0, 0.0));
    assert_eq!(prog.n_params(), 0);
}

#[test]
fn config_validation() {
    let mut c = TrainConfig::default();
    assert!(c.validate().is_ok());
    c.weights_first.lambda_r = -1.0;
    assert!(c.validate().is_err());
    let mut c = TrainConfig::default();
    c.clip_threshold = 0.0;
    assert!(c.validate().is_err());
    let json = serde_json::to_string(&TrainConfig::default()).unwrap();
    let back: TrainConfig = serde_json::from_str(&json).unwrap();
    assert_eq!(back, TrainConfig::default());
    assert!(serde_json::from_str::<TrainConfig>(r#"{"bogus": 1}"#).is_err());
}
