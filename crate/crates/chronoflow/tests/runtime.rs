//! Pipeline construction and scheduler behavior under live execution:
//! lifecycle errors, fan-out isolation, delivery policies with back-pressure,
//! drain accounting, and deterministic-lane reproducibility.

mod support;

use chronoflow::synth::{Collector, Generator};
use chronoflow::time::{TimeSpan, Timestamp};
use chronoflow::{
    ops, Component, Composite, DeliveryPolicy, EdgeOptions, Envelope, GraphError, Payload,
    Pipeline, PortRegistry, SchedulerConfig,
};
use std::sync::{Arc, Mutex};
use std::time::Duration;
use support::ts;

fn quick_config() -> SchedulerConfig {
    let mut config = SchedulerConfig::default().with_workers(2);
    config.finalize_timeout = Duration::from_secs(10);
    config
}

fn gen_i64(count: u64) -> Generator<i64, impl FnMut(u64) -> i64 + Send + Clone> {
    Generator::new(count, ts(0), TimeSpan::from_micros(1), |i| i as i64)
}

#[test]
fn generator_to_sink_delivers_everything() {
    let mut p = Pipeline::with_config(quick_config());
    let src = p.add("gen", gen_i64(100)).unwrap();
    let (collector, seen) = Collector::<i64>::new();
    let sink = p.add("sink", collector).unwrap();
    p.connect(
        &src.output::<i64>(0).unwrap(),
        &sink.input::<i64>(0).unwrap(),
        DeliveryPolicy::Unlimited,
    )
    .unwrap();
    p.run(None).unwrap();
    let report = p.take_handle().unwrap().join().unwrap();

    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 100);
    let values: Vec<i64> = seen.iter().map(|(_, v)| *v).collect();
    assert_eq!(values, (0..100).collect::<Vec<i64>>());
    // envelopes are dense and strictly increasing in originating time
    for (idx, (env, _)) in seen.iter().enumerate() {
        assert_eq!(env.sequence, idx as u64);
        assert!(env.creation >= env.originating);
        if idx > 0 {
            assert!(env.originating > seen[idx - 1].0.originating);
        }
    }
    let edge = report.edge_between("gen", "sink").unwrap();
    assert_eq!((edge.posted, edge.delivered, edge.dropped), (100, 100, 0));
}

#[test]
fn duplicate_component_names_are_rejected() {
    let mut p = Pipeline::new();
    p.add("gen", gen_i64(1)).unwrap();
    match p.add("gen", gen_i64(1)) {
        Err(GraphError::DuplicateName(name)) => assert_eq!(name, "gen"),
        Ok(_) => panic!("duplicate name was accepted"),
        Err(other) => panic!("expected DuplicateName, got {other:?}"),
    }
}

#[test]
fn construction_after_run_is_rejected() {
    let mut p = Pipeline::with_config(quick_config());
    let src = p.add("gen", gen_i64(1)).unwrap();
    let (collector, _seen) = Collector::<i64>::new();
    let sink = p.add("sink", collector).unwrap();
    p.connect(
        &src.output::<i64>(0).unwrap(),
        &sink.input::<i64>(0).unwrap(),
        DeliveryPolicy::Unlimited,
    )
    .unwrap();
    p.run(None).unwrap();
    assert!(matches!(
        p.add("late", gen_i64(1)),
        Err(GraphError::PipelineAlreadyStarted)
    ));
    p.take_handle().unwrap().join().unwrap();
}

#[test]
fn port_type_mismatch_is_rejected_dynamically() {
    let mut p = Pipeline::new();
    let src = p.add("gen", gen_i64(1)).unwrap();
    let (collector, _seen) = Collector::<String>::new();
    let sink = p.add("sink", collector).unwrap();
    match p.connect_dyn(
        &src.output_dyn(0).unwrap(),
        &sink.input_dyn(0).unwrap(),
        DeliveryPolicy::Unlimited,
    ) {
        Err(GraphError::TypeMismatch { emitter, receiver }) => {
            assert!(emitter.contains("i64"), "{emitter}");
            assert!(receiver.contains("String"), "{receiver}");
        }
        other => panic!("expected TypeMismatch, got {other:?}"),
    }
}

#[test]
fn unconnected_required_receiver_fails_validation() {
    let mut p = Pipeline::new();
    p.add("gen", gen_i64(1)).unwrap();
    let (collector, _seen) = Collector::<i64>::new();
    p.add("sink", collector).unwrap();
    match p.run(None) {
        Err(GraphError::ValidationFailed(msg)) => assert!(msg.contains("sink"), "{msg}"),
        Ok(_) => panic!("validation passed unexpectedly"),
        Err(other) => panic!("expected ValidationFailed, got {other:?}"),
    }
}

#[test]
fn fan_out_preserves_envelopes_and_isolates_payloads() {
    // one emitter feeding a mutating subscriber and a checking subscriber
    struct Mutator;
    impl Component for Mutator {
        fn register(&mut self, reg: &mut PortRegistry) {
            reg.input::<Vec<u8>>("in");
        }
        fn on_message(
            &mut self,
            _port: usize,
            _env: &Envelope,
            mut payload: Payload,
            _ctx: &mut chronoflow::Ctx<'_>,
        ) {
            let bytes = payload.try_mut::<Vec<u8>>().expect("deep copies are mutable");
            bytes.fill(0xAA);
        }
    }

    let mut p = Pipeline::with_config(quick_config());
    let src = p.add(
        "gen",
        Generator::new(50, ts(0), TimeSpan::from_micros(1), |i| vec![i as u8; 16]),
    )
    .unwrap();
    let out = src.output::<Vec<u8>>(0).unwrap();
    let mutator = p.add("mutator", Mutator).unwrap();
    let (collector, seen) = Collector::<Vec<u8>>::new();
    let checker = p.add("checker", collector).unwrap();
    p.connect(&out, &mutator.input::<Vec<u8>>(0).unwrap(), DeliveryPolicy::Unlimited)
        .unwrap();
    p.connect(&out, &checker.input::<Vec<u8>>(0).unwrap(), DeliveryPolicy::Unlimited)
        .unwrap();
    p.run(None).unwrap();
    p.take_handle().unwrap().join().unwrap();

    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 50);
    for (env, bytes) in seen.iter() {
        // the checker must observe pristine values no matter what the
        // mutator did to its own copy
        assert_eq!(bytes, &vec![env.sequence as u8; 16]);
    }
}

#[test]
fn zero_copy_edges_share_payloads() {
    struct Probe {
        owned: Arc<Mutex<Vec<bool>>>,
    }
    impl Component for Probe {
        fn register(&mut self, reg: &mut PortRegistry) {
            reg.input::<i64>("in");
        }
        fn on_message(
            &mut self,
            _port: usize,
            _env: &Envelope,
            payload: Payload,
            _ctx: &mut chronoflow::Ctx<'_>,
        ) {
            self.owned.lock().unwrap().push(payload.is_owned());
        }
    }

    let owned = Arc::new(Mutex::new(Vec::new()));
    let mut p = Pipeline::with_config(quick_config());
    let src = p.add("gen", gen_i64(3)).unwrap();
    let probe = p.add(
        "probe",
        Probe {
            owned: Arc::clone(&owned),
        },
    )
    .unwrap();
    p.connect_with(
        &src.output::<i64>(0).unwrap(),
        &probe.input::<i64>(0).unwrap(),
        DeliveryPolicy::Unlimited,
        EdgeOptions { zero_copy: true },
    )
    .unwrap();
    p.run(None).unwrap();
    p.take_handle().unwrap().join().unwrap();
    assert_eq!(owned.lock().unwrap().as_slice(), &[false, false, false]);
}

#[test]
fn latest_message_keeps_freshest_under_slow_consumer() {
    let mut p = Pipeline::with_config(quick_config());
    let src = p.add("gen", gen_i64(50)).unwrap();
    let (collector, seen) = Collector::<i64>::new();
    let sink = p.add("sink", collector.with_delay(Duration::from_millis(2))).unwrap();
    p.connect(
        &src.output::<i64>(0).unwrap(),
        &sink.input::<i64>(0).unwrap(),
        DeliveryPolicy::LatestMessage,
    )
    .unwrap();
    p.run(None).unwrap();
    let report = p.take_handle().unwrap().join().unwrap();

    let edge = report.edge_between("gen", "sink").unwrap();
    assert_eq!(edge.posted, 50);
    assert_eq!(edge.delivered + edge.dropped, 50);
    assert!(edge.queue_max <= 1, "queue_max {}", edge.queue_max);
    // the last message always survives
    let seen = seen.lock().unwrap();
    assert_eq!(seen.last().map(|(_, v)| *v), Some(49));
}

#[test]
fn throttle_is_lossless_with_bounded_queue() {
    for bound in [1usize, 4] {
        let mut p = Pipeline::with_config(quick_config());
        let src = p.add("gen", gen_i64(100)).unwrap();
        let (collector, seen) = Collector::<i64>::new();
        let sink = p
            .add("sink", collector.with_delay(Duration::from_millis(1)))
            .unwrap();
        p.connect(
            &src.output::<i64>(0).unwrap(),
            &sink.input::<i64>(0).unwrap(),
            DeliveryPolicy::Throttle(bound),
        )
        .unwrap();
        p.run(None).unwrap();
        let report = p.take_handle().unwrap().join().unwrap();

        let edge = report.edge_between("gen", "sink").unwrap();
        assert_eq!(
            (edge.posted, edge.delivered, edge.dropped),
            (100, 100, 0),
            "throttle({bound}) must be lossless"
        );
        assert!(
            edge.queue_max <= bound as u64,
            "throttle({bound}) queue_max {}",
            edge.queue_max
        );
        let values: Vec<i64> = seen.lock().unwrap().iter().map(|(_, v)| *v).collect();
        assert_eq!(values, (0..100).collect::<Vec<i64>>());
    }
}

#[test]
fn latency_constrained_drops_only_stale_messages() {
    // one source emits world times far in the past (simulated processing
    // delay of ~600ms), the other emits fresh times
    let now = Timestamp::wall_now();
    let stale_start = Timestamp::from_ns(now.as_ns() - 600 * 1_000_000);
    let fresh_start = now;

    let mut p = Pipeline::with_config(quick_config());
    let stale = p.add(
        "stale",
        Generator::new(20, stale_start, TimeSpan::from_ns(1), |i| i as i64),
    )
    .unwrap();
    let fresh = p.add(
        "fresh",
        Generator::new(20, fresh_start, TimeSpan::from_micros(1), |i| i as i64),
    )
    .unwrap();
    let (c1, seen_stale) = Collector::<i64>::new();
    let (c2, seen_fresh) = Collector::<i64>::new();
    let sink1 = p.add("sink_stale", c1).unwrap();
    let sink2 = p.add("sink_fresh", c2).unwrap();
    let policy = DeliveryPolicy::LatencyConstrained(TimeSpan::from_millis(500));
    p.connect(&stale.output::<i64>(0).unwrap(), &sink1.input::<i64>(0).unwrap(), policy)
        .unwrap();
    p.connect(&fresh.output::<i64>(0).unwrap(), &sink2.input::<i64>(0).unwrap(), policy)
        .unwrap();
    p.run(None).unwrap();
    let report = p.take_handle().unwrap().join().unwrap();

    assert_eq!(seen_stale.lock().unwrap().len(), 0, "stale messages dropped");
    assert_eq!(seen_fresh.lock().unwrap().len(), 20, "fresh messages kept");
    let edge = report.edge_between("stale", "sink_stale").unwrap();
    assert_eq!(edge.dropped, 20);
}

#[test]
fn map_handler_panic_drops_message_and_continues() {
    let mut p = Pipeline::with_config(quick_config());
    let src = p.add("gen", gen_i64(3)).unwrap();
    let doubled = ops::map(&mut p, "shaky", &src.output::<i64>(0).unwrap(), |v: &i64| {
        if *v == 1 {
            panic!("boom on item 1");
        }
        v * 2
    })
    .unwrap();
    let (collector, seen) = Collector::<i64>::new();
    let sink = p.add("sink", collector).unwrap();
    p.connect(&doubled, &sink.input::<i64>(0).unwrap(), DeliveryPolicy::Unlimited)
        .unwrap();
    p.run(None).unwrap();
    let handle = p.take_handle().unwrap();
    let report = handle.join().unwrap();

    let values: Vec<i64> = seen.lock().unwrap().iter().map(|(_, v)| *v).collect();
    assert_eq!(values, vec![0, 4]);
    let into_map = report.edge_between("gen", "shaky").unwrap();
    assert_eq!((into_map.delivered, into_map.dropped), (2, 1));
    assert_eq!(report.errors.len(), 1);
    assert!(report.errors[0].detail.contains("boom"));
}

#[test]
fn drain_times_out_on_stuck_component() {
    struct Stuck;
    impl Component for Stuck {
        fn register(&mut self, reg: &mut PortRegistry) {
            reg.input::<i64>("in");
        }
        fn on_message(
            &mut self,
            _port: usize,
            _env: &Envelope,
            _payload: Payload,
            _ctx: &mut chronoflow::Ctx<'_>,
        ) {
            std::thread::sleep(Duration::from_secs(600));
        }
    }

    let mut config = SchedulerConfig::default().with_workers(2);
    config.finalize_timeout = Duration::from_millis(300);
    let mut p = Pipeline::with_config(config);
    let src = p.add("gen", gen_i64(2)).unwrap();
    let sink = p.add("stuck", Stuck).unwrap();
    p.connect(
        &src.output::<i64>(0).unwrap(),
        &sink.input::<i64>(0).unwrap(),
        DeliveryPolicy::Unlimited,
    )
    .unwrap();
    p.run(None).unwrap();
    let result = p.take_handle().unwrap().join();
    assert!(result.is_err(), "stuck callback must surface as a timeout");
}

#[test]
fn feedback_cycle_drains_by_forced_close() {
    // kick → relay ⇄ echo; messages circulate until drain force-closes the
    // cycle and counts what was still in flight as dropped
    struct Relay {
        forwarded: u64,
        limit: u64,
    }
    impl Component for Relay {
        fn register(&mut self, reg: &mut PortRegistry) {
            reg.input::<i64>("kick");
            reg.input_optional::<i64>("back");
            reg.output::<i64>("out");
        }
        fn on_message(
            &mut self,
            _port: usize,
            env: &Envelope,
            payload: Payload,
            ctx: &mut chronoflow::Ctx<'_>,
        ) {
            if self.forwarded < self.limit {
                self.forwarded += 1;
                let bump = Timestamp::from_ns(env.originating.as_ns() + 1_000);
                ctx.post(0, bump, payload.into_value::<i64>() + 1);
            }
        }
    }
    struct Echo;
    impl Component for Echo {
        fn register(&mut self, reg: &mut PortRegistry) {
            reg.input::<i64>("in");
            reg.output::<i64>("out");
        }
        fn on_message(
            &mut self,
            _port: usize,
            env: &Envelope,
            payload: Payload,
            ctx: &mut chronoflow::Ctx<'_>,
        ) {
            let bump = Timestamp::from_ns(env.originating.as_ns() + 1_000);
            ctx.post(0, bump, payload.into_value::<i64>());
        }
    }

    let mut p = Pipeline::with_config(quick_config());
    let kick = p.add("kick", gen_i64(1)).unwrap();
    let relay = p.add("relay", Relay { forwarded: 0, limit: 100 }).unwrap();
    let echo = p.add("echo", Echo).unwrap();
    p.connect(
        &kick.output::<i64>(0).unwrap(),
        &relay.input::<i64>(0).unwrap(),
        DeliveryPolicy::Unlimited,
    )
    .unwrap();
    p.connect(
        &relay.output::<i64>(0).unwrap(),
        &echo.input::<i64>(0).unwrap(),
        DeliveryPolicy::Unlimited,
    )
    .unwrap();
    p.connect(
        &echo.output::<i64>(0).unwrap(),
        &relay.input::<i64>(1).unwrap(),
        DeliveryPolicy::Unlimited,
    )
    .unwrap();
    p.run(None).unwrap();
    let report = p.take_handle().unwrap().join().unwrap();
    // conservation holds on every edge even through the forced close
    for edge in &report.edges {
        assert_eq!(
            edge.posted,
            edge.delivered + edge.dropped,
            "edge {} -> {}",
            edge.from,
            edge.to
        );
    }
}

#[test]
fn early_stop_interrupts_an_endless_source() {
    let mut p = Pipeline::with_config(quick_config());
    let src = p.add(
        "gen",
        Generator::new(u64::MAX, ts(0), TimeSpan::from_micros(1), |i| i as i64)
            .paced(Duration::from_millis(1)),
    )
    .unwrap();
    let (collector, seen) = Collector::<i64>::new();
    let sink = p.add("sink", collector).unwrap();
    p.connect(
        &src.output::<i64>(0).unwrap(),
        &sink.input::<i64>(0).unwrap(),
        DeliveryPolicy::Unlimited,
    )
    .unwrap();
    p.run(None).unwrap();
    let handle = p.take_handle().unwrap();
    std::thread::sleep(Duration::from_millis(50));
    let report = handle.stop().unwrap();
    assert!(!seen.lock().unwrap().is_empty());
    for edge in &report.edges {
        assert_eq!(edge.posted, edge.delivered + edge.dropped);
    }
}

#[test]
fn deterministic_runs_are_bit_identical() {
    fn run_once() -> Vec<(Envelope, i64)> {
        let mut config = SchedulerConfig::default().deterministic();
        config.finalize_timeout = Duration::from_secs(10);
        let mut p = Pipeline::with_config(config);
        let src = p.add("gen", gen_i64(200)).unwrap();
        let mapped = ops::map(&mut p, "triple", &src.output::<i64>(0).unwrap(), |v: &i64| v * 3)
            .unwrap();
        let (collector, seen) = Collector::<i64>::new();
        let sink = p.add("sink", collector).unwrap();
        p.connect(&mapped, &sink.input::<i64>(0).unwrap(), DeliveryPolicy::Unlimited)
            .unwrap();
        p.run(None).unwrap();
        p.take_handle().unwrap().join().unwrap();
        let seen = seen.lock().unwrap();
        seen.clone()
    }

    let first = run_once();
    let second = run_once();
    assert_eq!(first.len(), 200);
    // envelopes compare bit-for-bit, creation timestamps included
    assert_eq!(first, second);
}

#[test]
fn composite_behaves_like_flat_graph() {
    fn flat() -> Vec<i64> {
        let mut p = Pipeline::with_config(SchedulerConfig::default().deterministic());
        let src = p.add("gen", gen_i64(20)).unwrap();
        let doubled = ops::map(&mut p, "double", &src.output::<i64>(0).unwrap(), |v: &i64| v * 2)
            .unwrap();
        let bumped = ops::map(&mut p, "bump", &doubled, |v: &i64| v + 1).unwrap();
        let (collector, seen) = Collector::<i64>::new();
        let sink = p.add("sink", collector).unwrap();
        p.connect(&bumped, &sink.input::<i64>(0).unwrap(), DeliveryPolicy::Unlimited)
            .unwrap();
        p.run(None).unwrap();
        p.take_handle().unwrap().join().unwrap();
        let seen = seen.lock().unwrap();
        seen.iter().map(|(_, v)| *v).collect()
    }

    fn nested() -> Vec<i64> {
        // inner pipeline: double → bump, exposed behind boundary ports
        let mut inner = Pipeline::new();
        let double = inner.add("double", chronoflow::ops::Map::new(|v: &i64| v * 2)).unwrap();
        let bumped = ops::map(
            &mut inner,
            "bump",
            &double.output::<i64>(0).unwrap(),
            |v: &i64| v + 1,
        )
        .unwrap();
        let composite = Composite::encapsulate(
            inner,
            vec![("in", double.input_dyn(0).unwrap())],
            vec![("out", bumped.erase())],
        )
        .unwrap();

        let mut p = Pipeline::with_config(SchedulerConfig::default().deterministic());
        let src = p.add("gen", gen_i64(20)).unwrap();
        let stage = p.add_composite("stage", composite).unwrap();
        let (collector, seen) = Collector::<i64>::new();
        let sink = p.add("sink", collector).unwrap();
        p.connect(
            &src.output::<i64>(0).unwrap(),
            &stage.input::<i64>(0).unwrap(),
            DeliveryPolicy::Unlimited,
        )
        .unwrap();
        p.connect(
            &stage.output::<i64>(0).unwrap(),
            &sink.input::<i64>(0).unwrap(),
            DeliveryPolicy::Unlimited,
        )
        .unwrap();
        p.run(None).unwrap();
        p.take_handle().unwrap().join().unwrap();
        let seen = seen.lock().unwrap();
        seen.iter().map(|(_, v)| *v).collect()
    }

    let expected: Vec<i64> = (0..20).map(|v| v * 2 + 1).collect();
    assert_eq!(flat(), expected);
    assert_eq!(nested(), expected);
}

#[test]
fn composite_boundary_errors() {
    // a boundary ref pointing at a port the inner pipeline does not have
    struct TwoOut;
    impl Component for TwoOut {
        fn register(&mut self, reg: &mut PortRegistry) {
            reg.input::<i64>("in");
            reg.output::<i64>("a");
            reg.output::<String>("b");
        }
    }

    let mut inner = Pipeline::new();
    let node = inner
        .add("double", chronoflow::ops::Map::new(|v: &i64| v * 2))
        .unwrap();
    let input = node.input_dyn(0).unwrap();

    let mut other = Pipeline::new();
    let foreign = other.add("wide", TwoOut).unwrap();
    // node 0 port 1 exists in `other` but not in `inner`
    let bogus = foreign.output_dyn(1).unwrap();
    match Composite::encapsulate(inner, vec![("in", input)], vec![("out", bogus)]) {
        Err(GraphError::TypeMismatch { .. }) => {}
        other => panic!("expected TypeMismatch, got {:?}", other.err()),
    }

    // encapsulating a pipeline that already started is rejected
    let mut started = Pipeline::with_config(quick_config());
    let src = started.add("gen", gen_i64(1)).unwrap();
    let (collector, _seen) = Collector::<i64>::new();
    let sink = started.add("sink", collector).unwrap();
    let out = src.output_dyn(0).unwrap();
    started
        .connect(
            &src.output::<i64>(0).unwrap(),
            &sink.input::<i64>(0).unwrap(),
            DeliveryPolicy::Unlimited,
        )
        .unwrap();
    started.run(None).unwrap();
    let result = Composite::encapsulate(started, vec![], vec![("out", out)]);
    assert!(matches!(result, Err(GraphError::InnerAlreadyStarted)));
}
