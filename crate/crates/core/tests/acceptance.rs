//! End-to-end acceptance checks: each test prints one PASS/FAIL line for a
//! top-level behavioral requirement of the toolkit.

use std::collections::BTreeMap;
use std::time::Instant;

use saczyzzyva::baselines::ProtocolVariant;
use saczyzzyva::feasibility::{brute_force_feasibility, is_feasible, HybridSystem};
use saczyzzyva::harness::{check_invariants, compute_metrics};
use saczyzzyva::simnet::{self, Fault, Scenario, Script};
use saczyzzyva::transcript::{Event, Transcript};

fn verdict(criterion: &str, ok: bool) {
    println!("acceptance — {criterion}: {}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "acceptance criterion failed: {criterion}");
}

/// Crash the highest-numbered `count` replicas (never the primary, never a
/// trusted-counter holder under the default layout).
fn crash_tail(s: &mut Scenario, count: u32) {
    for r in s.n - count..s.n {
        s.faults.insert(r, Fault::Crashed { at: 0 });
    }
}

fn max_installed_view(t: &Transcript) -> u64 {
    t.records
        .iter()
        .filter_map(|r| match &r.event {
            Event::ViewInstalled { view, .. } => Some(*view),
            _ => None,
        })
        .max()
        .unwrap_or(0)
}

fn view_change_started(t: &Transcript) -> bool {
    t.records
        .iter()
        .any(|r| matches!(r.event, Event::ViewChangeStarted { .. }))
}

fn assert_safe(t: &Transcript, context: &str) -> bool {
    let violations = check_invariants(t);
    let unsafe_kinds: Vec<_> = violations
        .iter()
        .filter(|v| v.kind != "incomplete-workload")
        .collect();
    if !unsafe_kinds.is_empty() {
        eprintln!("{context}: {unsafe_kinds:?}");
    }
    unsafe_kinds.is_empty()
}

#[test]
fn criterion_1_crash_resilience() {
    let started = Instant::now();
    let mut ok = true;
    for f in 1..=3u32 {
        let scenario_start = Instant::now();

        let mut sac = Scenario::fault_free(ProtocolVariant::SacZyzzyva, f);
        sac.requests_per_client = 50;
        crash_tail(&mut sac, f);
        let t = simnet::run(&sac).unwrap();
        let m = compute_metrics(&t);
        ok &= m.completed == 50 && m.fallbacks == 0 && !view_change_started(&t);
        ok &= assert_safe(&t, "sac crash");

        let mut zyz = Scenario::fault_free(ProtocolVariant::Zyzzyva, f);
        zyz.requests_per_client = 50;
        crash_tail(&mut zyz, f);
        let t = simnet::run(&zyz).unwrap();
        let m = compute_metrics(&t);
        ok &= m.completed == 50 && m.fallbacks == 50;
        ok &= assert_safe(&t, "zyzzyva crash");

        let mut z5 = Scenario::fault_free(ProtocolVariant::Zyzzyva5, f);
        z5.requests_per_client = 50;
        crash_tail(&mut z5, f);
        let t = simnet::run(&z5).unwrap();
        let m = compute_metrics(&t);
        ok &= m.completed == 50 && m.fallbacks == 0;
        ok &= assert_safe(&t, "zyzzyva5 crash");

        ok &= scenario_start.elapsed().as_secs() < 10;
    }
    let _ = started;
    verdict(
        "1 crash resilience (50/50 requests, fallback exactly when the variant needs it)",
        ok,
    );
}

#[test]
fn criterion_2_fault_free_message_equality() {
    let mut counts = BTreeMap::new();
    for variant in [ProtocolVariant::SacZyzzyva, ProtocolVariant::Zyzzyva] {
        let mut s = Scenario::fault_free(variant, 1);
        s.requests_per_client = 50;
        let t = simnet::run(&s).unwrap();
        let m = compute_metrics(&t);
        let per: Vec<u64> = m.per_request.iter().map(|r| r.messages).collect();
        counts.insert(format!("{variant:?}"), per);
    }
    let n = 4u64;
    let expected = vec![2 * n + 1; 50];
    let ok = counts.values().all(|per| *per == expected);
    verdict("2 fault-free per-request message counts equal 2n+1 for both variants", ok);
}

#[test]
fn criterion_3_fallback_round_cost() {
    let t_client = 12u64;
    let one_way = 1u64;
    let median = |variant| {
        let mut s = Scenario::fault_free(variant, 1);
        s.t_client = t_client;
        s.faults.insert(3, Fault::Slow { extra: 30 });
        let t = simnet::run(&s).unwrap();
        compute_metrics(&t).median_latency.unwrap()
    };
    let sac = median(ProtocolVariant::SacZyzzyva);
    let zyz = median(ProtocolVariant::Zyzzyva);
    let ok = zyz >= sac + t_client + 2 * one_way;
    verdict(
        "3 one slow replica costs the fallback variant ≥ client timeout + two one-way delays",
        ok,
    );
}

/// The adversarial scenario families used for fuzzing: one Byzantine replica
/// per run (f = 1), primaries and backups, with and without counter misuse.
fn byzantine_scenarios(seed: u64) -> Vec<Scenario> {
    let mut out = Vec::new();
    let mut base = Scenario::fault_free(ProtocolVariant::SacZyzzyva, 1);
    base.seed = seed;
    base.expect_all_complete = false;
    base.time_bound = 60_000;

    // Fuzzing primary: drops, delays, duplicates, replays, counter burns.
    let mut s = base.clone();
    s.faults.insert(
        0,
        Fault::ByzantinePartial { script: Script::Fuzzer { seed: seed.wrapping_mul(31) } },
    );
    out.push(s);

    // Fuzzing backup without a trusted counter.
    let mut s = base.clone();
    s.faults.insert(
        3,
        Fault::ByzantineFull { script: Script::Fuzzer { seed: seed.wrapping_mul(37) } },
    );
    out.push(s);

    // Equivocating primary: mismatched ordering certificates.
    let mut s = base.clone();
    s.faults.insert(0, Fault::ByzantinePartial { script: Script::Equivocate });
    out.push(s);

    // Byzantine next-primary withholding the new-view announcement.
    let mut s = base.clone();
    s.faults.insert(1, Fault::ByzantinePartial { script: Script::StaleNewView });
    out.push(s);

    // Byzantine next-primary splitting view confirmations.
    let mut s = base.clone();
    s.faults.insert(1, Fault::ByzantinePartial { script: Script::SplitViewConfirm });
    out.push(s);
    out
}

#[test]
fn criterion_4_safety_under_adversarial_schedules() {
    let started = Instant::now();
    let mut runs = 0u32;
    let mut ok = true;
    let mut seed = 0u64;
    'outer: loop {
        for scenario in byzantine_scenarios(seed) {
            let t = simnet::run(&scenario).unwrap();
            ok &= assert_safe(&t, &format!("fuzz seed {seed}"));
            runs += 1;
            if runs >= 200 {
                break 'outer;
            }
        }
        seed += 1;
    }
    ok &= started.elapsed().as_secs() < 300;
    verdict("4 200 adversarial runs with a Byzantine replica, zero safety violations", ok);
}

/// Two staggered primary crashes: the first forces a view change, and the
/// second primary is dead on arrival, forcing another.
fn double_view_change(seed: u64) -> Scenario {
    let mut s = Scenario::fault_free(ProtocolVariant::SacZyzzyva, 2);
    s.n_tmc = 3;
    s.seed = seed;
    s.delay.jitter = 1;
    s.time_bound = 300_000;
    s.faults.insert(1, Fault::Crashed { at: 0 });
    s.faults.insert(0, Fault::Crashed { at: 10 });
    s
}

#[test]
fn criterion_5_completed_requests_survive_view_changes() {
    let mut ok = true;
    for seed in 0..50u64 {
        let t = simnet::run(&double_view_change(seed)).unwrap();
        ok &= max_installed_view(&t) >= 2;
        // Every request completed before an install must appear in it.
        let mut completed: Vec<(u32, u64)> = Vec::new();
        for r in &t.records {
            match &r.event {
                Event::RequestCompleted { client, request_id, .. } => {
                    completed.push((*client, *request_id));
                }
                Event::ViewInstalled { history, .. } => {
                    for (c, id) in &completed {
                        ok &= history.iter().any(|h| h.client == *c && h.request_id == *id);
                    }
                }
                _ => {}
            }
        }
        ok &= assert_safe(&t, &format!("view-change seed {seed}"));
        ok &= compute_metrics(&t).completed == 10;
    }
    verdict("5 across 50 double-view-change runs, completed requests appear in every later installed history", ok);
}

#[test]
fn criterion_6_liveness_across_fault_scenarios() {
    let mut scenarios: Vec<Scenario> = Vec::new();
    for f in 1..=3u32 {
        for variant in
            [ProtocolVariant::SacZyzzyva, ProtocolVariant::Zyzzyva, ProtocolVariant::Zyzzyva5]
        {
            let mut s = Scenario::fault_free(variant, f);
            crash_tail(&mut s, f);
            scenarios.push(s);
        }
    }
    for variant in [ProtocolVariant::SacZyzzyva, ProtocolVariant::Zyzzyva] {
        let mut s = Scenario::fault_free(variant, 1);
        s.faults.insert(3, Fault::Slow { extra: 30 });
        scenarios.push(s);
    }
    for seed in 0..3 {
        scenarios.extend(byzantine_scenarios(seed));
        scenarios.push(double_view_change(seed));
    }
    let mut ok = true;
    for (i, s) in scenarios.iter().enumerate() {
        let t = simnet::run(s).unwrap();
        let m = compute_metrics(&t);
        let expected = (s.n_clients * s.requests_per_client) as usize;
        if m.completed != expected {
            eprintln!("scenario {i}: {}/{} requests completed", m.completed, expected);
            ok = false;
        }
    }
    verdict("6 every correct client's whole workload completes in every ≤f-fault scenario", ok);
}

#[test]
fn criterion_7_feasibility_oracle_equivalence() {
    let started = Instant::now();
    let mut ok = true;
    for n in 0..=9u32 {
        for b in 0..=n {
            for f in 0..=n {
                let sys = HybridSystem { n, b, f };
                let closed = is_feasible(sys);
                let brute = brute_force_feasibility(sys, None).unwrap().feasible;
                if closed != brute {
                    eprintln!("mismatch at n={n} b={b} f={f}: closed {closed}, brute {brute}");
                    ok = false;
                }
            }
        }
    }
    ok &= started.elapsed().as_secs() < 60;
    verdict("7 closed-form feasibility matches exhaustive quorum search for all n ≤ 9", ok);
}

#[test]
fn criterion_8_checkpoint_garbage_collection() {
    let mut s = Scenario::fault_free(ProtocolVariant::SacZyzzyva, 1);
    s.requests_per_client = 25;
    s.checkpoint_interval = 10;
    let (t, replicas) = simnet::run_with_replicas(&s).unwrap();
    let mut stable_per_replica = BTreeMap::new();
    for r in &t.records {
        if let Event::CheckpointStable { replica, .. } = r.event {
            *stable_per_replica.entry(replica).or_insert(0u32) += 1;
        }
    }
    let mut ok = (0..s.n).all(|r| stable_per_replica.get(&r) == Some(&2));
    for r in &replicas {
        ok &= r.stable_checkpoint.as_ref().is_some_and(|c| c.last_request == 20);
        // Everything at or below the stable checkpoint has been discarded.
        ok &= r.earliest_buffered_order().is_some_and(|(_, c)| c > 20);
    }
    ok &= assert_safe(&t, "checkpoint run");
    verdict("8 a 25-request run stabilizes exactly 2 checkpoints and discards ordered slots below them", ok);
}

#[test]
fn criterion_9_checker_catches_lowered_completion_threshold() {
    let mut caught = false;
    for seed in 0..200u64 {
        let mut s = Scenario::fault_free(ProtocolVariant::SacZyzzyva, 1);
        s.seed = seed;
        s.completion_threshold_override = Some((s.f + 1) as usize);
        s.expect_all_complete = false;
        let t = simnet::run(&s).unwrap();
        if check_invariants(&t)
            .iter()
            .any(|v| v.kind == "sub-quorum-completion")
        {
            caught = true;
            break;
        }
    }
    verdict("9 invariant checker flags a completion threshold lowered to f+1", caught);
}
