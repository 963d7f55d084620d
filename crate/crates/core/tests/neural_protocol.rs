//! The neural policy client against in-process mock services.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::thread;

use asymreg_core::grammar::{parse_text, DerivationState, RuleId};
use asymreg_core::mcts::{run_search, MctsConfig};
use asymreg_core::objective::{Status, TargetSpec};
use asymreg_core::policy::{Endpoint, NeuralPolicyClient, Policy, PolicyError, RandomPolicy};
use asymreg_core::rational::Condition;
use serde_json::{json, Value};

/// Serves one connection, answering each request line with `reply`; `None`
/// closes the connection.
fn mock<F>(reply: F) -> Endpoint
where
    F: Fn(&Value) -> Option<String> + Send + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        serve(stream, reply);
    });
    Endpoint::Tcp(addr.to_string())
}

fn serve<F: Fn(&Value) -> Option<String>>(stream: TcpStream, reply: F) {
    stream.set_nodelay(true).unwrap();
    let mut writer = stream.try_clone().unwrap();
    for line in BufReader::new(stream).lines() {
        let Ok(line) = line else { return };
        let req: Value = serde_json::from_str(&line).unwrap();
        if req["op"] == "ping" {
            writer.write_all(b"{\"op\":\"pong\"}\n").unwrap();
            continue;
        }
        match reply(&req) {
            Some(r) => writer.write_all(format!("{r}\n").as_bytes()).unwrap(),
            None => return,
        }
    }
}

fn uniform(req: &Value) -> Option<String> {
    Some(json!({"id": req["id"], "probs": vec![1.0 / 9.0; 9]}).to_string())
}

fn rules(ids: &[u8]) -> Vec<RuleId> {
    ids.iter().map(|&i| RuleId::new(i).unwrap()).collect()
}

#[test]
fn ping_pong() {
    let client = NeuralPolicyClient::connect(&mock(uniform)).unwrap();
    client.ping().unwrap();
}

#[test]
fn soak_of_a_thousand_ordered_requests() {
    let ep = mock(|req| {
        let id = req["id"].as_u64().unwrap();
        let n = req["rules"].as_array().unwrap().len();
        let mut probs = [0.0; 9];
        probs[(id as usize + n) % 9] = 1.0;
        Some(json!({"id": id, "probs": probs}).to_string())
    });
    let client = NeuralPolicyClient::connect(&ep).unwrap();
    let c = Condition::new(-1, 2);
    for i in 0..1000u64 {
        let prefix = rules(&[0, 5, 7][..(i % 3) as usize]);
        let probs = client.query(&prefix, c).unwrap();
        let hot = (i as usize + prefix.len()) % 9;
        assert_eq!(probs[hot], 1.0, "request {i}");
        assert_eq!(probs.iter().sum::<f64>(), 1.0);
    }
}

#[test]
fn request_carries_rules_and_condition() {
    let ep = mock(|req| {
        assert_eq!(req["rules"], json!([0, 1, 5]));
        assert_eq!((req["c0"].as_i64(), req["cinf"].as_i64()), (Some(-3), Some(4)));
        uniform(req)
    });
    let client = NeuralPolicyClient::connect(&ep).unwrap();
    client.query(&rules(&[0, 1, 5]), Condition::new(-3, 4)).unwrap();
}

#[test]
fn uniform_service_matches_random_policy() {
    let client = NeuralPolicyClient::connect(&mock(uniform)).unwrap();
    let c = Condition::new(0, 0);
    for prefix in [vec![], rules(&[0]), rules(&[0, 1]), rules(&[0, 1, 5])] {
        let state = DerivationState::from_prefix(&prefix, 100).unwrap();
        let a = client.next_distribution(&state, c).unwrap();
        let b = RandomPolicy.next_distribution(&state, c).unwrap();
        for (p, q) in a.masked.iter().zip(&b.masked) {
            assert!((p - q).abs() < 1e-12);
        }
    }
}

#[test]
fn delta_on_an_invalid_rule_falls_back_to_uniform() {
    let ep = mock(|req| {
        let mut probs = [0.0; 9];
        probs[7] = 1.0;
        Some(json!({"id": req["id"], "probs": probs}).to_string())
    });
    let client = NeuralPolicyClient::connect(&ep).unwrap();
    let state = DerivationState::from_prefix(&rules(&[0]), 100).unwrap();
    let d = client.next_distribution(&state, Condition::new(0, 0)).unwrap();
    for r in 1..=5 {
        assert!((d.masked[r] - 0.2).abs() < 1e-12);
    }
    assert_eq!(d.masked[7], 0.0);
    assert!(d.fallback);
}

#[test]
fn malformed_replies_are_protocol_errors() {
    let cases: Vec<fn(&Value) -> Option<String>> = vec![
        |req| Some(json!({"id": req["id"].as_u64().unwrap() + 1, "probs": vec![1.0; 9]}).to_string()),
        |req| Some(json!({"id": req["id"], "error": "model not loaded"}).to_string()),
        |req| Some(json!({"id": req["id"], "probs": vec![1.0; 8]}).to_string()),
        |req| Some(json!({"id": req["id"], "probs": [1, 1, 1, 1, -1, 1, 1, 1, 1]}).to_string()),
        |_| Some("not json".to_string()),
    ];
    for reply in cases {
        let client = NeuralPolicyClient::connect(&mock(reply)).unwrap();
        let err = client.query(&[], Condition::new(0, 0)).unwrap_err();
        assert!(matches!(err, PolicyError::Protocol(_)), "{err:?}");
    }
}

#[test]
fn closed_service_is_unavailable() {
    let client = NeuralPolicyClient::connect(&mock(|_| None)).unwrap();
    let err = client.query(&[], Condition::new(0, 0)).unwrap_err();
    assert!(matches!(err, PolicyError::ServiceUnavailable(_)));

    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    let err = NeuralPolicyClient::connect(&Endpoint::Tcp(port.to_string())).unwrap_err();
    assert!(matches!(err, PolicyError::ServiceUnavailable(_)));
}

#[test]
fn search_over_the_wire() {
    let client = NeuralPolicyClient::connect(&mock(uniform)).unwrap();
    let target = TargetSpec::new(parse_text("x").unwrap()).unwrap();
    let out = run_search(&target, &client, &MctsConfig::default()).unwrap();
    assert_eq!(out.report.status, Status::Solved);
}

#[test]
fn service_dying_mid_search_aborts_with_partial_stats() {
    let ep = mock(|req| (req["id"].as_u64().unwrap() < 20).then(|| uniform(req).unwrap()));
    let client = NeuralPolicyClient::connect(&ep).unwrap();
    let target = TargetSpec::new(parse_text("x * x + 1").unwrap()).unwrap();
    let fail = run_search(&target, &client, &MctsConfig::default()).unwrap_err();
    assert!(matches!(fail.error, PolicyError::ServiceUnavailable(_)));
    assert!(fail.stats.simulations < 500);
}

#[test]
fn stdio_child_process() {
    let script = r#"
import json, sys
for line in sys.stdin:
    req = json.loads(line)
    if req.get("op") == "ping":
        print(json.dumps({"op": "pong"}), flush=True)
    else:
        print(json.dumps({"id": req["id"], "probs": [1.0] * 9}), flush=True)
"#;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("svc.py");
    std::fs::write(&path, script).unwrap();
    let ep: Endpoint = format!("stdio:python3 {}", path.display()).parse().unwrap();
    let client = match NeuralPolicyClient::connect(&ep) {
        Ok(c) => c,
        Err(e) => panic!("spawning python3 failed: {e}"),
    };
    client.ping().unwrap();
    for _ in 0..50 {
        assert_eq!(client.query(&rules(&[0]), Condition::new(1, 1)).unwrap(), [1.0; 9]);
    }
}
