use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use formopt_agent::gateway::{
    augment_rule, bindings, render_prompt, Bindings, ChatClient, GatewayError, HttpChatClient, PromptKind, RetryPolicy,
    ERRORS, FIVE_ELEMENT, FORMULATE_ANCHOR, JUDGE_ANCHOR, ORIGINAL, OUTPUT, PROBLEM, SOLVER_CODE, SPEC_ANCHOR,
};
use proptest::prelude::*;

fn full_bindings(kind: PromptKind) -> Bindings {
    kind.placeholders().iter().map(|p| (p.to_string(), format!("<<{p}>>"))).collect()
}

#[test]
fn formulate_anchors() {
    let p = render_prompt(PromptKind::FormulateFiveElement, &bindings([(PROBLEM, "Pick items.")])).unwrap();
    assert!(p.contains(FORMULATE_ANCHOR));
    assert!(p.contains("Sets:"));
    assert!(p.contains("Pick items."));
    assert!(!p.contains("{PROBLEM DESCRIPTION}"));
}

#[test]
fn self_correct_anchors() {
    let p = render_prompt(PromptKind::SelfCorrect, &full_bindings(PromptKind::SelfCorrect)).unwrap();
    assert!(p.contains("The five-element is [Fill in True/False here]"));
    assert!(p.contains(JUDGE_ANCHOR));
    for ph in [PROBLEM, FIVE_ELEMENT, SOLVER_CODE, OUTPUT, ERRORS] {
        assert!(p.contains(&format!("<<{ph}>>")), "{ph}");
    }
}

#[test]
fn spec_anchors() {
    for kind in [PromptKind::SpecFromFiveElement, PromptKind::SpecFromProblem] {
        let p = render_prompt(kind, &full_bindings(kind)).unwrap();
        assert!(p.contains(SPEC_ANCHOR), "{kind}");
        assert!(p.contains("\"variables\""), "{kind} carries the schema");
        assert!(!p.contains(FORMULATE_ANCHOR) && !p.contains(JUDGE_ANCHOR));
    }
}

#[test]
fn augmentation_rules() {
    assert!(augment_rule(4).unwrap().contains("modify the constraints of this problem"));
    assert!(augment_rule(0).is_none() && augment_rule(8).is_none());
    for r in 1..=7 {
        let p = render_prompt(PromptKind::Augment(r), &bindings([(ORIGINAL, "Seed text.")])).unwrap();
        assert!(p.contains(augment_rule(r).unwrap()));
        assert!(p.contains("Seed text."));
    }
    assert_eq!(render_prompt(PromptKind::Augment(9), &bindings([(ORIGINAL, "x")])), Err(GatewayError::UnknownRule(9)));
}

#[test]
fn binding_errors() {
    assert!(matches!(
        render_prompt(PromptKind::SelfCorrect, &bindings([(PROBLEM, "x")])),
        Err(GatewayError::MissingPlaceholder(_))
    ));
    assert!(matches!(
        render_prompt(PromptKind::SpecFromProblem, &bindings([(PROBLEM, "x"), (OUTPUT, "y")])),
        Err(GatewayError::UnexpectedPlaceholder(_))
    ));
}

proptest! {
    #[test]
    fn bound_values_are_not_rescanned(value in "[{}a-zA-Z ]{0,40}") {
        let v = format!("{value}{{FIVE-Element}}");
        let p = render_prompt(PromptKind::FormulateFiveElement, &bindings([(PROBLEM, v.as_str())])).unwrap();
        prop_assert!(p.contains(&v));
    }
}

/// Serves one canned HTTP response per connection, recording request bodies.
fn serve(responses: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut len = 0;
            let mut auth = String::new();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization:") {
                    auth = line.trim().to_string();
                }
                if line == "\r\n" || line.is_empty() {
                    break;
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(format!("{auth}\n{}", String::from_utf8(buf).unwrap()));
            let mut stream = reader.into_inner();
            let reply = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    (format!("http://{addr}/v1"), seen)
}

fn completion(text: &str) -> String {
    serde_json::json!({"model": "served", "choices": [{"message": {"role": "assistant", "content": text}}],
        "usage": {"prompt_tokens": 10, "completion_tokens": 2}})
    .to_string()
}

fn fast() -> RetryPolicy {
    RetryPolicy { attempts: 3, base_delay: Duration::from_millis(5) }
}

#[test]
fn http_retries_server_errors_then_succeeds() {
    let (url, seen) = serve(vec![(500, "oops".into()), (500, "oops".into()), (200, completion("hello"))]);
    let client = HttpChatClient::new(&url, Some("k".into()), "m").unwrap().retry(fast());
    let ex = client.complete("the prompt", 0.0).unwrap();
    assert_eq!(ex.response.as_deref(), Some("hello"));
    assert_eq!(ex.attempts, 3);
    assert_eq!(ex.model, "served");
    assert_eq!(ex.completion_tokens, Some(2));
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 3);
    assert!(seen[0].starts_with("authorization: Bearer k") || seen[0].starts_with("Authorization: Bearer k"));
    let body: serde_json::Value = serde_json::from_str(seen[0].split_once('\n').unwrap().1).unwrap();
    assert_eq!(body["messages"][0]["content"], "the prompt");
    assert_eq!(body["temperature"], 0.0);
}

#[test]
fn http_auth_failure_is_immediate() {
    let (url, seen) = serve(vec![(401, "{}".into())]);
    let client = HttpChatClient::new(&url, None, "m").unwrap().retry(fast());
    assert_eq!(client.complete("p", 0.0), Err(GatewayError::AuthFailure(401)));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn http_client_errors_are_not_retried() {
    let (url, seen) = serve(vec![(400, "bad".into())]);
    let client = HttpChatClient::new(&url, None, "m").unwrap().retry(fast());
    assert!(matches!(client.complete("p", 0.0), Err(GatewayError::Transport { status: 400, .. })));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn http_unreachable_endpoint_fails() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let client = HttpChatClient::new(&format!("http://127.0.0.1:{port}"), None, "m").unwrap().retry(fast());
    assert!(client.complete("p", 0.0).is_err());
}
