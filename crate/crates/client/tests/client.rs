use std::time::Duration;

use branchbook_client::{Client, ClientError, CommandOutcome};
use branchbook_core::persistence::{load, ExportFormat};
use branchbook_core::protocol::{Command, Op};
use branchbook_core::telemetry::Event;
use branchbook_service::{AppState, NotebookHandle};
use futures::StreamExt;

async fn server(fixture: &str) -> String {
    let path = format!("{}/../../fixtures/{fixture}", env!("CARGO_MANIFEST_DIR"));
    let nb = load(&std::fs::read(path).unwrap()).unwrap();
    let state = AppState::new();
    state.insert("nb", NotebookHandle::spawn(nb, None).unwrap());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(branchbook_service::serve(listener, state));
    format!("http://{addr}")
}

#[tokio::test]
async fn commands_and_replays() {
    let client = Client::new(&server("two_by_two.nbk.json").await, "nb");
    let cmd = Command::new(1, Op::Branch { window_id: "w3".into() });
    let first = client.command(&cmd).await.unwrap();
    assert!(matches!(first, CommandOutcome::Accepted(_)));
    assert_eq!(first.ack().new_window_id.as_deref(), Some("w7"));
    let again = client.command(&cmd).await.unwrap();
    assert_eq!(again, CommandOutcome::Replayed(first.ack().clone()));
    let snap = client.snapshot().await.unwrap();
    assert_eq!(snap.server_seq, first.ack().server_seq);
}

#[tokio::test]
async fn service_errors_are_structured() {
    let base = server("two_by_two.nbk.json").await;
    let err = Client::new(&base, "missing").snapshot().await.unwrap_err();
    assert!(matches!(err, ClientError::Api { status: 404, ref kind, .. } if kind == "UnknownNotebook"), "{err}");
    let client = Client::new(&base, "nb");
    let err = client
        .command_json(&serde_json::json!({"op": "fly", "client_seq": 1}))
        .await
        .unwrap_err();
    assert!(matches!(err, ClientError::Api { status: 400, ref kind, .. } if kind == "UnknownOp"), "{err}");
}

#[tokio::test]
async fn follow_tracks_the_server() {
    let client = Client::new(&server("knn_branch.nbk.json").await, "nb");
    let mut replicas = Box::pin(client.follow().await.unwrap());
    let ack = client.command(&Command::new(1, Op::ExecuteAll)).await.unwrap();
    client.command(&Command::new(2, Op::MoveWindow { window_id: "w8".into(), x: 1, y: 2 })).await.unwrap();
    // replaying seq 2 answers after the queued run and the move are done
    let target = client.command(&Command::new(2, Op::ExecuteAll)).await.unwrap();
    assert!(matches!(target, CommandOutcome::Replayed(_)));
    let target = client.snapshot().await.unwrap().server_seq;
    assert!(target > ack.ack().server_seq);
    let latest = tokio::time::timeout(Duration::from_secs(10), async {
        loop {
            let r = replicas.next().await.unwrap().unwrap();
            if r.server_seq == target {
                return r;
            }
        }
    })
    .await
    .unwrap();
    assert_eq!(latest.snapshot(), client.snapshot().await.unwrap());
    assert_eq!(latest.results.outputs("w8").len(), 6);
    assert_eq!(latest.layout["w8"].x, 1);
}

#[tokio::test]
async fn results_and_telemetry() {
    let client = Client::new(&server("two_by_two.nbk.json").await, "nb");
    client.command(&Command::new(1, Op::ExecuteAll)).await.unwrap();
    // a replay answers only after the run it follows has finished
    client.command(&Command::new(1, Op::ExecuteAll)).await.unwrap();
    let csv = String::from_utf8(client.results(ExportFormat::Csv).await.unwrap()).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.ends_with("3,w6,Sum,s0=1;s2=1,0,ok,24\n"));
    let n = client
        .telemetry(&[Event::scroll(10, 3), Event::scroll(20, -2)])
        .await
        .unwrap();
    assert_eq!(n, 2);
    let err = client.telemetry(&[Event::scroll(5, 1)]).await.unwrap_err();
    assert!(matches!(err, ClientError::Api { status: 400, .. }));
}
