//! Uploads over a real loopback socket.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dori::crc::crc16;
use dori::gateway::{Archive, Gateway, GatewayServer, TcpSink};
use dori::nodes::storage::SdCard;
use dori::scenario::Scenario;
use dori::sim::{run_scenario, GatewayTarget, SimOptions, UploadOutcome};
use dori::uplink::{upload_log, LinkFault, MainModem, UploadResult, UploadSession};

fn server() -> GatewayServer {
    GatewayServer::bind("127.0.0.1:0", Gateway::new(Archive::in_memory())).unwrap()
}

#[test]
fn one_megabyte_file_is_acked_and_archived() {
    let srv = server();
    let mut body = vec![0u8; 1 << 20];
    ChaCha8Rng::seed_from_u64(7).fill_bytes(&mut body);
    let mut sd = SdCard::new(2 << 20);
    sd.write("BIG.BIN", body.clone()).unwrap();

    let mut sink = TcpSink::new(srv.local_addr());
    let modem = MainModem::new(1e6, 0);
    let mut session = UploadSession::new("BIG.BIN", &body);
    let got = upload_log(&mut session, &mut sd, &modem, &mut sink, LinkFault::default(), 0).unwrap();
    assert_eq!(got, UploadResult::Acked { crc: crc16(&body) });
    assert!(sd.read("BIG.BIN").is_none());

    let gw = srv.gateway();
    let gw = gw.lock().unwrap();
    let stored = gw.archive().get("BIG.BIN").unwrap();
    assert_eq!(stored.crc, crc16(&body));
    assert_eq!(stored.bytes, body);
    drop(gw);
    srv.shutdown();
}

#[test]
fn cut_link_stores_nothing_and_keeps_the_file() {
    let srv = server();
    let body = b"partial upload body".to_vec();
    let mut sd = SdCard::new(1024);
    sd.write("LOG0.BIN", body.clone()).unwrap();
    let mut sink = TcpSink::new(srv.local_addr());
    let fault = LinkFault {
        cut_after: Some(12),
        ..LinkFault::default()
    };
    let mut session = UploadSession::new("LOG0.BIN", &body);
    assert!(upload_log(&mut session, &mut sd, &MainModem::new(1e6, 0), &mut sink, fault, 0).is_err());
    assert_eq!(sd.read("LOG0.BIN"), Some(&body[..]));
    let got = upload_log(
        &mut session,
        &mut sd,
        &MainModem::new(1e6, 0),
        &mut sink,
        LinkFault::default(),
        0,
    );
    assert!(matches!(got, Ok(UploadResult::Acked { .. })));
    assert_eq!(srv.gateway().lock().unwrap().archive().len(), 1);
}

#[test]
fn scenario_uploads_through_tcp_gateway() {
    let srv = server();
    let scenario = Scenario::load(format!(
        "{}/scenarios/upload_corruption.json",
        env!("CARGO_MANIFEST_DIR")
    ))
    .unwrap();
    let opts = SimOptions {
        gateway: GatewayTarget::Tcp(format!("tcp://{}", srv.local_addr())),
        ..SimOptions::default()
    };
    let (_, report) = run_scenario(scenario, opts).unwrap();
    assert!(report.ok(), "{:?}", report.violations);
    assert!(matches!(
        report.uploads[0].outcome,
        Some(UploadOutcome::ChecksumMismatch { .. })
    ));
    let last = report.uploads.last().unwrap();
    let Some(UploadOutcome::Acked { crc }) = last.outcome else {
        panic!("{last:?}")
    };
    let gw = srv.gateway();
    let gw = gw.lock().unwrap();
    let stored = gw.archive().get(last.file.as_ref().unwrap()).unwrap();
    assert_eq!(stored.crc, crc);
    assert!(stored.verify());
}
