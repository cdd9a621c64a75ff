use std::time::Duration;

use interpmi_core::bus::tcp::{TcpBusClient, TcpBusServer};
use interpmi_core::bus::{
    decode, encode, Assignment, Bus, BusMessage, ControlDirective, FrameDecoder, Payload,
    SubbandScope,
};
use interpmi_core::codebook::Rank;
use interpmi_core::csi::CsiReport;
use interpmi_core::Error;
use proptest::prelude::*;

fn report(pci: usize, ue: usize, tti: u64) -> CsiReport {
    CsiReport {
        ue,
        pci,
        tti,
        ri: Rank::Two,
        pmi: vec![3; 6],
        cqi: vec![9; 6],
        wb_cqi: 9,
        rsrp_dbm: -81.25,
        thr_mbps: 1.0,
        interf_mw: vec![1e-10, 3e-11],
        prbs: 5,
        extra: serde_json::Map::new(),
    }
}

fn ctrl(pci: usize, tti: u64) -> BusMessage {
    BusMessage::control(ControlDirective::new(
        pci,
        tti,
        "follow_pmi",
        vec![Assignment {
            ue: 1,
            ri: Rank::One,
            pmi: 12,
            subbands: SubbandScope::List(vec![0, 2]),
        }],
    ))
}

#[test]
fn wildcard_routing() {
    let bus = Bus::new();
    let all_csi = bus.subscribe("csi.>").unwrap();
    let cell3 = bus.subscribe("csi.cell.3.>").unwrap();
    let any_ue7 = bus.subscribe("csi.cell.*.ue.7").unwrap();
    let ctrl_any = bus.subscribe("ctrl.cell.*").unwrap();

    bus.publish(BusMessage::csi(report(3, 7, 1))).unwrap();
    bus.publish(BusMessage::csi(report(4, 7, 1))).unwrap();
    bus.publish(BusMessage::csi(report(3, 8, 1))).unwrap();
    assert_eq!(bus.publish(ctrl(3, 1)).unwrap(), 1);

    let subjects = |s: &interpmi_core::bus::Subscription| {
        s.drain().into_iter().map(|m| m.subject).collect::<Vec<_>>()
    };
    assert_eq!(
        subjects(&all_csi),
        ["csi.cell.3.ue.7", "csi.cell.4.ue.7", "csi.cell.3.ue.8"]
    );
    assert_eq!(subjects(&cell3), ["csi.cell.3.ue.7", "csi.cell.3.ue.8"]);
    assert_eq!(subjects(&any_ue7), ["csi.cell.3.ue.7", "csi.cell.4.ue.7"]);
    assert_eq!(subjects(&ctrl_any), ["ctrl.cell.3"]);
}

#[test]
fn mismatched_payload_is_rejected() {
    let bus = Bus::new();
    let mut m = BusMessage::csi(report(3, 7, 1));
    m.subject = "csi.cell.4.ue.7".into();
    assert!(bus.publish(m).is_err());
    let mut m = ctrl(2, 1);
    m.subject = "csi.cell.2.ue.0".into();
    assert!(bus.publish(m).is_err());
}

#[test]
fn frame_decoder_handles_arbitrary_chunking() {
    let msgs: Vec<BusMessage> = (0..20)
        .map(|i| {
            if i % 3 == 0 {
                ctrl(i, i as u64)
            } else {
                BusMessage::csi(report(i, i * 2, i as u64))
            }
        })
        .collect();
    let stream: Vec<u8> = msgs.iter().flat_map(encode).collect();
    for chunk in [1, 7, 64, stream.len()] {
        let mut dec = FrameDecoder::new();
        let got: Vec<BusMessage> = stream
            .chunks(chunk)
            .flat_map(|c| dec.push(c))
            .map(|r| r.unwrap())
            .collect();
        assert_eq!(got, msgs);
        assert_eq!(dec.pending(), 0);
        assert!(dec.finish().is_none());
    }
}

#[test]
fn unterminated_tail_is_an_error() {
    let mut dec = FrameDecoder::new();
    let line = encode(&ctrl(1, 1));
    assert!(dec.push(&line[..line.len() - 1]).is_empty());
    assert!(matches!(dec.finish(), Some(Err(Error::Decode { .. }))));
}

#[test]
fn unknown_fields_survive_a_roundtrip() {
    let line = br#"{"subject":"ctrl.cell.2","tti":5,"payload":{"pci":2,"tti":5,"agent":"x","assignments":[],"note":"keep"}}"#;
    let m = decode(line).unwrap();
    let Payload::Control(d) = &m.payload else {
        panic!("control payload expected")
    };
    assert_eq!(d.extra["note"], "keep");
    let again = decode(&encode(&m)).unwrap();
    assert_eq!(again, m);
}

#[test]
fn tcp_client_publishes_into_the_bus() {
    let bus = Bus::new();
    let local = bus.subscribe("ctrl.>").unwrap();
    let server = TcpBusServer::serve(&bus, "127.0.0.1:0").unwrap();
    let mut client = TcpBusClient::connect(server.local_addr(), "csi.>").unwrap();
    assert!(server.wait_for_subscribers(1, Duration::from_secs(5)));

    client.publish(&ctrl(5, 9)).unwrap();
    let got = local
        .recv_timeout(Duration::from_secs(5))
        .unwrap()
        .expect("directive");
    assert_eq!(got, ctrl(5, 9));

    bus.publish(BusMessage::csi(report(1, 2, 3))).unwrap();
    bus.publish(ctrl(1, 3)).unwrap();
    client
        .set_read_timeout(Some(Duration::from_secs(5)))
        .unwrap();
    let first = client.recv().unwrap().expect("report");
    assert_eq!(first.subject, "csi.cell.1.ue.2");
    client
        .set_read_timeout(Some(Duration::from_millis(200)))
        .unwrap();
    assert!(
        client.recv().unwrap().is_none(),
        "control must not reach a csi.> subscriber"
    );
    server.shutdown();
}

proptest! {
    #[test]
    fn csi_roundtrip_is_bit_exact(
        pci in 0usize..100,
        ue in 0usize..1000,
        tti in any::<u64>(),
        rsrp in -200.0f64..0.0,
        thr in 0.0f64..1e4,
        interf in proptest::collection::vec(0.0f64..1.0, 0..10),
    ) {
        let mut r = report(pci, ue, tti);
        r.rsrp_dbm = rsrp;
        r.thr_mbps = thr;
        r.interf_mw = interf;
        let m = BusMessage::csi(r);
        let back = decode(&encode(&m)).unwrap();
        let Payload::Csi(b) = &back.payload else { panic!("csi payload expected") };
        prop_assert_eq!(b.rsrp_dbm.to_bits(), rsrp.to_bits());
        prop_assert_eq!(b.thr_mbps.to_bits(), thr.to_bits());
        prop_assert_eq!(&back, &m);
    }
}
