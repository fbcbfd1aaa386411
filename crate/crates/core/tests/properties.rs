use std::collections::BTreeSet;
use std::net::Ipv4Addr;

use proptest::prelude::*;
use smartap_core::addr::{derive_bssid, ApId, Channel, MacAddr};
use smartap_core::agent::AgentCore;
use smartap_core::assignment::{compute_assignment, Assignment};
use smartap_core::lvap::Lvap;
use smartap_core::matrix::{AttenuationMatrix, Cell};
use smartap_core::params::Parameters;
use smartap_core::protocol::{decode, encode, DecodeError};
use smartap_core::radio::{MobilityTrack, Position, RadioEnv, RadioModel, StationSite};
use smartap_core::smooth_rssi;
use smartap_core::testing;

fn ap(n: u8) -> ApId {
    ApId::new(Ipv4Addr::new(10, 0, 0, n), MacAddr([2, 0, 0, 0, 0, n]))
}

fn sta(n: u8) -> MacAddr {
    MacAddr([0, 0x55, 0, 0, 0, n])
}

proptest! {
    #[test]
    fn codec_round_trip(msg in testing::control_message()) {
        let bytes = encode(&msg).unwrap();
        let (back, used) = decode(&bytes).unwrap();
        prop_assert_eq!(used, bytes.len());
        prop_assert_eq!(back, msg);
    }

    #[test]
    fn every_strict_prefix_needs_more(msg in testing::control_message()) {
        let bytes = encode(&msg).unwrap();
        for cut in [0, 1, 3, 4, bytes.len() / 2, bytes.len() - 1] {
            let is_incomplete = matches!(decode(&bytes[..cut]), Err(DecodeError::Incomplete { .. }));
            prop_assert!(is_incomplete);
        }
    }

    #[test]
    fn concatenated_stream_decodes_in_order(msgs in testing::message_stream()) {
        let mut buf = Vec::new();
        for m in &msgs {
            buf.extend(encode(m).unwrap());
        }
        let mut at = 0;
        let mut out = Vec::new();
        while at < buf.len() {
            let (m, n) = decode(&buf[at..]).unwrap();
            out.push(m);
            at += n;
        }
        prop_assert_eq!(out, msgs);
    }

    #[test]
    fn random_bodies_never_panic(body in proptest::collection::vec(any::<u8>(), 0..64)) {
        let mut buf = (body.len() as u32).to_be_bytes().to_vec();
        buf.extend(&body);
        let _ = decode(&buf);
    }

    #[test]
    fn smoothing_stays_between_inputs(alpha in 0.0f64..=1.0, new in -120.0f64..0.0, hist in -120.0f64..0.0) {
        let s = smooth_rssi(alpha, new, hist);
        prop_assert!(s >= new.min(hist) - 1e-9 && s <= new.max(hist) + 1e-9);
    }

    #[test]
    fn rssi_is_clamped_and_reproducible(seed in any::<u64>(), x in 0.0f64..200.0, y in 0.0f64..200.0, t in 0.0f64..1000.0) {
        let model = RadioModel { rng_seed: seed, noise_sigma: 8.0, ..RadioModel::default() };
        let make = || {
            let mut env = RadioEnv::new(200.0, 200.0, model.clone()).unwrap();
            env.add_ap(ap(1), Position::new(0.0, 0.0)).unwrap();
            env.add_station(StationSite::new(sta(1), MobilityTrack::stationary(Position::new(x, y)))).unwrap();
            env
        };
        let ch = Channel::new(1).unwrap();
        let a = make().rssi_at(ap(1).ip, sta(1), ch, t).unwrap().unwrap();
        let b = make().rssi_at(ap(1).ip, sta(1), ch, t).unwrap().unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
        prop_assert!((model.rssi_floor..=model.rssi_ceiling).contains(&a));
    }

    #[test]
    fn rssi_non_increasing_in_distance_without_noise(d1 in 0.0f64..150.0, d2 in 0.0f64..150.0) {
        let model = RadioModel { noise_sigma: 0.0, ..RadioModel::default() };
        let (near, far) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let mut env = RadioEnv::new(200.0, 10.0, model).unwrap();
        env.add_ap(ap(1), Position::new(0.0, 0.0)).unwrap();
        env.add_station(StationSite::new(sta(1), MobilityTrack::stationary(Position::new(near, 0.0)))).unwrap();
        env.add_station(StationSite::new(sta(2), MobilityTrack::stationary(Position::new(far, 0.0)))).unwrap();
        let ch = Channel::new(6).unwrap();
        let a = env.rssi_at(ap(1).ip, sta(1), ch, 0.0).unwrap().unwrap();
        let b = env.rssi_at(ap(1).ip, sta(2), ch, 0.0).unwrap().unwrap();
        prop_assert!(a >= b);
    }

    #[test]
    fn bssid_survives_any_command_sequence(ops in proptest::collection::vec((0u8..3, 1u8..4, 1u8..4), 0..40)) {
        // op 0: add on agent a, op 1: remove from agent a, op 2: move between a and b
        let mut agents: Vec<AgentCore> = (1..=3).map(|n| AgentCore::new(ap(n), Channel::new(1).unwrap())).collect();
        let s = sta(7);
        for (op, a, b) in ops {
            let (a, b) = (a as usize - 1, b as usize - 1);
            match op {
                0 => agents[a].handle_add_lvap(Lvap::new(s, "x", ap(a as u8 + 1))).unwrap(),
                1 => { agents[a].handle_remove_lvap(s); }
                _ => {
                    if let Some(l) = agents[a].lvaps().get(s).cloned() {
                        agents[b].handle_add_lvap(l.moved_to(ap(b as u8 + 1))).unwrap();
                        if a != b { agents[a].handle_remove_lvap(s); }
                    }
                }
            }
            for ag in &agents {
                prop_assert!(ag.lvaps().iter().filter(|l| l.sta_mac == s).count() <= 1);
                if let Some(l) = ag.lvaps().get(s) {
                    prop_assert_eq!(l.bssid, derive_bssid(s));
                }
            }
        }
    }

    #[test]
    fn matrix_retains_only_fresh_cells(limit in 1u32..5, rounds in proptest::collection::vec(proptest::collection::btree_set(1u8..5, 0..4), 1..12)) {
        let mut m = AttenuationMatrix::new();
        for (i, seen) in rounds.iter().enumerate() {
            let reports: Vec<_> = [1u8, 2].iter().map(|&a| smartap_core::ScanReport {
                ap: ap(a),
                channel: Channel::new(1).unwrap(),
                timestamp: i as f64,
                observations: seen.iter().map(|&s| smartap_core::Observation {
                    sta_mac: sta(s),
                    raw_rssi: -50.0 - s as f64,
                    stats: smartap_core::StaStats::synthesize(sta(s), -50.0, 10.0, 0.0, 0.06),
                }).collect(),
            }).collect();
            m = m.updated(&reports, 0.5, limit, i as f64);
            for (_, s, c) in m.cells() {
                prop_assert!(c.staleness < limit);
                if seen.contains(&s.0[5]) {
                    prop_assert_eq!(c.staleness, 0);
                }
            }
        }
    }

    #[test]
    fn assignment_is_pure_and_total(
        rssi in proptest::collection::vec(-95.0f64..-30.0, 12),
        hosts in proptest::collection::vec(0usize..3, 4),
        beta in 0.0f64..10.0,
        hysteresis in 0.0f64..10.0,
    ) {
        let mut m = AttenuationMatrix::new();
        for s in 0..4u8 {
            for a in 0..3u8 {
                m.insert(ap(a + 1), sta(s + 1), Cell { smoothed_rssi: rssi[(s * 3 + a) as usize], staleness: 0 });
            }
        }
        let current: Assignment = hosts.iter().enumerate().map(|(s, &a)| (sta(s as u8 + 1), ap(a as u8 + 1))).collect();
        let params = Parameters { load_penalty_beta: beta, hysteresis, ..Parameters::default() };
        let one = compute_assignment(&m, &current, &params);
        let two = compute_assignment(&m, &current, &params);
        prop_assert_eq!(&one, &two);
        prop_assert_eq!(one.assignment.len(), 4);
        let stations: BTreeSet<_> = one.handoffs.iter().map(|h| h.sta_mac).collect();
        prop_assert_eq!(stations.len(), one.handoffs.len());
        for h in &one.handoffs {
            prop_assert_ne!(h.source, h.target);
            prop_assert_eq!(one.assignment.host(h.sta_mac), Some(h.target));
        }
    }
}
