use larm_core::io::{read_corpus, read_log, write_corpus, write_log};
use larm_core::{InteractionEvent, Labels, SemanticCode};
use proptest::prelude::*;

fn event_strategy() -> impl Strategy<Value = InteractionEvent> {
    (
        any::<u32>(),
        any::<u32>(),
        any::<u32>(),
        any::<u32>(),
        any::<u64>(),
        any::<[bool; 6]>(),
        any::<u32>(),
    )
        .prop_map(|(u, a, s, w, t, l, ws)| InteractionEvent {
            user_id: u,
            author_id: a,
            session_id: s,
            window_index: w,
            timestamp: t,
            labels: Labels::new(l),
            watch_seconds: ws,
        })
}

proptest! {
    #[test]
    fn log_round_trips(events in prop::collection::vec(event_strategy(), 0..40)) {
        let mut buf = Vec::new();
        write_log(&mut buf, &events).unwrap();
        let back = read_log(buf.as_slice()).unwrap();
        prop_assert_eq!(back, events);
    }

    #[test]
    fn corpus_round_trips_bit_exactly(
        dim in 1usize..12,
        raw in prop::collection::vec(prop::num::f32::NORMAL | prop::num::f32::ZERO, 0..120),
    ) {
        let rows: Vec<Vec<f64>> = raw.chunks_exact(dim).map(|c| c.iter().map(|&v| v as f64).collect()).collect();
        let mut buf = Vec::new();
        write_corpus(&mut buf, dim, &rows).unwrap();
        let (d, back) = read_corpus(buf.as_slice()).unwrap();
        prop_assert_eq!(d, dim);
        prop_assert_eq!(back.len(), rows.len());
        for (a, b) in back.iter().zip(&rows) {
            for (x, y) in a.iter().zip(b) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn code_array_round_trips(c in any::<[u32; 3]>()) {
        prop_assert_eq!(SemanticCode::from_array(c).as_array(), c);
    }
}
