mod common;

use proptest::prelude::*;
use rand::Rng;

use hoi_core::event::{check_validity, EventState, Field, FieldStatus, FieldValue, Hand, Origin, Provenance};

use common::{lost_locks, random_ontology, random_value, rng};

fn origin(rng: &mut impl Rng) -> Origin {
    [Origin::Human, Origin::Machine, Origin::Oracle][rng.gen_range(0..3)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn random_write_sequences_keep_every_invariant(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let ont = random_ontology(&mut rng);
        let t_s = rng.gen_range(0..100);
        let mut state = EventState::new(Hand::Left, t_s, t_s + rng.gen_range(0..40)).unwrap();
        for step in 0..60 {
            let field = Field::ALL[rng.gen_range(0..5)];
            let origin = origin(&mut rng);
            let prov = Provenance::new(origin, step);
            let next = match rng.gen_range(0..3) {
                0 => {
                    let value = random_value(&mut rng, field, &state, &ont);
                    state.set_field(field, value, prov, &ont)
                }
                1 => state.confirm_field(field, prov),
                _ => state.clear_field(field),
            };
            let Ok(next) = next else { continue };
            for f in Field::ALL {
                // locks never fall away
                prop_assert!(!state.is_locked(f) || next.is_locked(f));
                // locked iff confirmed
                prop_assert_eq!(next.is_locked(f), next.status(f) == FieldStatus::Confirmed);
            }
            if !origin.confirms() {
                prop_assert_eq!(lost_locks(&state, &next), 0);
            }
            let locks = next.lock_set();
            let locked = |f: Field| next.is_locked(f).then(|| next.value(f)).flatten();
            prop_assert_eq!(locks.t_s.map(FieldValue::Frame), locked(Field::Start));
            prop_assert_eq!(locks.t_o.map(FieldValue::Frame), locked(Field::Onset));
            prop_assert_eq!(locks.t_e.map(FieldValue::Frame), locked(Field::End));
            prop_assert_eq!(locks.verb.map(FieldValue::Verb), locked(Field::Verb));
            prop_assert_eq!(locks.has_noun, locked(Field::Noun).and_then(FieldValue::noun).map(|n| n.has_noun()));
            prop_assert!(check_validity(&next.partial(), &ont).is_valid());
            state = next;
        }
    }

    #[test]
    fn machine_writes_to_confirmed_fields_fail(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let ont = random_ontology(&mut rng);
        let mut state = EventState::new(Hand::Right, 10, 50).unwrap();
        for f in Field::ALL {
            if rng.gen_bool(0.5) {
                let value = random_value(&mut rng, f, &state, &ont);
                if let Ok(s) = state.set_field(f, value, Provenance::human(1), &ont) {
                    state = s;
                }
            }
        }
        for f in Field::ALL.into_iter().filter(|&f| state.is_locked(f)) {
            let value = random_value(&mut rng, f, &state, &ont);
            prop_assert!(state.set_field(f, value, Provenance::machine(2), &ont).is_err());
            prop_assert!(state.clear_field(f).is_err());
            prop_assert!(state.confirm_field(f, Provenance::machine(2)).is_err());
        }
    }
}
