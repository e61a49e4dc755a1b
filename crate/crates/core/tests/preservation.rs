use gossipscope::{check_preservation, CallType, Direction, ExpectedPreorder, Fragment, IndexConfig, PreservationQuery};

fn sweep(fragment: Fragment, eligible: impl Fn(CallType, CallType) -> bool) -> usize {
    let order = ExpectedPreorder::for_agents(3);
    let cfg = IndexConfig::default();
    let mut checked = 0;
    for left in CallType::all() {
        for right in CallType::all() {
            if left == right || !order.included(left, right) || !eligible(left, right) {
                continue;
            }
            let q = PreservationQuery { left, right, fragment, n: 3, bound: 3, samples: 40, seed: 11 };
            let r = check_preservation(&q, &cfg).unwrap();
            assert!(r.violations.is_empty(), "{left} vs {right}: {:?}", r.violations.first());
            checked += 1;
        }
    }
    checked
}

#[test]
fn positive_literals_survive_finer_types_of_equal_direction() {
    assert!(sweep(Fragment::L1Plus, |l, r| l.direction == r.direction) > 0);
}

#[test]
fn atomic_formulas_survive_finer_pushpull_types() {
    assert!(sweep(Fragment::L2Plus, |l, _| l.direction == Direction::PushPull) > 0);
}
