use ftg_core::kge::ModelKind;
use ftg_testkit::{kge_gradcheck, surrogate_gradcheck};

const TOL: f64 = 1e-4;

#[test]
fn kge_gradients_match_central_differences() {
    for kind in ModelKind::ALL {
        for seed in [1, 2, 3] {
            let err = kge_gradcheck(kind, seed);
            assert!(err <= TOL, "{kind} seed {seed}: relative error {err:e}");
        }
    }
}

#[test]
fn surrogate_gradients_match_central_differences() {
    for seed in [1, 2, 3] {
        let err = surrogate_gradcheck(seed);
        assert!(err <= TOL, "seed {seed}: relative error {err:e}");
    }
}
