mod common;

use common::{gradient_error, primitive_cases, primitive_inputs, RandomGraph};
use proptest::prelude::*;
use simal_core::autodiff::{Tape, Tensor};

#[test]
fn every_primitive_matches_finite_differences() {
    for seed in 0..3 {
        let inputs = primitive_inputs(seed);
        for (name, f) in primitive_cases() {
            let err = gradient_error(&f, &inputs);
            assert!(err < 1e-4, "{name}: relative error {err:e}");
        }
    }
}

#[test]
fn rerun_is_bit_identical() {
    let g = RandomGraph::generate(11, 40);
    let inputs = g.inputs(11);
    let run = || {
        let mut t = Tape::new();
        let vars: Vec<_> = inputs.iter().map(|x| t.input(x.clone()).unwrap()).collect();
        let y = g.build(&mut t, &vars);
        let value = t.value(y).item().unwrap();
        let grads = t.backward(y).unwrap();
        let flat: Vec<u64> = vars
            .iter()
            .flat_map(|v| grads.wrt(*v).unwrap().data().to_vec())
            .map(f64::to_bits)
            .collect();
        (value.to_bits(), flat)
    };
    assert_eq!(run(), run());
}

#[test]
fn matmul_example_by_hand() {
    let mut t = Tape::new();
    let a = t.input(Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap()).unwrap();
    let b = t.input(Tensor::column(&[1.0, 1.0])).unwrap();
    let c = t.matmul(a, b).unwrap();
    assert_eq!(t.value(c).data(), &[3.0, 7.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn random_composite_graphs_match_finite_differences(seed in any::<u64>(), n in 1usize..30) {
        let g = RandomGraph::generate(seed, n);
        let inputs = g.inputs(seed);
        let f = |t: &mut Tape, v: &[simal_core::autodiff::Var]| g.build(t, v);
        let err = gradient_error(&f, &inputs);
        prop_assert!(err < 1e-4, "graph {:?}: relative error {:e}", g, err);
    }
}
