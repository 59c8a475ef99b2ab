use gradgrow::models::{AuxWeightNet, ControllerMaskNet, Model, StaticMlp};
use gradgrow::Tensor;
use proptest::prelude::*;

fn values(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, len)
}

/// A random aux-weight net with `n_max` hidden neurons, one input and one output.
fn aux_net(n_max: usize, v: &[f64]) -> AuxWeightNet {
    let (w0, rest) = v.split_at(n_max);
    let (b0, rest) = rest.split_at(n_max);
    let (w1, b1) = rest.split_at(n_max);
    AuxWeightNet::from_params(
        1,
        n_max,
        1,
        n_max as f64,
        vec![
            Tensor::scalar(0.0),
            Tensor::matrix(n_max, 1, w0.to_vec()).unwrap(),
            Tensor::vector(b0.to_vec()),
            Tensor::matrix(1, n_max, w1.to_vec()).unwrap(),
            Tensor::vector(vec![b1[0]]),
        ],
    )
    .unwrap()
}

fn inputs(xs: &[f64]) -> Tensor {
    Tensor::matrix(xs.len(), 1, xs.to_vec()).unwrap()
}

fn close(a: &Tensor, b: &Tensor, tol: f64) -> bool {
    a.shape() == b.shape()
        && a.data()
            .iter()
            .zip(b.data())
            .all(|(x, y)| (x - y).abs() <= tol)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aux_net_at_integer_size_is_the_truncated_static_net(
        n_max in 1usize..8,
        k_frac in 0.0f64..1.0,
        v in values(3 * 8 + 1),
        xs in values(6),
    ) {
        let k = ((k_frac * (n_max + 1) as f64) as usize).min(n_max);
        let mut aux = aux_net(n_max, &v);
        aux.set_size(k as f64);
        let got = aux.predict(&inputs(&xs)).unwrap();
        let want = if k == 0 {
            Tensor::matrix(xs.len(), 1, vec![v[3 * n_max]; xs.len()]).unwrap()
        } else {
            let p = aux.params();
            let static_net = StaticMlp::from_params(
                &[1, k, 1],
                vec![
                    Tensor::matrix(k, 1, p[1].data()[..k].to_vec()).unwrap(),
                    Tensor::vector(p[2].data()[..k].to_vec()),
                    Tensor::matrix(1, k, p[3].data()[..k].to_vec()).unwrap(),
                    p[4].clone(),
                ],
            )
            .unwrap();
            static_net.predict(&inputs(&xs)).unwrap()
        };
        prop_assert!(close(&got, &want, 1e-12), "{got:?} vs {want:?}");
    }

    #[test]
    fn aux_output_is_lipschitz_in_size(
        n_max in 1usize..8,
        n in -1.0f64..8.0,
        h in 1e-6f64..0.5,
        v in values(3 * 8 + 1),
        xs in values(6),
    ) {
        let mut aux = aux_net(n_max, &v);
        aux.set_size(n);
        let a = aux.predict(&inputs(&xs)).unwrap();
        aux.set_size(n + h);
        let b = aux.predict(&inputs(&xs)).unwrap();
        // |tanh| ≤ 1 and |ψ'| ≤ π/2, so each output moves at most Σ|W1|·(π/2)·h.
        let bound = aux.params()[3].data().iter().map(|w| w.abs()).sum::<f64>()
            * std::f64::consts::FRAC_PI_2
            * h;
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!((x - y).abs() <= bound + 1e-12);
        }
    }

    #[test]
    fn fully_open_controller_net_is_the_static_net_with_unit_column(
        n_max in 1usize..6,
        v in values(64),
        xs in values(5),
    ) {
        let mut cm = ControllerMaskNet::new(1, n_max, 1, 1, true).unwrap();
        let mut it = v.iter().cycle();
        for p in &mut cm.params_mut()[1..] {
            for x in p.data_mut() {
                *x = *it.next().unwrap();
            }
        }
        cm.set_controller(1.0);
        let got = cm.predict(&inputs(&xs)).unwrap();
        let static_net = StaticMlp::from_params(&[2, n_max, 1], cm.params()[1..].to_vec()).unwrap();
        let augmented: Vec<f64> = xs.iter().flat_map(|&x| [x, 1.0]).collect();
        let want = static_net
            .predict(&Tensor::matrix(xs.len(), 2, augmented).unwrap())
            .unwrap();
        prop_assert!(close(&got, &want, 1e-12), "{got:?} vs {want:?}");
    }
}
