mod common;

use common::{random_labels, random_tensor};
use sflpl::model::{compose, split_at, ModelVersion, SplitPoint};
use sflpl::nn::{self, softmax_cross_entropy};

fn input_for(version: ModelVersion, batch: usize, seed: u64) -> sflpl::Tensor {
    let spec = version.default_spec();
    let mut shape = vec![batch];
    shape.extend_from_slice(&spec.input_shape);
    random_tensor(&shape, seed)
}

#[test]
fn split_forward_is_bitwise_unsplit_forward() {
    for version in ModelVersion::ALL {
        let model = version.default_spec().init(11).unwrap();
        let (client, server) = split_at(&model, version.split_point()).unwrap();
        let x = input_for(version, 4, 5);
        let whole = nn::predict(&model.layers, &x).unwrap();
        let (smashed, _) = client.forward(&x).unwrap();
        let (split, _) = server.forward(&smashed).unwrap();
        assert!(split.bitwise_eq(&whole), "{version}");
    }
}

#[test]
fn split_backward_matches_unsplit_backward() {
    for version in ModelVersion::ALL {
        let spec = version.default_spec();
        let model = spec.init(3).unwrap();
        let (client, server) = split_at(&model, version.split_point()).unwrap();
        let x = input_for(version, 3, 8);
        let labels = random_labels(3, spec.num_classes, 8);

        let (logits, cache) = nn::forward(&model.layers, &x).unwrap();
        let (_, g) = softmax_cross_entropy(&logits, &labels).unwrap();
        let (full_grads, full_dx) = nn::backward(&model.layers, &cache, &g).unwrap();

        let (smashed, ccache) = client.forward(&x).unwrap();
        let (slogits, scache) = server.forward(&smashed).unwrap();
        let (_, sg) = softmax_cross_entropy(&slogits, &labels).unwrap();
        let (server_grads, cut_grad) = server.backward(&scache, &sg).unwrap();
        let (client_grads, dx) = client.backward(&ccache, &cut_grad).unwrap();

        let split_grads: Vec<_> = client_grads.into_iter().chain(server_grads).collect();
        assert_eq!(split_grads.len(), full_grads.len());
        for (a, b) in split_grads.iter().zip(&full_grads) {
            match (a, b) {
                (Some(a), Some(b)) => {
                    assert!(a.weights.max_abs_diff(&b.weights).unwrap() <= 1e-12, "{version}");
                    assert!(a.biases.max_abs_diff(&b.biases).unwrap() <= 1e-12, "{version}");
                }
                (None, None) => {}
                _ => panic!("{version}: gradient layout differs"),
            }
        }
        assert!(dx.max_abs_diff(&full_dx).unwrap() <= 1e-12);
    }
}

#[test]
fn parameters_are_conserved_and_recomposable() {
    for version in ModelVersion::ALL {
        let spec = version.default_spec();
        let model = spec.init(0).unwrap();
        let (client, server) = split_at(&model, version.split_point()).unwrap();
        assert_eq!(client.param_count() + server.param_count(), model.param_count());
        assert_eq!(
            client.learnable_count() + server.learnable_count(),
            spec.learnable_count()
        );
        assert_eq!(compose(&spec, &client, &server), model);
    }
}

#[test]
fn cut_layer_activation_shapes() {
    let cases = [
        (ModelVersion::MnistV1, vec![5, 256]),
        (ModelVersion::MnistV2, vec![5, 128]),
        (ModelVersion::EcgV1, vec![5, 16, 58]),
        (ModelVersion::EcgV2, vec![5, 32, 54]),
    ];
    for (version, expected) in cases {
        let model = version.default_spec().init(0).unwrap();
        let (client, _) = split_at(&model, version.split_point()).unwrap();
        let (smashed, _) = client.forward(&input_for(version, 5, 0)).unwrap();
        assert_eq!(smashed.shape(), expected.as_slice(), "{version}");
    }
}

#[test]
fn learnable_layer_split_counts() {
    let cases = [
        (ModelVersion::MnistV1, 2, 8),
        (ModelVersion::MnistV2, 4, 6),
        (ModelVersion::EcgV1, 2, 4),
        (ModelVersion::EcgV2, 3, 3),
    ];
    for (version, c, s) in cases {
        let model = version.default_spec().init(0).unwrap();
        let (client, server) = split_at(&model, version.split_point()).unwrap();
        assert_eq!((client.learnable_count(), server.learnable_count()), (c, s), "{version}");
    }
}

#[test]
fn degenerate_cuts_rejected() {
    let model = ModelVersion::EcgV1.default_spec().init(0).unwrap();
    for cut in [0, 6, 9] {
        assert!(matches!(
            split_at(&model, SplitPoint { cut_index: cut }),
            Err(sflpl::Error::InvalidSplit(_))
        ));
    }
}
