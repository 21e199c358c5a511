mod primitives;

use primitives::{worst, TOL};

fn check(name: &str, trial: primitives::Trial) {
    let e = worst(name, trial);
    assert!(e < TOL, "{name}: max relative error {e:e}");
}

#[test]
fn matmul_both_sides() {
    check("matmul", primitives::matmul_both_sides);
}

#[test]
fn elementwise_binary() {
    check("elementwise", primitives::elementwise_binary);
}

#[test]
fn scale_and_add_row() {
    check("add_row", primitives::scale_and_add_row);
}

#[test]
fn transpose_concat_slice_reshape() {
    check("structural", primitives::transpose_concat_slice_reshape);
}

#[test]
fn softmax_and_log_softmax() {
    check("softmax", primitives::softmax_and_log_softmax);
}

#[test]
fn pointwise_activations() {
    check("activations", primitives::pointwise_activations);
}

#[test]
fn layer_norm_all_inputs() {
    check("layer_norm", primitives::layer_norm_all_inputs);
}

#[test]
fn embedding_lookup() {
    check("embedding", primitives::embedding_lookup);
}

#[test]
fn dropout_training_mode() {
    check("dropout", primitives::dropout_training_mode);
}

#[test]
fn gru_step_every_input() {
    check("gru", primitives::gru_step_every_input);
}

#[test]
fn conv1d_input_and_kernel() {
    check("conv1d", primitives::conv1d_input_and_kernel);
}

#[test]
fn cross_entropy_with_padding() {
    check("cross_entropy", primitives::cross_entropy_with_padding);
}

#[test]
fn sum_and_mean() {
    check("reductions", primitives::sum_and_mean);
}

#[test]
fn random_three_layer_composition() {
    check("mlp", primitives::random_three_layer_composition);
}

#[test]
fn table_lists_every_trial() {
    assert_eq!(primitives::ALL.len(), 14);
}
