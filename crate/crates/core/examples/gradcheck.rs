//! Check tape gradients of small recurrent and feed-forward stacks against finite differences.
//!
//! cargo run --release --example gradcheck

use morebrac::nn::{grad_check, Activation, LayerSpec, Matrix, Network, Tape};
use morebrac::rng::rng_from;
use rand::Rng;

fn main() -> morebrac::Result<()> {
    let stacks = [
        ("affine", vec![LayerSpec::affine(3, 5), LayerSpec::activation(5, Activation::Tanh), LayerSpec::affine(5, 2)]),
        ("lstm", vec![LayerSpec::lstm(3, 4), LayerSpec::affine(4, 2)]),
        ("gru", vec![LayerSpec::gru(3, 4), LayerSpec::affine(4, 2)]),
    ];
    let mut rng = rng_from(1);
    for (name, specs) in stacks {
        let mut net = Network::new(specs, 7)?;
        let steps: Vec<Matrix> = (0..4)
            .map(|_| Matrix::from_vec(2, 3, (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect()))
            .collect::<Result<_, _>>()?;
        let target = Matrix::filled(2, 2, 0.3);
        let err = grad_check(
            &mut net,
            |n| {
                let mut tape = Tape::new();
                let mut state = n.zero_state_vars(&mut tape, 2);
                let mut y = None;
                for x in &steps {
                    let xv = tape.leaf(x.clone());
                    let (out, next) = n.forward_tape(&mut tape, xv, &state, None, false)?;
                    state = next;
                    y = Some(out);
                }
                let loss = tape.mse(y.expect("non-empty"), &target);
                Ok((tape, loss))
            },
            1e-5,
        )?;
        println!("{name:>6}: max relative error {err:.2e}");
    }
    Ok(())
}
