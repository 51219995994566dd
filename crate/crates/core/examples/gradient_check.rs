//! Reverse-mode gradients of a small conv net plus NT-Xent, checked against
//! central finite differences.
//!
//! cargo run --release --example gradient_check

use mvc::contrastive::ntxent_on;
use mvc::model::{embed_on, init_model, project_on, BackboneSpec, ConvStage, ProjectionSpec};
use mvc::numcore::gradcheck::{max_relative_error, numeric_grad, STEP};
use mvc::numcore::{Array, Tape};
use rand::Rng as _;

fn main() -> mvc::Result<()> {
    let spec = BackboneSpec {
        stages: vec![
            ConvStage { out_channels: 3, kernel: 3, stride: 1 },
            ConvStage { out_channels: 8, kernel: 3, stride: 2 },
        ],
        input_size: 8,
        batch_norm: false,
    };
    let store = init_model(&spec, &ProjectionSpec { hidden_dim: 6, out_dim: 4 }, 7)?;
    let mut r = mvc::rng::seeded(1);
    let shape = vec![4, 3, 8, 8];
    let pixels: Vec<f64> = (0..4 * 3 * 64).map(|_| r.random_range(0.0..1.0)).collect();

    let loss_of = |x: &[f64]| -> mvc::Result<(Tape, mvc::numcore::Var, mvc::numcore::Var)> {
        let mut tape = Tape::new();
        let input = tape.input(Array::new(shape.clone(), x.to_vec())?);
        let f = embed_on(&mut tape, &store, &spec, input)?;
        let z = project_on(&mut tape, &store, f)?;
        let loss = ntxent_on(&mut tape, z, 0.5)?;
        Ok((tape, input, loss))
    };

    let (tape, input, loss) = loss_of(&pixels)?;
    let analytic = tape.backward(loss)?.get(input).expect("input gradient").clone();
    let numeric = numeric_grad(|x| loss_of(x).map(|(t, _, l)| t.value(l).item()).unwrap_or(f64::NAN), &pixels, STEP);
    println!("loss {:.6}", tape.value(loss).item());
    println!("{} input coordinates, max relative error {:.2e}", pixels.len(), max_relative_error(analytic.data(), &numeric));
    Ok(())
}
