//! Fit a linear model with the reverse-mode tape and Adam.
//!
//! cargo run --release --example autodiff_regression

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use stjgcn::optim::AdamState;
use stjgcn::{Tape, Tensor};

fn main() -> stjgcn::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = Tensor::<f64>::uniform(&[64, 3], -1.0, 1.0, &mut rng);
    let w_true = Tensor::from_f64(&[3, 1], &[2.0, -1.0, 0.5])?;
    let y = x.matmul(&w_true)?;

    let mut params = vec![Tensor::zeros(&[3, 1]), Tensor::zeros(&[1])];
    let names = vec!["w".to_string(), "b".to_string()];
    let mut adam = AdamState::new(&params, 0.05);
    for step in 0..=300 {
        let mut tape = Tape::new();
        let w = tape.param(params[0].clone());
        let b = tape.param(params[1].clone());
        let xv = tape.constant(x.clone());
        let yv = tape.constant(y.clone());
        let xw = tape.matmul(xv, w)?;
        let pred = tape.add(xw, b)?;
        let e = tape.sub(pred, yv)?;
        let sq = tape.mul(e, e)?;
        let loss = tape.mean(sq)?;
        let value = tape.value(loss).item();
        let grads = tape.backward(loss)?;
        let g = vec![grads.get(w).unwrap().clone(), grads.get(b).unwrap().clone()];
        adam.step(&mut params, &g, &names)?;
        if step % 100 == 0 {
            println!("step {step:>3}  loss {value:.3e}");
        }
    }
    println!("w = {:?}, b = {:?}", params[0].data(), params[1].data());
    Ok(())
}
