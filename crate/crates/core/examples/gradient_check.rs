//! Builds a small graph on the tape by hand, takes its reverse-mode
//! gradient and compares one coordinate against a central difference.

use spectralprior::spectral::dft2_var;
use spectralprior::{Normalization, Rng, Tape, Tensor};

fn loss_of(x: &Tensor, k: &Tensor) -> (f64, Tensor) {
    let mut tape = Tape::new();
    let xv = tape.param(x);
    let kv = tape.constant(k.clone());
    let y = tape.conv2d(xv, kv, 1, 1).unwrap();
    let y = tape.leaky_relu(y, 0.2);
    let (re, im) = dft2_var(&mut tape, y, Normalization::Unitary).unwrap();
    let re2 = tape.square(re);
    let im2 = tape.square(im);
    let power = tape.add(re2, im2).unwrap();
    let power = tape.add_scalar(power, 1e-6);
    let mag = tape.sqrt(power);
    let l = tape.sum(mag);
    let g = tape.backward(l).unwrap().get(xv).unwrap();
    (tape.value(l).item().unwrap(), g)
}

fn main() {
    let mut rng = Rng::new(1);
    let x = Tensor::new(&[2, 8, 8], rng.uniform_vec(128, -1.0, 1.0)).unwrap();
    let k = Tensor::new(&[3, 2, 3, 3], rng.uniform_vec(54, -0.5, 0.5)).unwrap();
    let (value, grad) = loss_of(&x, &k);
    println!("loss {value:.6}");
    let h = 1e-5;
    for j in [0, 17, 101] {
        let mut up = x.clone();
        up.data_mut()[j] += h;
        let mut down = x.clone();
        down.data_mut()[j] -= h;
        let numeric = (loss_of(&up, &k).0 - loss_of(&down, &k).0) / (2.0 * h);
        println!("d/dx[{j:>3}]: reverse mode {:+.8}, central difference {numeric:+.8}", grad.data()[j]);
    }
}
