//! The four measurement operators and the dot-product test that each
//! adjoint passes: <A x, y> = <x, A^T y>.

use spectralprior::degrade::DegradationOp;
use spectralprior::{Rng, Tensor};

fn main() -> anyhow::Result<()> {
    let shape = [3, 16, 16];
    let mut rng = Rng::new(5);
    let region = Tensor::new(&[1, 16, 16], rng.uniform_vec(256, 0.0, 1.0))?;
    let ops = [
        ("identity", DegradationOp::identity(shape)?),
        ("bernoulli mask", DegradationOp::bernoulli_mask(shape, 0.3, 1)?),
        ("region mask", DegradationOp::region_mask(shape, &region)?),
        ("downsample x4", DegradationOp::downsample(shape, 4, false)?),
    ];
    for (name, op) in ops {
        let x = Tensor::new(&op.in_shape(), rng.normal_vec(op.in_shape().iter().product()))?;
        let y = Tensor::new(&op.out_shape(), rng.normal_vec(op.out_shape().iter().product()))?;
        let lhs = op.apply(&x)?.dot(&y)?;
        let rhs = x.dot(&op.adjoint(&y)?)?;
        println!("{name:>15}: {:?} -> {:?}  <Ax,y> = {lhs:+.12}  <x,A'y> = {rhs:+.12}", op.in_shape(), op.out_shape());
    }
    Ok(())
}
