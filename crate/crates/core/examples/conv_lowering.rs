//! Convolution as im2col followed by a matrix product, checked against a
//! direct loop.
//!
//! ```text
//! cargo run --example conv_lowering
//! ```

use netsurgery::math::im2col;
use netsurgery::prelude::*;

fn main() -> Result<()> {
    let shape = Shape3::new(2, 5, 5);
    let spec = KernelSpec {
        in_channels: 2,
        out_channels: 3,
        kernel_h: 3,
        kernel_w: 3,
        stride: 2,
        pad: 1,
    };
    let input: Vec<f64> = (0..shape.len()).map(|i| ((i * 7) % 11) as f64 / 10.0 - 0.5).collect();
    let weights = Matrix::from_vec(
        spec.out_channels,
        spec.patch_len(),
        (0..spec.out_channels * spec.patch_len()).map(|i| ((i * 5) % 13) as f64 / 13.0 - 0.5).collect(),
    )?;

    let cols = im2col(&input, shape, &spec)?;
    let out = matmul(&weights, &cols)?;
    let o = spec.output_shape(shape)?;
    println!("patches {:?}, output {o}", cols.shape());

    let mut worst: f64 = 0.0;
    for oc in 0..spec.out_channels {
        for oy in 0..o.height {
            for ox in 0..o.width {
                let mut acc = 0.0;
                for c in 0..spec.in_channels {
                    for ky in 0..spec.kernel_h {
                        for kx in 0..spec.kernel_w {
                            let y = (oy * spec.stride + ky) as isize - spec.pad as isize;
                            let x = (ox * spec.stride + kx) as isize - spec.pad as isize;
                            if y < 0 || x < 0 || y >= shape.height as isize || x >= shape.width as isize {
                                continue;
                            }
                            let v = input[(c * shape.height + y as usize) * shape.width + x as usize];
                            let k = (c * spec.kernel_h + ky) * spec.kernel_w + kx;
                            acc += weights.get(oc, k) * v;
                        }
                    }
                }
                worst = worst.max((acc - out.get(oc, oy * o.width + ox)).abs());
            }
        }
    }
    println!("largest deviation from the direct loop: {worst:e}");
    Ok(())
}
