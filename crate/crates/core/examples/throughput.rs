//! Measures encoder forward/backward throughput for a few widths.

use std::time::Instant;

use glyphsim::encoder::{init_encoder, EncoderConfig};
use glyphsim::glyph::Bitmap;

fn main() {
    let mut img = Bitmap::blank();
    for i in 15..90 {
        img.set(i, i, true);
        img.set(104 - i, i, true);
    }
    let images: Vec<&Bitmap> = (0..32).map(|_| &img).collect();
    for (widths, convs) in [([8, 16, 32, 32], 1), ([16, 32, 64, 64], 1), ([8, 16, 32, 32], 2), ([64, 128, 256, 256], 2)] {
        let cfg = EncoderConfig { embedding_dim: 64, widths, convs_per_block: convs, ..Default::default() };
        let p = init_encoder(&cfg).unwrap();
        let net = p.network();
        let t = Instant::now();
        let _ = net.embed_batch::<f32>(&p.tensors, &images);
        let fwd = t.elapsed().as_secs_f64() / 32.0;
        let t = Instant::now();
        let _ = net
            .loss_and_grads::<f32, _>(&p.tensors, &images, |zs| Ok((0.0, zs.to_vec())))
            .unwrap();
        let train = t.elapsed().as_secs_f64() / 32.0;
        println!("{widths:?}x{convs}: params {} infer {:.2} ms/img, train {:.2} ms/img", p.num_parameters(), fwd * 1e3, train * 1e3);
    }
}
