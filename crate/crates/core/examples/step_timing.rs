use std::time::Instant;

use glyphsim::dataset::synth::{generate, SynthConfig};
use glyphsim::dataset::Split;
use glyphsim::encoder::{init_encoder, EncoderConfig};
use glyphsim::glyph::Bitmap;

fn main() {
    let s = generate(&SynthConfig::default()).unwrap();
    let ds = s.corpus.get(Split::SupervisedInvented).unwrap();
    let imgs: Vec<&Bitmap> = ds.glyphs.iter().take(64).map(|g| &g.pixels).collect();
    for (w, c, d) in [([8, 16, 32, 32], 1, 64), ([16, 32, 64, 64], 1, 64), ([64, 128, 256, 256], 2, 128)] {
        let cfg = EncoderConfig { widths: w, convs_per_block: c, embedding_dim: d, ..Default::default() };
        let p = init_encoder(&cfg).unwrap();
        let net = p.network();
        let t = Instant::now();
        let _ = net.loss_and_grads(&p.tensors, &imgs, |zs| Ok((0.0, zs.to_vec()))).unwrap();
        let train = t.elapsed().as_secs_f64() / 64.0;
        let t = Instant::now();
        let _ = net.embed_batch::<f32>(&p.tensors, &imgs);
        let inf = t.elapsed().as_secs_f64() / 64.0;
        println!("{w:?} c{c}: train {:.2} ms/img, infer {:.2} ms/img", train * 1e3, inf * 1e3);
    }
}
