//! Prints a few generated glyphs as ASCII art.

use glyphsim::dataset::synth::{generate, SynthConfig};
use glyphsim::dataset::Split;

fn main() {
    let cfg = SynthConfig {
        supervised_scripts: 2,
        unsupervised_scripts: 0,
        evaluation_families: 1,
        chars_per_script: 3,
        instances_per_class: 2,
        ..Default::default()
    };
    let s = generate(&cfg).expect("synthetic corpus");
    let ds = s.corpus.get(Split::Evaluation).expect("evaluation split");
    for g in ds.glyphs.iter().step_by(3).take(4).chain(s.probe.glyphs.iter().step_by(24)) {
        println!("{} class {} instance {}", g.script_id, g.class_id, g.instance_id);
        for y in (0..105).step_by(3) {
            let row: String = (0..105)
                .step_by(2)
                .map(|x| if g.pixels.get(x, y) || g.pixels.get(x, y + 1) { '#' } else { '.' })
                .collect();
            println!("{row}");
        }
    }
}
