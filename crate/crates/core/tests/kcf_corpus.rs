mod common;

use descmap::kcf::{compute_kcf, verify_kcf};
use descmap::{apply_equivalence, assemble_canonical};

#[test]
fn seeded_structures_round_trip() {
    let mut failures = Vec::new();
    for seed in 0..500u64 {
        let mut rng = common::rng(1000 + seed);
        let s = common::random_structure(&mut rng);
        let (m, n) = s.dims();
        let p0 = common::conditioned(&mut rng, m, 100.0);
        let q0 = common::conditioned(&mut rng, n, 100.0);
        let pencil = apply_equivalence(&p0, &q0, &assemble_canonical(&s).unwrap(), 1e-12).unwrap();
        match compute_kcf(&pencil, 1e-10) {
            Ok(d) => {
                let r = verify_kcf(&pencil, &d);
                if !d.structure.matches(&s, 1e-6) || r.relative_residual > 1e-8 {
                    failures.push(format!("seed {seed}: {s:?} -> {:?} residual {:.2e}", d.structure, r.relative_residual));
                }
            }
            Err(e) => failures.push(format!("seed {seed}: {s:?} -> {e}")),
        }
    }
    assert!(failures.is_empty(), "{} failures:\n{}", failures.len(), failures.join("\n"));
}
