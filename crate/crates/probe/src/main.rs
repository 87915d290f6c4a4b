use std::time::Instant;
use toast_core::surface;
use toast_core::typecheck::{typecheck, VarEnv};

fn main() {
    let text = std::fs::read_to_string("corpus/message_throttling.toast").unwrap();
    let (file, diags) = surface::parse(&text);
    assert!(diags.is_empty(), "{diags:?}");
    let item = file.item_named("ThrottleSr").unwrap();
    let resolved = file.resolve_item(item).unwrap();
    for round in 0..3 {
        let t0 = Instant::now();
        let report = typecheck(
            &VarEnv::empty(),
            &resolved.theta,
            &resolved.process,
            &resolved.delta,
            &resolved.bindings,
        );
        eprintln!("round {round}: accepted={} in {:?}", report.accepted, t0.elapsed());
    }
}
